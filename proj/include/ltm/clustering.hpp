#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ltm/bridged_islands.hpp"
#include "ltm/dataset.hpp"
#include "ltm/error.hpp"
#include "ltm/inference.hpp"
#include "ltm/learning.hpp"
#include "ltm/model.hpp"

namespace ltm {

struct UnidimensionalModel {
  ScoredModel fitted;
  std::string designated;            // the clustering variable
  std::vector<std::string> features;  // latents used as features of the designated variable
  double baseline_bic = kNegInf;     // every latent a feature, before the toggle search
};

namespace detail {

// Designated latent `z` over the flat model's latents: feature latents keep
// their sibling clusters and hang below z; a bypassed latent is dropped and
// its sibling cluster attaches to z directly.
inline LatentTreeModel feature_structure(const LatentTreeModel& flat, const std::string& z,
                                         int z_card, const std::vector<char>& is_feature) {
  TreeStructure s;
  s.add_node(latent_variable(z, z_card));
  const auto adj = flat.structure.adjacency();
  const auto latents = flat.latent_nodes();
  for (std::size_t k = 0; k < latents.size(); ++k) {
    const int y = latents[k];
    int host = 0;
    if (is_feature[k]) {
      host = s.add_node(flat.variable(y));
      s.add_edge(0, host);
    }
    for (int w : adj[y])
      if (flat.variable(w).observed()) s.add_edge(host, s.add_node(flat.variable(w)));
  }
  return make_model(std::move(s), 0);
}

}  // namespace detail

// LTM-based unidimensional clustering: a flat model learned by bridged
// islands supplies sibling clusters; a designated latent Z is placed above
// the flat latents, each of which is kept as a feature or bypassed by a
// greedy BIC-guided toggle, and Z's cardinality is selected by BIC.
inline UnidimensionalModel build_unidimensional_model(const WeightedDataset& data,
                                                      const LearnConfig& cfg) {
  cfg.check();
  if (data.num_variables() < 3)
    throw DataError("unidimensional clustering needs at least three observed variables");
  const auto flat = learn_bi(data, cfg).model;
  const auto latents = flat.latent_nodes();
  auto taken = data.names();
  for (int y : latents) taken.push_back(flat.variable(y).name);
  int counter = 0;
  const std::string z = std::find(taken.begin(), taken.end(), "Z") == taken.end()
                            ? std::string("Z")
                            : fresh_name("Z", counter, taken);

  auto evaluate = [&](const std::vector<char>& features, int card) -> ScoredModel {
    auto m = detail::feature_structure(flat, z, card, features);
    if (!validate(m.structure).empty() || card > cardinality_cap(m, 0, cfg)) return {};
    for (int v : m.latent_nodes())
      if (v != 0 && m.cardinality(v) > max_regular_cardinality(m, v)) return {};
    return fit_scored(m, data, cfg.em);
  };
  // Increments Z's cardinality while BIC improves.
  auto search_card = [&](const std::vector<char>& features, ScoredModel best, int card) {
    for (;;) {
      auto next = evaluate(features, card + 1);
      if (!(next.bic > best.bic)) return std::pair{best, card};
      best = std::move(next);
      ++card;
    }
  };

  std::vector<char> features(latents.size(), latents.size() >= 2 ? 1 : 0);
  int card = 2;
  ScoredModel best = evaluate(features, card);
  if (best.bic == kNegInf) {
    std::fill(features.begin(), features.end(), 0);
    best = evaluate(features, card);
  }
  std::tie(best, card) = search_card(features, best, card);
  UnidimensionalModel out;
  out.baseline_bic = best.bic;

  // Toggle order: latents most informative about Z first.
  std::vector<std::pair<double, std::size_t>> order;
  {
    const auto mu = node_marginals(best.model);
    for (std::size_t k = 0; k < latents.size(); ++k) {
      double mi = 0.0;
      const int y = best.model.index_of(flat.variable(latents[k]).name);
      if (y >= 0)
        mi = mutual_information(pairwise_joint(best.model, 0, y, mu), best.model.cardinality(0),
                                best.model.cardinality(y));
      order.emplace_back(-mi, k);
    }
    std::stable_sort(order.begin(), order.end());
  }
  for (auto [neg_mi, k] : order) {
    auto trial = features;
    trial[k] = !trial[k];
    auto candidate = evaluate(trial, card);
    if (candidate.bic > best.bic) {
      best = std::move(candidate);
      features = std::move(trial);
    }
  }
  std::tie(best, card) = search_card(features, best, card);

  out.fitted = std::move(best);
  out.designated = z;
  for (std::size_t k = 0; k < latents.size(); ++k)
    if (features[k]) out.features.push_back(flat.variable(latents[k]).name);
  return out;
}

struct Partition {
  std::string source;
  std::vector<std::vector<double>> posteriors;  // per dataset row
  std::vector<int> labels;                      // posterior mode per row
  std::vector<std::int64_t> weights;            // row weights
};

// One soft partition per selected latent (all latents when `latents` is
// empty), one entry per distinct dataset row.
inline std::vector<Partition> extract_partitions(const LatentTreeModel& m,
                                                 const WeightedDataset& data,
                                                 std::span<const std::string> latents = {}) {
  std::vector<int> targets;
  if (latents.empty()) {
    targets = m.latent_nodes();
  } else {
    for (const auto& name : latents) {
      const int v = m.require(name);
      if (!m.variable(v).latent()) throw ModelError("'" + name + "' is not latent");
      targets.push_back(v);
    }
  }
  const auto nodes = bind_columns(m, data);
  std::vector<Partition> out(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    out[t].source = m.variable(targets[t]).name;
    out[t].weights.assign(data.weights().begin(), data.weights().end());
  }
  TreePropagator prop(m);
  std::vector<int> evidence(m.size());
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    fill_evidence(data, nodes, r, evidence);
    if (prop.propagate(evidence) == kNegInf)
      throw NumericError("row " + std::to_string(r) + " has zero probability");
    prop.downward();
    for (std::size_t t = 0; t < targets.size(); ++t) {
      auto post = prop.posterior(targets[t]);
      out[t].labels.push_back(
          static_cast<int>(std::max_element(post.begin(), post.end()) - post.begin()));
      out[t].posteriors.push_back(std::move(post));
    }
  }
  return out;
}

struct PartitionProfile {
  std::string latent;
  std::vector<double> shares;  // prior probability of each state
  // Per observed variable: P(variable = value | latent = state), row-major
  // |latent| x |variable|.
  std::vector<std::pair<std::string, std::vector<double>>> conditionals;
};

// Exact per-state profile of a latent over the observed variables below it
// (or all observed variables when it is the root), strongest first, at most
// `cap` of them.
inline PartitionProfile describe_partition(const LatentTreeModel& m, std::string_view latent,
                                           std::size_t cap = 10) {
  const int z = m.require(latent);
  if (!m.variable(z).latent()) throw ModelError("'" + std::string(latent) + "' is not latent");
  const auto mu = node_marginals(m);
  PartitionProfile out;
  out.latent = m.variable(z).name;
  out.shares = mu[z];
  const auto children = m.children();
  std::vector<int> below;
  std::vector<int> stack = {z};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (m.variable(v).observed()) below.push_back(v);
    for (int c : children[v]) stack.push_back(c);
  }
  std::sort(below.begin(), below.end());
  const int k = m.cardinality(z);
  std::vector<std::pair<double, std::pair<std::string, std::vector<double>>>> rows;
  for (int w : below) {
    auto joint = pairwise_joint(m, z, w, mu);
    const int cw = m.cardinality(w);
    double spread = 0.0;
    for (int s = 0; s < k; ++s)
      for (int x = 0; x < cw; ++x) {
        joint[s * cw + x] = mu[z][s] > 0.0 ? joint[s * cw + x] / mu[z][s] : 0.0;
        for (int t = 0; t < s; ++t)
          spread = std::max(spread, std::abs(joint[s * cw + x] - joint[t * cw + x]));
      }
    rows.push_back({spread, {m.variable(w).name, std::move(joint)}});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  if (rows.size() > cap) rows.resize(cap);
  for (auto& [spread, row] : rows) out.conditionals.push_back(std::move(row));
  return out;
}

// Text table: state shares, then one row per variable value.
inline void write_profile(std::ostream& out, const LatentTreeModel& m, const PartitionProfile& p) {
  const auto flags = out.flags();
  const auto precision = out.precision();
  const std::size_t k = p.shares.size();
  out << std::fixed << std::setprecision(2) << std::left << std::setw(16) << "";
  for (std::size_t s = 0; s < k; ++s) out << std::setw(9) << ("s" + std::to_string(s));
  out << '\n' << std::setw(16) << p.latent;
  for (double share : p.shares) {
    std::ostringstream cell;
    cell << std::fixed << std::setprecision(2) << '(' << share << ')';
    out << std::setw(9) << cell.str();
  }
  out << '\n';
  for (const auto& [name, table] : p.conditionals) {
    const int cw = m.cardinality(m.require(name));
    // Binary variables show the probability of state 1 only.
    for (int x = cw == 2 ? 1 : 0; x < cw; ++x) {
      out << std::setw(16) << (cw == 2 ? name : name + "=" + std::to_string(x));
      for (std::size_t s = 0; s < k; ++s) out << std::setw(9) << table[s * cw + x];
      out << '\n';
    }
  }
  out.flags(flags);
  out.precision(precision);
}

namespace detail {

inline std::map<std::pair<int, int>, double> contingency(std::span<const int> a,
                                                         std::span<const int> b,
                                                         std::span<const std::int64_t> weights) {
  if (a.size() != b.size()) throw DataError("label sequences differ in length");
  if (!weights.empty() && weights.size() != a.size())
    throw DataError("weights differ in length from labels");
  std::map<std::pair<int, int>, double> table;
  for (std::size_t i = 0; i < a.size(); ++i)
    table[{a[i], b[i]}] += weights.empty() ? 1.0 : static_cast<double>(weights[i]);
  return table;
}

}  // namespace detail

// MI(a, b) / sqrt(H(a) H(b)); 0 when either labelling is constant.
inline double normalized_mutual_information(std::span<const int> a, std::span<const int> b,
                                            std::span<const std::int64_t> weights = {}) {
  const auto table = detail::contingency(a, b, weights);
  double total = 0.0;
  std::map<int, double> pa, pb;
  for (const auto& [key, w] : table) {
    total += w;
    pa[key.first] += w;
    pb[key.second] += w;
  }
  if (!(total > 0.0)) throw DataError("no records to compare");
  auto entropy = [&](const std::map<int, double>& p) {
    double h = 0.0;
    for (const auto& [k, w] : p)
      if (w > 0.0) h -= (w / total) * std::log(w / total);
    return h;
  };
  const double ha = entropy(pa), hb = entropy(pb);
  if (ha <= 0.0 || hb <= 0.0) return 0.0;
  double mi = 0.0;
  for (const auto& [key, w] : table) {
    if (w <= 0.0) continue;
    const double p = w / total;
    mi += p * std::log(p / ((pa[key.first] / total) * (pb[key.second] / total)));
  }
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

// Adjusted Rand index of two labellings (records optionally weighted).
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b,
                                  std::span<const std::int64_t> weights = {}) {
  const auto table = detail::contingency(a, b, weights);
  auto pairs = [](double n) { return n * (n - 1.0) / 2.0; };
  double total = 0.0, index = 0.0;
  std::map<int, double> ra, rb;
  for (const auto& [key, w] : table) {
    total += w;
    ra[key.first] += w;
    rb[key.second] += w;
    index += pairs(w);
  }
  double sa = 0.0, sb = 0.0;
  for (const auto& [k, w] : ra) sa += pairs(w);
  for (const auto& [k, w] : rb) sb += pairs(w);
  const double expected = sa * sb / pairs(total);
  const double maximum = 0.5 * (sa + sb);
  if (maximum == expected) return 1.0;
  return (index - expected) / (maximum - expected);
}

}  // namespace ltm
