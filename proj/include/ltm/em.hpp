#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "ltm/dataset.hpp"
#include "ltm/error.hpp"
#include "ltm/inference.hpp"
#include "ltm/information.hpp"
#include "ltm/model.hpp"
#include "ltm/random.hpp"

namespace ltm {

struct EmConfig {
  int max_iterations = 500;
  double tolerance = 1e-4;  // relative log-likelihood improvement
  int restarts = 3;
  std::uint64_t seed = 0;
  double smoothing = 1.0;   // pseudo-count added to every table cell
  int threads = 1;          // restarts evaluated concurrently
  bool verbose = false;     // progress lines on stderr

  void check() const {
    if (max_iterations < 1) throw DataError("EM max_iterations must be >= 1");
    if (!(tolerance > 0.0)) throw DataError("EM tolerance must be > 0");
    if (restarts < 1) throw DataError("EM restarts must be >= 1");
    if (!(smoothing >= 0.0)) throw DataError("EM smoothing must be >= 0");
  }
};

struct EmResult {
  LatentTreeModel model;
  double log_likelihood = kNegInf;
  int iterations = 0;
  int best_restart = 0;
  // One log-likelihood trace per restart; entry k is the log-likelihood of the
  // parameters after k M-steps.
  std::vector<std::vector<double>> traces;
};

namespace detail {

// Projects `data` onto the model's observed variables (in model order).
inline WeightedDataset align_dataset(const LatentTreeModel& m, const WeightedDataset& data) {
  const auto names = m.observed_names();
  if (names.empty()) throw DataError("model has no observed variables");
  if (data.total_weight() == 0) throw DataError("empty dataset");
  if (data.names() == names) return data;
  for (const auto& n : names)
    if (data.index_of(n) < 0)
      throw DataError("dataset does not cover model variable '" + n + "'");
  return project(data, std::span<const std::string>(names));
}

// E-step: expected sufficient statistics for the nodes flagged in `free`
// (root: posterior of the root; other nodes: posterior of (parent, node)).
// Rows are visited in dataset order, so the summation order is fixed.
inline double expected_counts(const LatentTreeModel& m, const WeightedDataset& data,
                              std::span<const int> nodes, const std::vector<char>& free,
                              std::vector<std::vector<double>>& counts) {
  counts.resize(m.size());
  for (std::size_t v = 0; v < m.size(); ++v)
    counts[v].assign(free[v] ? m.tables[v].size() : 0, 0.0);
  TreePropagator prop(m);
  std::vector<int> evidence(m.size());
  std::vector<double> buf;
  double ll = 0.0;
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    fill_evidence(data, nodes, r, evidence);
    const double lp = prop.propagate(evidence);
    if (lp == kNegInf)
      throw NumericError("EM: dataset row " + std::to_string(r) + " has zero probability");
    const double w = static_cast<double>(data.weight(r));
    ll += w * lp;
    prop.downward();
    for (std::size_t v = 0; v < m.size(); ++v) {
      if (!free[v]) continue;
      buf.resize(m.tables[v].size());
      if (static_cast<int>(v) == m.root)
        prop.posterior(static_cast<int>(v), buf);
      else
        prop.pair_posterior(static_cast<int>(v), buf);
      auto& c = counts[v];
      for (std::size_t k = 0; k < buf.size(); ++k) c[k] += w * buf[k];
    }
  }
  return ll;
}

inline void maximize(LatentTreeModel& m, const std::vector<std::vector<double>>& counts,
                     const std::vector<char>& free, double smoothing) {
  for (std::size_t v = 0; v < m.size(); ++v) {
    if (!free[v]) continue;
    const auto c = static_cast<std::size_t>(m.cardinality(static_cast<int>(v)));
    auto& t = m.tables[v];
    for (std::size_t off = 0; off < t.size(); off += c) {
      double total = 0.0;
      for (std::size_t i = 0; i < c; ++i) total += counts[v][off + i] + smoothing;
      for (std::size_t i = 0; i < c; ++i)
        t[off + i] = total > 0.0 ? (counts[v][off + i] + smoothing) / total
                                 : 1.0 / static_cast<double>(c);
    }
  }
}

struct EmRun {
  LatentTreeModel model;
  std::vector<double> trace;
};

// Iterates EM from the parameters in `m`, updating only nodes flagged in
// `free`. Stops on relative improvement below tolerance, on max_iterations, or
// as soon as an M-step fails to increase the log-likelihood (possible only
// when smoothing pulls the estimate away from the likelihood maximum); in
// that case the previous parameters are kept, so the trace never decreases.
inline EmRun run_em(LatentTreeModel m, const WeightedDataset& data, std::span<const int> nodes,
                    const std::vector<char>& free, const EmConfig& cfg) {
  EmRun run;
  std::vector<std::vector<double>> counts;
  double ll = expected_counts(m, data, nodes, free, counts);
  run.trace.push_back(ll);
  for (int it = 0; it < cfg.max_iterations; ++it) {
    LatentTreeModel next = m;
    maximize(next, counts, free, cfg.smoothing);
    std::vector<std::vector<double>> next_counts;
    const double next_ll = expected_counts(next, data, nodes, free, next_counts);
    if (!(next_ll >= ll)) break;
    const double gain = next_ll - ll;
    m = std::move(next);
    counts = std::move(next_counts);
    run.trace.push_back(next_ll);
    const double prev = ll;
    ll = next_ll;
    if (gain <= cfg.tolerance * std::abs(prev)) break;
  }
  run.model = std::move(m);
  return run;
}

inline void randomize_free(LatentTreeModel& m, const std::vector<char>& free, Rng& rng) {
  for (std::size_t v = 0; v < m.size(); ++v) {
    if (!free[v]) continue;
    const auto c = static_cast<std::size_t>(m.cardinality(static_cast<int>(v)));
    auto& t = m.tables[v];
    for (std::size_t off = 0; off < t.size(); off += c)
      rng.dirichlet(std::span<double>(t).subspan(off, c));
  }
}

// Runs `restarts` randomly initialized EM runs over the free nodes and keeps
// the best (lowest restart index on ties).
inline EmResult run_restarts(const LatentTreeModel& start, const WeightedDataset& data,
                             const std::vector<char>& free, const EmConfig& cfg) {
  cfg.check();
  const auto nodes = bind_columns(start, data);
  auto one = [&](int r) {
    LatentTreeModel m = start;
    Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(r)));
    randomize_free(m, free, rng);
    return run_em(std::move(m), data, nodes, free, cfg);
  };
  std::vector<EmRun> runs(cfg.restarts);
  if (cfg.threads > 1 && cfg.restarts > 1) {
    for (int base = 0; base < cfg.restarts; base += cfg.threads) {
      std::vector<std::future<EmRun>> batch;
      for (int r = base; r < std::min(cfg.restarts, base + cfg.threads); ++r)
        batch.push_back(std::async(std::launch::async, one, r));
      for (int k = 0; k < static_cast<int>(batch.size()); ++k) runs[base + k] = batch[k].get();
    }
  } else {
    for (int r = 0; r < cfg.restarts; ++r) runs[r] = one(r);
  }
  EmResult out;
  for (int r = 0; r < cfg.restarts; ++r) {
    const double ll = runs[r].trace.back();
    if (cfg.verbose)
      std::cerr << "em: restart " << r << " iterations " << runs[r].trace.size() - 1
                << " logL " << ll << '\n';
    if (r == 0 || ll > out.log_likelihood) {
      out.log_likelihood = ll;
      out.best_restart = r;
    }
  }
  out.iterations = static_cast<int>(runs[out.best_restart].trace.size()) - 1;
  out.model = runs[out.best_restart].model;
  for (auto& run : runs) out.traces.push_back(std::move(run.trace));
  return out;
}

}  // namespace detail

// Maximum-likelihood (smoothed) parameters for the structure and root carried
// by `structure`; its current parameters are ignored.
inline EmResult em_fit(const LatentTreeModel& structure, const WeightedDataset& data,
                       const EmConfig& cfg) {
  if (auto problems = validate(structure.structure); !problems.empty()) {
    for (const auto& p : problems)
      if (p.rfind("latent node is a leaf", 0) != 0)
        throw ModelError("em_fit: invalid structure: " + p);
  }
  const auto aligned = detail::align_dataset(structure, data);
  std::vector<char> free(structure.size(), 1);
  return detail::run_restarts(structure, aligned, free, cfg);
}

// Single EM run starting from the model's current parameters.
inline EmResult em_refine(const LatentTreeModel& model, const WeightedDataset& data,
                          const EmConfig& cfg) {
  cfg.check();
  const auto aligned = detail::align_dataset(model, data);
  const auto nodes = bind_columns(model, aligned);
  std::vector<char> free(model.size(), 1);
  auto run = detail::run_em(model, aligned, nodes, free, cfg);
  EmResult out;
  out.log_likelihood = run.trace.back();
  out.iterations = static_cast<int>(run.trace.size()) - 1;
  out.model = std::move(run.model);
  out.traces.push_back(std::move(run.trace));
  return out;
}

struct ProgressiveEmResult {
  EmResult refined;                          // final full-EM pass
  std::vector<std::vector<std::string>> submodel_variables;
  std::vector<std::size_t> submodel_rows;    // distinct rows per submodel dataset
};

namespace detail {

// Minimal rooted sub-model containing the root and every node in `keep`
// (closure under the parent relation). `index_map[v]` receives the sub-model
// index of v or -1.
inline LatentTreeModel closure_submodel(const LatentTreeModel& m, std::span<const int> keep,
                                        std::vector<int>& index_map) {
  std::vector<char> in(m.size(), 0);
  for (int v : keep)
    for (int u = v; u >= 0 && !in[u]; u = m.parent[u]) in[u] = 1;
  in[m.root] = 1;
  index_map.assign(m.size(), -1);
  LatentTreeModel sub;
  for (int v : m.preorder()) {
    if (!in[v]) continue;
    index_map[v] = static_cast<int>(sub.structure.size());
    sub.structure.nodes.push_back(m.variable(v));
    sub.parent.push_back(m.parent[v] < 0 ? -1 : index_map[m.parent[v]]);
    sub.tables.push_back(m.tables[v]);
  }
  sub.root = 0;
  for (std::size_t v = 1; v < sub.size(); ++v)
    sub.structure.edges.emplace_back(sub.parent[v], static_cast<int>(v));
  return sub;
}

}  // namespace detail

// Progressive EM: parameters are estimated latent by latent (parents before
// children). For each latent Z, EM runs on the sub-model spanned by 3 or 4
// observed variables near Z, with previously frozen tables held fixed; the
// tables of Z's children (and the root marginal, when Z is the root) are then
// frozen. A final full-EM pass bounded by the config refines everything.
inline ProgressiveEmResult progressive_em(const LatentTreeModel& structure,
                                          const WeightedDataset& data, const EmConfig& cfg) {
  cfg.check();
  const auto aligned = detail::align_dataset(structure, data);
  LatentTreeModel m = structure;
  {
    Rng rng(Rng::derive(cfg.seed, 0x5eed));
    randomize_parameters(m, rng);
  }
  const int n = static_cast<int>(m.size());
  const auto children = m.children();
  const auto order = m.preorder();
  std::vector<int> depth(n, 0);
  for (int v : order)
    if (m.parent[v] >= 0) depth[v] = depth[m.parent[v]] + 1;

  // Pairwise empirical MI between observed variables, computed on demand.
  std::map<std::pair<int, int>, double> mi_cache;
  auto mi = [&](int a, int b) {
    if (a == b) return std::numeric_limits<double>::infinity();
    auto key = std::minmax(a, b);
    auto it = mi_cache.find(key);
    if (it != mi_cache.end()) return it->second;
    const double value = empirical_mutual_information(aligned, m.variable(a).name,
                                                      m.variable(b).name, cfg.smoothing);
    mi_cache.emplace(key, value);
    return value;
  };

  std::vector<std::vector<int>> observed_below(n);  // observed nodes in each subtree
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int v = *it;
    if (m.variable(v).observed()) observed_below[v].push_back(v);
    for (int c : children[v])
      observed_below[v].insert(observed_below[v].end(), observed_below[c].begin(),
                               observed_below[c].end());
    std::sort(observed_below[v].begin(), observed_below[v].end());
  }

  std::vector<char> frozen(n, 0);
  ProgressiveEmResult result;
  std::uint64_t step = 0;

  auto fit_submodel = [&](std::vector<int> vars) {
    std::sort(vars.begin(), vars.end());
    std::vector<int> index_map;
    LatentTreeModel sub = detail::closure_submodel(m, vars, index_map);
    std::vector<char> free(sub.size(), 0);
    for (int v = 0; v < n; ++v)
      if (index_map[v] >= 0 && !frozen[v]) free[index_map[v]] = 1;
    std::vector<std::string> names;
    for (int v : vars) names.push_back(m.variable(v).name);
    const auto sub_data = project(aligned, std::span<const std::string>(names));
    result.submodel_variables.push_back(names);
    result.submodel_rows.push_back(sub_data.num_rows());
    EmConfig sub_cfg = cfg;
    sub_cfg.seed = Rng::derive(cfg.seed, ++step);
    sub_cfg.verbose = false;
    const auto fitted = detail::run_restarts(sub, sub_data, free, sub_cfg);
    for (int v = 0; v < n; ++v)
      if (index_map[v] >= 0 && !frozen[v]) m.tables[v] = fitted.model.tables[index_map[v]];
  };

  for (int z : order) {
    if (!m.variable(z).latent() || children[z].empty()) continue;
    const auto& below = observed_below[z];
    std::set<int> below_set(below.begin(), below.end());
    std::vector<int> outside;
    for (int v : m.observed_nodes())
      if (!below_set.count(v)) outside.push_back(v);

    // Representative observed variable of each child: shallowest observed
    // descendant, ties broken by total MI with Z's other observed descendants.
    std::vector<int> reps;
    for (int c : children[z]) {
      int best = -1;
      double best_score = -1.0;
      for (int o : observed_below[c]) {
        if (best >= 0 && depth[o] > depth[best]) continue;
        double score = 0.0;
        for (int q : below)
          if (!std::binary_search(observed_below[c].begin(), observed_below[c].end(), q))
            score += mi(o, q);
        if (best < 0 || depth[o] < depth[best] || score > best_score) {
          best = o;
          best_score = score;
        }
      }
      reps.push_back(best);
    }
    int observed_children = 0;
    for (int c : children[z]) observed_children += m.variable(c).observed() ? 1 : 0;
    const std::size_t window = observed_children >= 4 ? 4 : 3;

    auto total_mi = [&](int v, const std::vector<int>& set) {
      double s = 0.0;
      for (int u : set) s += mi(v, u);
      return s;
    };
    // Fills `set` up to the window from `pool` by greedy total MI.
    auto fill = [&](std::vector<int>& set, const std::vector<int>& pool) {
      while (set.size() < window) {
        int best = -1;
        double best_score = -1.0;
        for (int v : pool) {
          if (std::find(set.begin(), set.end(), v) != set.end()) continue;
          const double s = total_mi(v, set);
          if (s > best_score) best = v, best_score = s;
        }
        if (best < 0) break;
        set.push_back(best);
      }
    };

    // Initial submodel: the most mutually informative representatives.
    std::vector<int> chosen;
    if (reps.size() >= 2) {
      double best = -1.0;
      std::pair<int, int> seed_pair{reps[0], reps[1]};
      for (std::size_t i = 0; i < reps.size(); ++i)
        for (std::size_t j = i + 1; j < reps.size(); ++j)
          if (const double s = mi(reps[i], reps[j]); s > best)
            best = s, seed_pair = {reps[i], reps[j]};
      chosen = {seed_pair.first, seed_pair.second};
    } else {
      chosen = reps;
    }
    fill(chosen, reps);
    fill(chosen, outside);
    fill(chosen, below);
    fit_submodel(chosen);
    if (z == m.root) frozen[z] = 1;
    std::vector<int> done_reps;
    for (std::size_t k = 0; k < reps.size(); ++k) {
      if (std::find(chosen.begin(), chosen.end(), reps[k]) != chosen.end()) {
        frozen[children[z][k]] = 1;
        done_reps.push_back(reps[k]);
      }
    }
    // Remaining children one at a time, alongside the most informative
    // already-estimated representatives.
    for (std::size_t k = 0; k < reps.size(); ++k) {
      const int c = children[z][k];
      if (frozen[c]) continue;
      std::vector<int> set = {reps[k]};
      std::vector<int> ranked = done_reps;
      std::stable_sort(ranked.begin(), ranked.end(),
                       [&](int a, int b) { return mi(reps[k], a) > mi(reps[k], b); });
      for (int r : ranked) {
        if (set.size() >= window) break;
        set.push_back(r);
      }
      fill(set, outside);
      fit_submodel(set);
      frozen[c] = 1;
      done_reps.push_back(reps[k]);
    }
  }

  result.refined = em_refine(m, aligned, cfg);
  if (cfg.verbose)
    std::cerr << "pem: " << result.submodel_rows.size() << " submodels, final logL "
              << result.refined.log_likelihood << '\n';
  return result;
}

}  // namespace ltm
