#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ltm/chow_liu.hpp"
#include "ltm/dataset.hpp"
#include "ltm/em.hpp"
#include "ltm/error.hpp"
#include "ltm/inference.hpp"
#include "ltm/information.hpp"
#include "ltm/learning.hpp"
#include "ltm/model.hpp"

namespace ltm {

struct UnidimensionalityResult {
  bool unidimensional = true;
  ScoredModel one;                          // best single-latent model
  ScoredModel two;                          // best two-latent model (unset for |S| < 4)
  std::vector<std::vector<std::string>> groups;  // member groups of the two latents
};

namespace detail {

// Two latents joined by an edge, each with its member group as children.
inline LatentTreeModel two_latent_structure(const WeightedDataset& data,
                                            const std::vector<std::string>& a,
                                            const std::vector<std::string>& b) {
  const auto names = data.names();
  int counter = 0;
  const auto u1 = fresh_name("U", counter, names);
  const auto u2 = fresh_name("U", counter, names);
  TreeStructure s;
  s.add_node(latent_variable(u1, 2));
  s.add_node(latent_variable(u2, 2));
  s.add_edge(0, 1);
  for (const auto* group : {&a, &b})
    for (const auto& name : *group)
      s.add_edge(group == &a ? 0 : 1, s.add_node(data.variables()[data.require_index(name)]));
  return make_model(std::move(s), 0);
}

// Candidate bipartitions with both sides of size >= 2: every one for small
// subsets, otherwise the last-added variable with its closest partner against
// the rest, plus a greedy MI bisection seeded by the least dependent pair.
inline std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>
candidate_bipartitions(const WeightedDataset& data, const std::vector<std::string>& subset,
                       const std::string& last, double smoothing) {
  const std::size_t n = subset.size();
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> out;
  if (n <= 5) {
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      if (mask & 1u) continue;  // first variable always on side A
      std::vector<std::string> a, b;
      for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1u ? b : a).push_back(subset[i]);
      if (a.size() >= 2 && b.size() >= 2) out.emplace_back(a, b);
    }
    return out;
  }
  std::vector<std::vector<double>> mi(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      mi[i][j] = mi[j][i] = empirical_mutual_information(data, subset[i], subset[j], smoothing);

  const auto li = static_cast<std::size_t>(
      std::find(subset.begin(), subset.end(), last) - subset.begin());
  if (li < n) {
    std::size_t partner = li == 0 ? 1 : 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != li && mi[li][j] > mi[li][partner]) partner = j;
    std::vector<std::string> a, b = {subset[li], subset[partner]};
    for (std::size_t i = 0; i < n; ++i)
      if (i != li && i != partner) a.push_back(subset[i]);
    out.emplace_back(a, b);
  }

  std::size_t sa = 0, sb = 1;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (mi[i][j] < mi[sa][sb]) sa = i, sb = j;
  std::vector<int> side(n, -1);
  side[sa] = 0;
  side[sb] = 1;
  auto average = [&](std::size_t v, int s) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t u = 0; u < n; ++u)
      if (side[u] == s) sum += mi[v][u], ++count;
    return sum / count;
  };
  for (std::size_t step = 2; step < n; ++step) {
    std::size_t best = n;
    double best_gap = -1.0;
    for (std::size_t v = 0; v < n; ++v) {
      if (side[v] >= 0) continue;
      const double gap = std::abs(average(v, 0) - average(v, 1));
      if (gap > best_gap) best = v, best_gap = gap;
    }
    side[best] = average(best, 0) >= average(best, 1) ? 0 : 1;
  }
  for (int s : {0, 1}) {
    if (std::count(side.begin(), side.end(), s) >= 2) continue;
    // Pull the most attached variable from the other side.
    std::size_t best = n;
    for (std::size_t v = 0; v < n; ++v)
      if (side[v] == 1 - s && v != sa && v != sb && (best == n || average(v, s) > average(best, s)))
        best = v;
    side[best] = s;
  }
  std::vector<std::string> a, b;
  for (std::size_t i = 0; i < n; ++i) (side[i] == 0 ? a : b).push_back(subset[i]);
  out.emplace_back(a, b);
  return out;
}

}  // namespace detail

// Compares the best one-latent model with the best two-latent model on a
// variable subset; unidimensional when BIC(two) - BIC(one) <= threshold. Two
// or three variables are unidimensional by convention (no two-latent model
// with two members per latent exists).
inline UnidimensionalityResult unidimensionality_test(const WeightedDataset& data,
                                                      std::span<const std::string> subset,
                                                      const LearnConfig& cfg,
                                                      const std::string& last = {}) {
  cfg.check();
  if (subset.size() < 2) throw DataError("unidimensionality test needs at least two variables");
  const auto sub = project(data, subset);
  UnidimensionalityResult out;
  out.one = learn_lcm(sub, subset, "U1", cfg);
  if (subset.size() < 4) return out;
  const std::vector<std::string> members(subset.begin(), subset.end());
  for (const auto& [a, b] : detail::candidate_bipartitions(sub, members, last, cfg.em.smoothing)) {
    const auto structure = detail::two_latent_structure(sub, a, b);
    const std::vector<int> latents = {0, 1};
    auto fitted = cardinality_search(structure, latents, sub, cfg);
    if (fitted.bic > out.two.bic) {
      out.two = std::move(fitted);
      out.groups = {a, b};
    }
  }
  out.unidimensional = out.two.bic - out.one.bic <= cfg.ud_threshold;
  return out;
}

struct Island {
  std::string latent;
  std::vector<std::string> members;
  LatentTreeModel lcm;  // single latent named `latent` over `members`
};

namespace detail {

inline double max_mi_to(const std::map<std::pair<std::string, std::string>, double>& mi,
                        const std::string& v, const std::vector<std::string>& set) {
  double best = 0.0;
  for (const auto& u : set) best = std::max(best, mi.at(std::minmax(u, v)));
  return best;
}

}  // namespace detail

// Greedy island growth: seed with the unassigned pair of largest MI, add the
// unassigned variable most informative about the island, and test
// unidimensionality after each addition. On failure the island keeps the
// variables outside the last-added variable's group in the two-latent model.
inline std::vector<Island> build_islands(const WeightedDataset& data, const LearnConfig& cfg,
                                         const std::string& latent_prefix = "Y") {
  cfg.check();
  const auto names = data.names();
  if (names.size() < 2) throw DataError("islands need at least two observed variables");
  std::map<std::pair<std::string, std::string>, double> mi;
  for (std::size_t i = 0; i < names.size(); ++i)
    for (std::size_t j = i + 1; j < names.size(); ++j)
      mi[std::minmax(names[i], names[j])] =
          empirical_mutual_information(data, names[i], names[j], cfg.em.smoothing);

  std::vector<std::string> unassigned = names;
  std::vector<Island> islands;
  int counter = 0;
  auto taken = names;
  auto make_island = [&](std::vector<std::string> members) {
    Island island;
    island.latent = fresh_name(latent_prefix, counter, taken);
    taken.push_back(island.latent);
    island.lcm = learn_lcm(data, members, island.latent, cfg).model;
    island.members = std::move(members);
    return island;
  };

  while (unassigned.size() >= 2) {
    std::pair<std::string, std::string> seed;
    double best = -1.0;
    for (std::size_t i = 0; i < unassigned.size(); ++i)
      for (std::size_t j = i + 1; j < unassigned.size(); ++j)
        if (const double v = mi.at(std::minmax(unassigned[i], unassigned[j])); v > best)
          best = v, seed = std::minmax(unassigned[i], unassigned[j]);
    std::vector<std::string> island = {seed.first, seed.second};
    std::erase(unassigned, seed.first);
    std::erase(unassigned, seed.second);

    while (!unassigned.empty()) {
      auto it = std::max_element(unassigned.begin(), unassigned.end(),
                                 [&](const std::string& a, const std::string& b) {
                                   return detail::max_mi_to(mi, a, island) <
                                          detail::max_mi_to(mi, b, island);
                                 });
      const std::string next = *it;
      auto candidate = island;
      candidate.push_back(next);
      const auto test = unidimensionality_test(data, candidate, cfg, next);
      if (test.unidimensional) {
        island = std::move(candidate);
        unassigned.erase(it);
        continue;
      }
      const auto& with_last = std::find(test.groups[0].begin(), test.groups[0].end(), next) !=
                                      test.groups[0].end()
                                  ? test.groups[0]
                                  : test.groups[1];
      std::vector<std::string> kept;
      for (const auto& v : island)
        if (std::find(with_last.begin(), with_last.end(), v) == with_last.end()) kept.push_back(v);
      for (const auto& v : island)
        if (std::find(kept.begin(), kept.end(), v) == kept.end()) unassigned.push_back(v);
      island = std::move(kept);
      break;
    }
    islands.push_back(make_island(std::move(island)));
  }

  if (unassigned.size() == 1) {
    // A leftover variable joins the island it is most informative about.
    const auto& v = unassigned[0];
    std::size_t best = 0;
    for (std::size_t k = 1; k < islands.size(); ++k)
      if (detail::max_mi_to(mi, v, islands[k].members) >
          detail::max_mi_to(mi, v, islands[best].members))
        best = k;
    auto members = islands[best].members;
    members.push_back(v);
    const auto latent = islands[best].latent;
    islands[best].lcm = learn_lcm(data, members, latent, cfg).model;
    islands[best].members = std::move(members);
  }
  return islands;
}

namespace detail {

// Island latents linked by a Chow-Liu tree over their map-completed values,
// parameters initialized from the island models and the completed data.
inline LatentTreeModel bridge_structure(const std::vector<Island>& islands,
                                        const WeightedDataset& data, double smoothing) {
  std::vector<Variable> latent_vars;
  for (const auto& island : islands)
    latent_vars.push_back(observed_variable(island.latent, island.lcm.cardinality(0)));
  std::vector<std::vector<std::vector<int>>> states;
  for (const auto& island : islands) {
    const std::vector<int> target = {island.lcm.require(island.latent)};
    states.push_back(map_assignments(island.lcm, data, target));
  }
  DatasetBuilder b(latent_vars);
  std::vector<int> rec(islands.size());
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    for (std::size_t k = 0; k < islands.size(); ++k) rec[k] = states[k][r][0];
    b.add(rec, data.weight(r));
  }
  const auto completed = b.build();
  TreeStructure s;
  for (const auto& v : latent_vars) s.add_node(latent_variable(v.name, v.cardinality));
  if (islands.size() >= 2) {
    const auto latent_tree = chow_liu(completed, smoothing);
    for (auto [a, c] : latent_tree.edges)
      s.add_edge(s.require(latent_tree.nodes[a].name), s.require(latent_tree.nodes[c].name));
  }
  for (std::size_t k = 0; k < islands.size(); ++k)
    for (const auto& name : islands[k].members)
      s.add_edge(static_cast<int>(k), s.add_node(data.variables()[data.require_index(name)]));
  auto m = make_model(std::move(s), 0);
  m.tables[0] = islands[0].lcm.tables[0];
  for (std::size_t k = 0; k < islands.size(); ++k)
    for (const auto& name : islands[k].members)
      m.tables[m.require(name)] = islands[k].lcm.tables[islands[k].lcm.require(name)];
  // Latent links: smoothed conditional frequencies from the completed data.
  for (int v : m.latent_nodes()) {
    const int p = m.parent[v];
    if (p < 0) continue;
    const auto joint = empirical_joint(completed, completed.require_index(m.variable(p).name),
                                       completed.require_index(m.variable(v).name),
                                       std::max(smoothing, 1e-3));
    const int cp = m.cardinality(p), cv = m.cardinality(v);
    auto& table = m.tables[v];
    for (int i = 0; i < cp; ++i) {
      double row = 0.0;
      for (int j = 0; j < cv; ++j) row += joint[i * cv + j];
      for (int j = 0; j < cv; ++j) table[i * cv + j] = joint[i * cv + j] / row;
    }
  }
  return m;
}

}  // namespace detail

// Links island latents into one flat model and refines all parameters by EM
// from the island-based initialization.
inline ScoredModel bridge_islands(const std::vector<Island>& islands, const WeightedDataset& data,
                                  const LearnConfig& cfg) {
  cfg.check();
  if (islands.empty()) throw DataError("no islands to bridge");
  auto merged = detail::bridge_structure(islands, data, cfg.em.smoothing);
  auto fitted = refine_scored(merged, data, cfg.em);
  const auto regular = regularize(fitted.model);
  if (regular.size() != fitted.model.size() || regular.tables != fitted.model.tables)
    fitted = refine_scored(regular, data, cfg.em);
  return fitted;
}

// Bridged islands: unidimensional islands with one latent each, linked by a
// Chow-Liu tree over the latents.
inline ScoredModel learn_bi(const WeightedDataset& data, const LearnConfig& cfg,
                            const std::string& latent_prefix = "Y") {
  return bridge_islands(build_islands(data, cfg, latent_prefix), data, cfg);
}

}  // namespace ltm
