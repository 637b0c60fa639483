#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ltm/dataset.hpp"
#include "ltm/error.hpp"
#include "ltm/information.hpp"
#include "ltm/model.hpp"

namespace ltm {

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[std::max(a, b)] = std::min(a, b);
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

// Maximum-weight spanning tree (Kruskal). Weights are compared after rounding
// to 1e-12 so that numerically equal weights tie; ties go to the edge whose
// (smaller name, larger name) pair is lexicographically smallest.
inline std::vector<std::pair<int, int>> maximum_spanning_tree(const DistanceMatrix& weights) {
  const int n = static_cast<int>(weights.size());
  struct Candidate {
    long long key;
    std::string first, second;
    int a, b;
  };
  std::vector<Candidate> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const auto& ni = weights.names[i];
      const auto& nj = weights.names[j];
      const bool swap = nj < ni;
      edges.push_back({std::llround(weights(i, j) * 1e12), swap ? nj : ni, swap ? ni : nj, i, j});
    }
  std::sort(edges.begin(), edges.end(), [](const Candidate& x, const Candidate& y) {
    return std::tie(y.key, x.first, x.second) < std::tie(x.key, y.first, y.second);
  });
  detail::DisjointSets sets(n);
  std::vector<std::pair<int, int>> tree;
  for (const auto& e : edges) {
    if (sets.unite(e.a, e.b)) tree.emplace_back(e.a, e.b);
    if (static_cast<int>(tree.size()) + 1 == n) break;
  }
  return tree;
}

// Chow-Liu tree over the given dataset variables: all nodes observed, so
// internal nodes are allowed here (the result is an intermediate artifact).
inline TreeStructure chow_liu(const WeightedDataset& data, std::span<const std::string> variables,
                              double smoothing = 0.0) {
  if (variables.size() < 2) throw DataError("Chow-Liu tree needs at least two variables");
  const auto sub = project(data, variables);
  const auto mi = mutual_informations(sub, smoothing);
  TreeStructure s;
  for (const auto& v : sub.variables()) s.add_node(observed_variable(v.name, v.cardinality));
  for (auto [a, b] : maximum_spanning_tree(mi)) s.add_edge(a, b);
  return s;
}

inline TreeStructure chow_liu(const WeightedDataset& data, double smoothing = 0.0) {
  const auto names = data.names();
  return chow_liu(data, std::span<const std::string>(names), smoothing);
}

}  // namespace ltm
