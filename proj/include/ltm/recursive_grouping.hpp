#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "ltm/chow_liu.hpp"
#include "ltm/dataset.hpp"
#include "ltm/error.hpp"
#include "ltm/information.hpp"
#include "ltm/learning.hpp"
#include "ltm/model.hpp"

namespace ltm {

// Distances above this are treated as "unrelated"; infinite entries would
// otherwise poison the additive estimates.
inline constexpr double kDistanceCap = 30.0;

namespace detail {

// Growable symmetric distance table over integer node ids.
class DistanceTable {
 public:
  explicit DistanceTable(const DistanceMatrix& base) {
    const auto n = base.size();
    d_.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d_[i][j] = i == j ? 0.0 : std::min(base(i, j), kDistanceCap);
  }

  int size() const { return static_cast<int>(d_.size()); }
  double operator()(int a, int b) const { return d_[a][b]; }
  void set(int a, int b, double v) { d_[a][b] = d_[b][a] = v; }

  int add_node() {
    for (auto& row : d_) row.push_back(0.0);
    d_.emplace_back(d_.size() + 1, 0.0);
    return size() - 1;
  }

 private:
  std::vector<std::vector<double>> d_;
};

struct PatchResult {
  std::vector<std::pair<int, int>> edges;  // over patch nodes and new latents
  std::vector<int> new_latents;
  bool grouped = false;  // false: every node stayed a singleton
};

// Recursive grouping on one patch. `owner[k]` names the patch node whose
// branch (side of the current tree) contains node k; it is kept up to date as
// families merge, and distances from new latents to every node are derived
// through members that lie on the far side of the new latent.
inline PatchResult group_patch(DistanceTable& d, std::vector<int> active, std::vector<int>& owner,
                               double tolerance) {
  PatchResult out;
  auto eps = [&](int i, int j) { return tolerance * d(i, j) + 1e-9; };
  std::sort(active.begin(), active.end());

  auto add_latent = [&](const std::vector<int>& family, const std::vector<int>& witnesses_pool) {
    const int h = d.add_node();
    owner.push_back(h);
    // Distances from members to h through pairwise differences.
    std::vector<double> to_h(family.size(), 0.0);
    for (std::size_t a = 0; a < family.size(); ++a) {
      double acc = 0.0;
      int count = 0;
      for (std::size_t b = 0; b < family.size(); ++b) {
        if (a == b) continue;
        const int i = family[a], j = family[b];
        double phi = 0.0;
        int witnesses = 0;
        for (int k : witnesses_pool)
          if (k != i && k != j) phi += d(i, k) - d(j, k), ++witnesses;
        if (witnesses > 0) phi /= witnesses;
        acc += 0.5 * (d(i, j) + phi);
        ++count;
      }
      to_h[a] = std::max(0.0, acc / count);
      d.set(family[a], h, to_h[a]);
    }
    for (int k = 0; k < h; ++k) {
      if (std::find(family.begin(), family.end(), k) != family.end()) continue;
      double acc = 0.0;
      int count = 0;
      for (std::size_t a = 0; a < family.size(); ++a) {
        if (owner[k] == family[a]) continue;
        acc += d(k, family[a]) - to_h[a];
        ++count;
      }
      d.set(k, h, count > 0 ? std::max(0.0, acc / count) : 0.0);
    }
    for (auto& o : owner)
      if (std::find(family.begin(), family.end(), o) != family.end()) o = h;
    for (int i : family) out.edges.emplace_back(h, i);
    out.new_latents.push_back(h);
    return h;
  };

  bool first = true;
  while (active.size() >= 3) {
    const std::size_t n = active.size();
    std::vector<double> mean_phi(n * n, 0.0);
    DisjointSets families(n);
    bool any_family = false;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) {
        const int i = active[a], j = active[b];
        double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
        for (int k : active) {
          if (k == i || k == j) continue;
          const double phi = d(i, k) - d(j, k);
          lo = std::min(lo, phi);
          hi = std::max(hi, phi);
          sum += phi;
        }
        mean_phi[a * n + b] = sum / static_cast<double>(n - 2);
        mean_phi[b * n + a] = -mean_phi[a * n + b];
        if (d(i, j) < kDistanceCap && hi - lo <= eps(i, j)) {
          families.unite(a, b);
          any_family = true;
        }
      }
    if (!any_family) {
      if (first) return out;  // all singletons
      // No further structure: join the remaining nodes through one latent.
      active = {add_latent(active, active)};
      out.grouped = true;
      break;
    }
    first = false;
    out.grouped = true;

    std::vector<std::vector<std::size_t>> groups(n);
    for (std::size_t a = 0; a < n; ++a) groups[families.find(a)].push_back(a);
    std::vector<int> next;
    for (const auto& group : groups) {
      if (group.empty()) continue;
      if (group.size() == 1) {
        next.push_back(active[group[0]]);
        continue;
      }
      // j is the parent of i when Phi(i, j; k) is d(i, j) for every witness.
      int parent = -1;
      double parent_dev = std::numeric_limits<double>::infinity();
      for (std::size_t pj : group) {
        double worst = 0.0;
        bool ok = true;
        for (std::size_t pi : group) {
          if (pi == pj) continue;
          const int i = active[pi], j = active[pj];
          const double dev = std::abs(mean_phi[pi * n + pj] - d(i, j));
          ok = ok && dev <= eps(i, j);
          worst = std::max(worst, dev);
        }
        if (ok && worst < parent_dev) parent = static_cast<int>(pj), parent_dev = worst;
      }
      std::vector<int> members;
      for (std::size_t a : group) members.push_back(active[a]);
      if (parent >= 0) {
        const int p = active[parent];
        for (int c : members) {
          if (c == p) continue;
          out.edges.emplace_back(p, c);
          for (auto& o : owner)
            if (o == c) o = p;
        }
        next.push_back(p);
      } else {
        next.push_back(add_latent(members, active));
      }
    }
    std::sort(next.begin(), next.end());
    active = std::move(next);
  }
  if (active.size() == 2) {
    out.edges.emplace_back(active[0], active[1]);
    out.grouped = true;
  }
  return out;
}

}  // namespace detail

// Local latent tree over the nodes of a distance matrix: names holds the
// input nodes followed by the added latents. No edges means no grouping was
// found (every node a singleton).
struct LocalTree {
  std::vector<std::string> names;
  std::vector<std::pair<int, int>> edges;
  int latents_added = 0;
};

// Recursive grouping over all nodes of `distances`. `tolerance` is relative
// to the pair distance.
inline LocalTree recursive_grouping(const DistanceMatrix& distances, double tolerance = 0.1,
                                    const std::string& latent_prefix = "h") {
  LocalTree out;
  out.names = distances.names;
  if (distances.size() < 3) {
    if (distances.size() == 2) out.edges.emplace_back(0, 1);
    return out;
  }
  detail::DistanceTable table(distances);
  std::vector<int> patch(distances.size());
  std::iota(patch.begin(), patch.end(), 0);
  std::vector<int> owner = patch;
  const auto result = detail::group_patch(table, patch, owner, tolerance);
  if (!result.grouped) return out;
  int counter = 0;
  for (std::size_t k = 0; k < result.new_latents.size(); ++k)
    out.names.push_back(fresh_name(latent_prefix, counter, out.names));
  out.edges = result.edges;
  out.latents_added = static_cast<int>(result.new_latents.size());
  return out;
}

// Relative grouping tolerance for a dataset of `total_weight` records: the
// configured value at 10,000 records, shrinking with the square root of the
// sample size beyond that.
inline double grouping_tolerance(const LearnConfig& cfg, std::int64_t total_weight) {
  const double n = static_cast<double>(std::max<std::int64_t>(total_weight, 1));
  return cfg.rg_tolerance * std::sqrt(1e4 / std::max(n, 1e4));
}

namespace detail {

// Node ids grouped by the patch node whose side of the tree they lie on.
inline std::vector<int> patch_owners(const std::vector<std::set<int>>& adj,
                                     const std::vector<int>& patch) {
  std::vector<int> owner(adj.size(), -1);
  for (int p : patch) owner[p] = p;
  for (int p : patch) {
    std::vector<int> stack = {p};
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : adj[v])
        if (owner[w] < 0) owner[w] = p, stack.push_back(w);
    }
  }
  return owner;
}

}  // namespace detail

// Chow-Liu recursive grouping: Chow-Liu tree over the observed variables,
// recursive grouping on the patch around every internal observed node until a
// sweep changes nothing, internal observed nodes replaced by a latent with the
// observed node as a leaf, then cardinality search, regularization and EM.
inline ScoredModel clrg(const WeightedDataset& data, const LearnConfig& cfg,
                        const std::string& latent_prefix = "H") {
  cfg.check();
  const int n = static_cast<int>(data.num_variables());
  if (n < 3) throw DataError("CLRG needs at least three observed variables");
  const double smoothing = cfg.em.smoothing;
  detail::DistanceTable table(information_distances(data, smoothing));
  const auto cl = chow_liu(data, smoothing);
  std::vector<std::set<int>> adj(n);
  for (auto [a, b] : cl.edges) adj[a].insert(b), adj[b].insert(a);
  const double tol = grouping_tolerance(cfg, data.total_weight());

  for (int sweep = 0; sweep < 2 * n; ++sweep) {
    bool changed = false;
    for (int c = 0; c < n; ++c) {
      if (adj[c].size() < 2) continue;
      std::vector<int> patch = {c};
      patch.insert(patch.end(), adj[c].begin(), adj[c].end());
      auto owner = detail::patch_owners(adj, patch);
      auto trial_table = table;
      const auto res = detail::group_patch(trial_table, patch, owner, tol);
      if (!res.grouped) continue;
      std::set<std::pair<int, int>> before, after;
      for (int w : adj[c]) before.insert(std::minmax(c, w));
      for (auto [a, b] : res.edges) after.insert(std::minmax(a, b));
      if (res.new_latents.empty() && before == after) continue;
      table = std::move(trial_table);
      for (int w : patch)
        if (w != c) adj[c].erase(w), adj[w].erase(c);
      adj.resize(table.size());
      for (auto [a, b] : res.edges) adj[a].insert(b), adj[b].insert(a);
      changed = true;
    }
    if (!changed) break;
  }

  // Assemble the structure; observed nodes keep their dataset indices.
  TreeStructure s;
  for (const auto& v : data.variables()) s.add_node(observed_variable(v.name, v.cardinality));
  auto taken = data.names();
  int counter = 0;
  std::vector<int> id_to_node(adj.size(), -1);
  for (int v = 0; v < n; ++v) id_to_node[v] = v;
  for (int v = n; v < static_cast<int>(adj.size()); ++v) {
    if (adj[v].empty()) continue;
    const auto name = fresh_name(latent_prefix, counter, taken);
    taken.push_back(name);
    id_to_node[v] = s.add_node(latent_variable(name, 2));
  }
  std::vector<int> host(n);
  for (int v = 0; v < n; ++v) {
    host[v] = v;
    if (adj[v].size() >= 2) {
      const auto name = fresh_name(latent_prefix, counter, taken);
      taken.push_back(name);
      host[v] = s.add_node(latent_variable(name, 2));
      s.add_edge(host[v], v);
    }
  }
  auto node_of = [&](int id) { return id < n ? host[id] : id_to_node[id]; };
  for (int a = 0; a < static_cast<int>(adj.size()); ++a)
    for (int b : adj[a])
      if (a < b) s.add_edge(node_of(a), node_of(b));

  int root = -1;
  for (int v = 0; v < static_cast<int>(s.size()); ++v)
    if (s.nodes[v].latent()) {
      root = v;
      break;
    }
  auto model = regularize(make_model(std::move(s), root));
  const auto latents = model.latent_nodes();
  ScoredModel best = cardinality_search(model, latents, data, cfg);
  const auto regular = regularize(best.model);
  if (regular.size() != best.model.size() || regular.tables != best.model.tables)
    best = refine_scored(regular, data, cfg.em);

  // The independence model (a single one-state latent) competes as well.
  const auto names = data.names();
  auto independent = fit_scored(lcm_structure(data, names, fresh_name(latent_prefix, counter, taken), 1),
                                data, cfg.em);
  if (independent.bic > best.bic) best = std::move(independent);
  return best;
}

}  // namespace ltm
