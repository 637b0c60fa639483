#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ltm/error.hpp"
#include "ltm/random.hpp"
#include "ltm/variable.hpp"

namespace ltm {

// Undirected graph over variables. A valid latent tree structure is connected,
// acyclic, and has every observed node as a leaf.
struct TreeStructure {
  std::vector<Variable> nodes;
  std::vector<std::pair<int, int>> edges;

  std::size_t size() const { return nodes.size(); }

  int add_node(Variable v) {
    nodes.push_back(std::move(v));
    return static_cast<int>(nodes.size()) - 1;
  }

  void add_edge(int a, int b) { edges.emplace_back(a, b); }

  void add_edge(std::string_view a, std::string_view b) {
    add_edge(require(a), require(b));
  }

  int index_of(std::string_view name) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].name == name) return static_cast<int>(i);
    return -1;
  }

  int require(std::string_view name) const {
    const int i = index_of(name);
    if (i < 0) throw ModelError("unknown node '" + std::string(name) + "'");
    return i;
  }

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(nodes.size());
    for (auto [a, b] : edges) {
      if (a < 0 || b < 0 || a >= static_cast<int>(nodes.size()) ||
          b >= static_cast<int>(nodes.size()))
        continue;
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    for (auto& nb : adj) std::sort(nb.begin(), nb.end());
    return adj;
  }
};

// Rooted parameterization of a latent tree. `tables[root]` is the root
// marginal; for any other node v, `tables[v]` is the |parent| x |v| row-major
// matrix whose row j is P(v | parent = j).
struct LatentTreeModel {
  TreeStructure structure;
  int root = -1;
  std::vector<int> parent;
  std::vector<std::vector<double>> tables;

  std::size_t size() const { return structure.size(); }
  const Variable& variable(int v) const { return structure.nodes[v]; }
  int cardinality(int v) const { return structure.nodes[v].cardinality; }
  int index_of(std::string_view name) const { return structure.index_of(name); }
  int require(std::string_view name) const { return structure.require(name); }

  // P(v = state | parent(v) = parent_state); for the root the parent state is
  // ignored.
  double conditional(int v, int parent_state, int state) const {
    if (v == root) return tables[v][state];
    return tables[v][parent_state * cardinality(v) + state];
  }

  std::span<const double> conditional_row(int v, int parent_state) const {
    if (v == root) return tables[v];
    const auto c = static_cast<std::size_t>(cardinality(v));
    return std::span<const double>(tables[v]).subspan(parent_state * c, c);
  }

  std::vector<int> observed_nodes() const {
    std::vector<int> out;
    for (std::size_t v = 0; v < size(); ++v)
      if (structure.nodes[v].observed()) out.push_back(static_cast<int>(v));
    return out;
  }

  std::vector<int> latent_nodes() const {
    std::vector<int> out;
    for (std::size_t v = 0; v < size(); ++v)
      if (structure.nodes[v].latent()) out.push_back(static_cast<int>(v));
    return out;
  }

  std::vector<std::string> observed_names() const {
    std::vector<std::string> out;
    for (int v : observed_nodes()) out.push_back(variable(v).name);
    return out;
  }

  std::vector<std::vector<int>> children() const {
    std::vector<std::vector<int>> ch(size());
    for (std::size_t v = 0; v < size(); ++v)
      if (parent[v] >= 0) ch[parent[v]].push_back(static_cast<int>(v));
    return ch;
  }

  // Nodes ordered so that every parent precedes its children (BFS from root).
  std::vector<int> preorder() const {
    const auto ch = children();
    std::vector<int> order;
    order.reserve(size());
    if (root < 0) return order;
    order.push_back(root);
    for (std::size_t i = 0; i < order.size(); ++i)
      for (int c : ch[order[i]]) order.push_back(c);
    return order;
  }
};

namespace detail {

inline std::size_t table_size(const LatentTreeModel& m, int v) {
  const auto c = static_cast<std::size_t>(m.cardinality(v));
  return v == m.root ? c : c * static_cast<std::size_t>(m.cardinality(m.parent[v]));
}

// Parent array obtained by orienting a tree away from `root`; empty when the
// structure is not a spanning tree.
inline std::vector<int> orient(const TreeStructure& s, int root) {
  const int n = static_cast<int>(s.size());
  if (root < 0 || root >= n || static_cast<int>(s.edges.size()) != n - 1) return {};
  const auto adj = s.adjacency();
  std::vector<int> parent(n, -2);
  parent[root] = -1;
  std::queue<int> q;
  q.push(root);
  int seen = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int w : adj[u]) {
      if (w == parent[u]) continue;
      if (parent[w] != -2) return {};
      parent[w] = u;
      ++seen;
      q.push(w);
    }
  }
  if (seen != n) return {};
  return parent;
}

}  // namespace detail

// Orients `structure` at `root` and fills every table with uniform
// distributions. Throws when the structure is not a tree.
inline LatentTreeModel make_model(TreeStructure structure, int root) {
  auto parent = detail::orient(structure, root);
  if (parent.empty()) throw ModelError("structure is not a tree");
  LatentTreeModel m;
  m.structure = std::move(structure);
  m.root = root;
  m.parent = std::move(parent);
  m.tables.resize(m.size());
  for (std::size_t v = 0; v < m.size(); ++v) {
    const int c = m.cardinality(static_cast<int>(v));
    m.tables[v].assign(detail::table_size(m, static_cast<int>(v)), 1.0 / c);
  }
  return m;
}

inline LatentTreeModel make_model(TreeStructure structure, std::string_view root) {
  const int r = structure.require(root);
  return make_model(std::move(structure), r);
}

// Replaces every distribution in the model with an independent Dirichlet(1)
// draw.
inline void randomize_parameters(LatentTreeModel& m, Rng& rng) {
  for (std::size_t v = 0; v < m.size(); ++v) {
    const auto c = static_cast<std::size_t>(m.cardinality(static_cast<int>(v)));
    auto& t = m.tables[v];
    for (std::size_t off = 0; off < t.size(); off += c)
      rng.dirichlet(std::span<double>(t).subspan(off, c));
  }
}

inline std::vector<std::string> validate(const TreeStructure& s) {
  std::vector<std::string> out;
  const int n = static_cast<int>(s.size());
  std::set<std::string_view> names;
  for (const auto& v : s.nodes) {
    if (v.cardinality < 1) out.push_back("variable '" + v.name + "' has cardinality < 1");
    if (!names.insert(v.name).second) out.push_back("duplicate variable name '" + v.name + "'");
  }
  bool edges_ok = true;
  std::set<std::pair<int, int>> seen;
  for (auto [a, b] : s.edges) {
    if (a < 0 || b < 0 || a >= n || b >= n || a == b) {
      out.push_back("edge references an invalid node");
      edges_ok = false;
    } else if (!seen.insert({std::min(a, b), std::max(a, b)}).second) {
      out.push_back("duplicate edge");
      edges_ok = false;
    }
  }
  if (n == 0) {
    out.push_back("empty structure");
    return out;
  }
  if (!edges_ok || detail::orient(s, 0).empty()) out.push_back("not a tree");
  const auto adj = s.adjacency();
  for (int v = 0; v < n; ++v) {
    if (s.nodes[v].observed() && adj[v].size() > 1)
      out.push_back("observed node not a leaf: '" + s.nodes[v].name + "'");
    if (s.nodes[v].latent() && adj[v].size() <= 1)
      out.push_back("latent node is a leaf: '" + s.nodes[v].name + "'");
  }
  return out;
}

// Diagnostic check of all structural and normalization invariants. An empty
// result means the model is valid.
inline std::vector<std::string> validate(const LatentTreeModel& m, double tol = 1e-12) {
  auto out = validate(m.structure);
  const int n = static_cast<int>(m.size());
  if (m.root < 0 || m.root >= n) {
    out.push_back("root not in model");
    return out;
  }
  const auto expected = detail::orient(m.structure, m.root);
  if (expected.empty()) return out;
  if (m.parent != expected) out.push_back("parent links disagree with edges and root");
  if (static_cast<int>(m.tables.size()) != n) {
    out.push_back("missing conditional tables");
    return out;
  }
  for (int v = 0; v < n; ++v) {
    const auto& name = m.variable(v).name;
    const auto c = static_cast<std::size_t>(m.cardinality(v));
    const std::size_t rows =
        v == m.root ? 1 : static_cast<std::size_t>(m.cardinality(expected[v]));
    const auto& t = m.tables[v];
    if (t.size() != rows * c) {
      out.push_back("table for '" + name + "' has wrong shape");
      continue;
    }
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (std::size_t i = 0; i < c; ++i) {
        const double p = t[r * c + i];
        if (!(p >= 0.0 && p <= 1.0)) {
          out.push_back("table for '" + name + "' has an entry outside [0,1]");
          break;
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > tol) {
        out.push_back("table for '" + name + "' row " + std::to_string(r) +
                      " does not sum to 1");
      }
    }
  }
  return out;
}

// floor(prod |Z_i| / max |Z_i|) over the neighbors of a latent node. For a
// node with exactly two neighbors the caller applies the inequality strictly.
inline std::int64_t regularity_bound(const LatentTreeModel& m, int latent) {
  if (latent < 0 || latent >= static_cast<int>(m.size()))
    throw ModelError("node index out of range");
  if (!m.variable(latent).latent())
    throw ModelError("'" + m.variable(latent).name + "' is not latent");
  const auto adj = m.structure.adjacency();
  const auto& nb = adj[latent];
  if (nb.size() < 2)
    throw ModelError("latent '" + m.variable(latent).name + "' has fewer than two neighbors");
  // Products saturate well above any cardinality that could matter.
  constexpr std::int64_t cap = std::int64_t{1} << 40;
  std::int64_t prod = 1, max_card = 0;
  for (int w : nb) {
    const std::int64_t c = m.cardinality(w);
    max_card = std::max(max_card, c);
    prod = std::min(cap, prod * c);
  }
  return prod / max_card;
}

inline std::int64_t regularity_bound(const LatentTreeModel& m, std::string_view latent) {
  return regularity_bound(m, m.require(latent));
}

// Largest cardinality a latent may take at its current position.
inline std::int64_t max_regular_cardinality(const LatentTreeModel& m, int latent) {
  const auto degree = m.structure.adjacency()[latent].size();
  const auto bound = regularity_bound(m, latent);
  return degree == 2 ? bound - 1 : bound;
}

inline bool is_regular(const LatentTreeModel& m) {
  const auto adj = m.structure.adjacency();
  for (int v : m.latent_nodes()) {
    if (adj[v].size() < 2) return false;
    if (m.cardinality(v) > max_regular_cardinality(m, v)) return false;
  }
  return true;
}

// Number of free parameters of the rooted parameterization.
inline std::int64_t dimension(const LatentTreeModel& m) {
  std::int64_t d = 0;
  for (int v = 0; v < static_cast<int>(m.size()); ++v) {
    const std::int64_t c = m.cardinality(v);
    d += v == m.root ? c - 1 : m.cardinality(m.parent[v]) * (c - 1);
  }
  return d;
}

// Prior marginal of every node.
inline std::vector<std::vector<double>> node_marginals(const LatentTreeModel& m) {
  std::vector<std::vector<double>> mu(m.size());
  for (int v : m.preorder()) {
    const int c = m.cardinality(v);
    if (v == m.root) {
      mu[v] = m.tables[v];
      continue;
    }
    const int p = m.parent[v];
    mu[v].assign(c, 0.0);
    for (int j = 0; j < m.cardinality(p); ++j) {
      const auto row = m.conditional_row(v, j);
      for (int i = 0; i < c; ++i) mu[v][i] += mu[p][j] * row[i];
    }
  }
  return mu;
}

// Moves the root to `new_root`, re-deriving the tables along the path by
// Bayes' rule so that the joint distribution over all nodes is unchanged.
inline LatentTreeModel reroot(const LatentTreeModel& m, int new_root) {
  if (new_root < 0 || new_root >= static_cast<int>(m.size()))
    throw ModelError("new root not in model");
  if (new_root == m.root) return m;
  const auto mu = node_marginals(m);
  LatentTreeModel out = m;
  std::vector<int> path;  // new_root, ..., old root
  for (int v = new_root; v >= 0; v = m.parent[v]) path.push_back(v);
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const int child = path[k];       // becomes parent
    const int par = path[k + 1];     // becomes child
    const int cc = m.cardinality(child), pc = m.cardinality(par);
    std::vector<double> flipped(static_cast<std::size_t>(cc) * pc);
    for (int i = 0; i < cc; ++i) {
      for (int j = 0; j < pc; ++j) {
        const double num = m.conditional(child, j, i) * mu[par][j];
        flipped[i * pc + j] = mu[child][i] > 0.0 ? num / mu[child][i] : 1.0 / pc;
      }
      if (mu[child][i] > 0.0) {
        double s = 0.0;
        for (int j = 0; j < pc; ++j) s += flipped[i * pc + j];
        for (int j = 0; j < pc; ++j) flipped[i * pc + j] /= s;
      }
    }
    out.tables[par] = std::move(flipped);
    out.parent[par] = child;
  }
  out.parent[new_root] = -1;
  out.tables[new_root] = mu[new_root];
  out.root = new_root;
  return out;
}

inline LatentTreeModel reroot(const LatentTreeModel& m, std::string_view new_root) {
  const int r = m.index_of(new_root);
  if (r < 0) throw ModelError("new root '" + std::string(new_root) + "' not in model");
  return reroot(m, r);
}

namespace detail {

// Deletes node `z`, which must be a leaf or have exactly one child whose table
// has already been rewritten to refer to z's parent. Indices above z shift
// down by one.
inline LatentTreeModel erase_node(const LatentTreeModel& m, int z) {
  LatentTreeModel out;
  const int n = static_cast<int>(m.size());
  auto remap = [z](int v) { return v < z ? v : v - 1; };
  for (int v = 0; v < n; ++v)
    if (v != z) out.structure.nodes.push_back(m.structure.nodes[v]);
  std::vector<int> parent;
  for (int v = 0; v < n; ++v) {
    if (v == z) continue;
    int p = m.parent[v];
    if (p == z) p = m.parent[z];
    parent.push_back(p < 0 ? -1 : remap(p));
    out.tables.push_back(m.tables[v]);
  }
  out.parent = std::move(parent);
  out.root = remap(m.root);
  for (int v = 0; v < n - 1; ++v)
    if (out.parent[v] >= 0) out.structure.edges.emplace_back(out.parent[v], v);
  return out;
}

inline void truncate_cardinality(LatentTreeModel& m, int z, int new_card) {
  const int old_card = m.cardinality(z);
  if (new_card >= old_card) return;
  auto normalize_rows = [](std::vector<double>& t, std::size_t width) {
    for (std::size_t off = 0; off < t.size(); off += width) {
      double s = 0.0;
      for (std::size_t i = 0; i < width; ++i) s += t[off + i];
      for (std::size_t i = 0; i < width; ++i)
        t[off + i] = s > 0.0 ? t[off + i] / s : 1.0 / static_cast<double>(width);
    }
  };
  // Table of z: keep the first new_card columns of each row.
  {
    const std::size_t rows = z == m.root ? 1 : m.cardinality(m.parent[z]);
    std::vector<double> t;
    for (std::size_t r = 0; r < rows; ++r)
      for (int i = 0; i < new_card; ++i) t.push_back(m.tables[z][r * old_card + i]);
    normalize_rows(t, new_card);
    m.tables[z] = std::move(t);
  }
  // Children of z: keep the first new_card rows.
  for (std::size_t v = 0; v < m.size(); ++v) {
    if (m.parent[v] != z) continue;
    const auto c = static_cast<std::size_t>(m.cardinality(static_cast<int>(v)));
    m.tables[v].resize(static_cast<std::size_t>(new_card) * c);
  }
  m.structure.nodes[z].cardinality = new_card;
}

}  // namespace detail

// Returns a regular model. Oversized latents are truncated to their bound;
// degree-2 latents that violate the strict bound are absorbed into an
// adjacent latent (composing the two conditionals), or reduced to a single
// state when both neighbors are observed; latent leaves are dropped.
// Truncated tables are only renormalized, so callers re-estimate parameters
// wherever the structure changed.
inline LatentTreeModel regularize(const LatentTreeModel& input) {
  LatentTreeModel m = input;
  bool changed = true;
  while (changed) {
    changed = false;
    const auto adj = m.structure.adjacency();
    for (int z : m.latent_nodes()) {
      const auto& nb = adj[z];
      if (nb.empty()) continue;
      if (nb.size() == 1) {
        const std::string root_name = m.variable(m.root).name;
        LatentTreeModel r = z == m.root ? reroot(m, nb[0]) : m;
        m = detail::erase_node(r, z);
        if (const int old = m.index_of(root_name); old >= 0) m = reroot(m, old);
        changed = true;
        break;
      }
      const auto bound = regularity_bound(m, z);
      if (nb.size() >= 3) {
        if (m.cardinality(z) > bound) {
          detail::truncate_cardinality(m, z, static_cast<int>(bound));
          changed = true;
          break;
        }
        continue;
      }
      // Exactly two neighbors: strict inequality.
      if (m.cardinality(z) < bound) continue;
      int absorber = -1;
      for (int w : nb)
        if (m.variable(w).latent()) absorber = w;
      if (absorber < 0) {
        if (m.cardinality(z) > 1) {
          detail::truncate_cardinality(m, z, 1);
          changed = true;
          break;
        }
        continue;
      }
      const std::string root_name = m.variable(m.root).name;
      const std::string absorber_name = m.variable(absorber).name;
      LatentTreeModel r = reroot(m, absorber);
      const int other = nb[0] == absorber ? nb[1] : nb[0];
      const int zc = r.cardinality(z), oc = r.cardinality(other), ac = r.cardinality(absorber);
      std::vector<double> composed(static_cast<std::size_t>(ac) * oc, 0.0);
      for (int j = 0; j < ac; ++j)
        for (int s = 0; s < zc; ++s) {
          const double pz = r.conditional(z, j, s);
          for (int i = 0; i < oc; ++i) composed[j * oc + i] += pz * r.conditional(other, s, i);
        }
      r.tables[other] = std::move(composed);
      m = detail::erase_node(r, z);
      if (const int old = m.index_of(root_name); old >= 0 && root_name != absorber_name)
        m = reroot(m, old);
      changed = true;
      break;
    }
  }
  return m;
}

}  // namespace ltm
