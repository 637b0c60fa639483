#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ltm/dataset.hpp"
#include "ltm/error.hpp"
#include "ltm/model.hpp"
#include "ltm/random.hpp"

namespace ltm {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Guards on exhaustive enumeration (number of table cells).
inline constexpr std::int64_t kObservedMarginalGuard = std::int64_t{1} << 20;
inline constexpr std::int64_t kBruteForceGuard = std::int64_t{1} << 22;

// Exact sum-product propagation on a rooted latent tree for one evidence
// configuration at a time. Messages are renormalized at every node and the
// scale factors accumulated in log space, so long chains do not underflow.
//
// Usage: propagate() runs the upward pass and returns ln P(evidence);
// downward() must follow before posterior() or pair_posterior().
class TreePropagator {
 public:
  explicit TreePropagator(const LatentTreeModel& m)
      : m_(m), order_(m.preorder()), children_(m.children()) {
    const auto n = m.size();
    lambda_.resize(n);
    up_.resize(n);
    down_.resize(n);
    pi_.resize(n);
    for (std::size_t v = 0; v < n; ++v) {
      const int c = m.cardinality(static_cast<int>(v));
      lambda_[v].resize(c);
      pi_[v].resize(c);
      if (m.parent[v] >= 0) {
        up_[v].resize(m.cardinality(m.parent[v]));
        down_[v].resize(m.cardinality(m.parent[v]));
      }
    }
    std::size_t max_card = 1;
    for (std::size_t v = 0; v < n; ++v)
      max_card = std::max<std::size_t>(max_card, m.cardinality(static_cast<int>(v)));
    prefix_.resize(max_card);
  }

  const LatentTreeModel& model() const { return m_; }

  // `evidence[v]` is the observed state of node v, or -1 when unobserved.
  // Returns ln P(evidence), or -inf when the evidence is impossible.
  double propagate(std::span<const int> evidence) {
    evidence_ = evidence;
    double log_scale = 0.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      const int v = *it;
      auto& lam = lambda_[v];
      const int c = m_.cardinality(v);
      const int e = evidence[v];
      for (int s = 0; s < c; ++s) lam[s] = (e < 0 || e == s) ? 1.0 : 0.0;
      for (int ch : children_[v])
        for (int s = 0; s < c; ++s) lam[s] *= up_[ch][s];
      double sum = 0.0;
      for (int s = 0; s < c; ++s) sum += lam[s];
      if (!(sum > 0.0)) return impossible();
      for (int s = 0; s < c; ++s) lam[s] /= sum;
      log_scale += std::log(sum);
      if (v == m_.root) break;
      auto& up = up_[v];
      const int pc = m_.cardinality(m_.parent[v]);
      double usum = 0.0;
      for (int j = 0; j < pc; ++j) {
        const auto row = m_.conditional_row(v, j);
        double acc = 0.0;
        for (int s = 0; s < c; ++s) acc += row[s] * lam[s];
        up[j] = acc;
        usum += acc;
      }
      if (!(usum > 0.0)) return impossible();
      for (int j = 0; j < pc; ++j) up[j] /= usum;
      log_scale += std::log(usum);
    }
    const int r = m_.root;
    double z = 0.0;
    for (int s = 0; s < m_.cardinality(r); ++s) z += m_.tables[r][s] * lambda_[r][s];
    if (!(z > 0.0)) return impossible();
    valid_ = true;
    return log_scale + std::log(z);
  }

  void downward() {
    if (!valid_) throw NumericError("downward pass on zero-probability evidence");
    const int r = m_.root;
    pi_[r] = m_.tables[r];
    for (int p : order_) {
      const auto& ch = children_[p];
      if (ch.empty()) continue;
      const int pc = m_.cardinality(p);
      const int e = evidence_[p];
      // base(j) = pi_p(j) * ev_p(j); down_c = base * prod of sibling messages.
      // prefix_ holds the running product over earlier children.
      auto& prefix = prefix_;
      for (int j = 0; j < pc; ++j) prefix[j] = pi_[p][j] * ((e < 0 || e == j) ? 1.0 : 0.0);
      for (int ch_v : ch)
        for (int j = 0; j < pc; ++j) down_[ch_v][j] = prefix[j], prefix[j] *= up_[ch_v][j];
      for (int j = 0; j < pc; ++j) prefix[j] = 1.0;
      for (auto it = ch.rbegin(); it != ch.rend(); ++it) {
        auto& d = down_[*it];
        double sum = 0.0;
        for (int j = 0; j < pc; ++j) {
          d[j] *= prefix[j];
          prefix[j] *= up_[*it][j];
          sum += d[j];
        }
        if (sum > 0.0)
          for (int j = 0; j < pc; ++j) d[j] /= sum;
      }
      for (int c : ch) {
        const int cc = m_.cardinality(c);
        auto& pi = pi_[c];
        for (int s = 0; s < cc; ++s) pi[s] = 0.0;
        for (int j = 0; j < pc; ++j) {
          const double dj = down_[c][j];
          if (dj == 0.0) continue;
          const auto row = m_.conditional_row(c, j);
          for (int s = 0; s < cc; ++s) pi[s] += dj * row[s];
        }
        double sum = 0.0;
        for (int s = 0; s < cc; ++s) sum += pi[s];
        if (sum > 0.0)
          for (int s = 0; s < cc; ++s) pi[s] /= sum;
      }
    }
  }

  // Posterior marginal of node v given the propagated evidence.
  void posterior(int v, std::span<double> out) const {
    const int c = m_.cardinality(v);
    double sum = 0.0;
    for (int s = 0; s < c; ++s) sum += out[s] = pi_[v][s] * lambda_[v][s];
    for (int s = 0; s < c; ++s) out[s] /= sum;
  }

  std::vector<double> posterior(int v) const {
    std::vector<double> out(m_.cardinality(v));
    posterior(v, out);
    return out;
  }

  // Joint posterior of (parent(v), v) written row-major |parent| x |v|.
  void pair_posterior(int v, std::span<double> out) const {
    const int c = m_.cardinality(v);
    const int pc = m_.cardinality(m_.parent[v]);
    double sum = 0.0;
    for (int j = 0; j < pc; ++j) {
      const double dj = down_[v][j];
      const auto row = m_.conditional_row(v, j);
      for (int s = 0; s < c; ++s) sum += out[j * c + s] = dj * row[s] * lambda_[v][s];
    }
    for (int k = 0; k < pc * c; ++k) out[k] /= sum;
  }

 private:
  double impossible() {
    valid_ = false;
    return kNegInf;
  }

  const LatentTreeModel& m_;
  std::vector<int> order_;
  std::vector<std::vector<int>> children_;
  std::vector<std::vector<double>> lambda_, up_, down_, pi_;
  std::vector<double> prefix_;
  std::span<const int> evidence_;
  bool valid_ = false;
};

// Maps every dataset column onto a model node. Dataset variables must be
// observed model variables with compatible cardinality.
inline std::vector<int> bind_columns(const LatentTreeModel& m, const WeightedDataset& data) {
  std::vector<int> nodes;
  for (const auto& var : data.variables()) {
    const int v = m.index_of(var.name);
    if (v < 0)
      throw DataError("dataset variable '" + var.name + "' is not in the model");
    if (!m.variable(v).observed())
      throw DataError("dataset variable '" + var.name + "' is latent in the model");
    if (var.cardinality > m.cardinality(v))
      throw DataError("dataset variable '" + var.name + "' has more states than the model allows");
    nodes.push_back(v);
  }
  return nodes;
}

// Fills `evidence` (one entry per model node) from dataset row r.
inline void fill_evidence(const WeightedDataset& data, std::span<const int> nodes,
                          std::size_t r, std::span<int> evidence) {
  std::fill(evidence.begin(), evidence.end(), -1);
  const auto row = data.row(r);
  for (std::size_t i = 0; i < nodes.size(); ++i) evidence[nodes[i]] = row[i];
}

struct LikelihoodReport {
  double log_likelihood = 0.0;
  std::vector<std::size_t> zero_probability_rows;
};

// Weighted log-likelihood with per-row diagnostics. Dataset variables may be a
// subset of the model's observed variables; the rest are marginalized.
inline LikelihoodReport likelihood_report(const LatentTreeModel& m,
                                          const WeightedDataset& data) {
  const auto nodes = bind_columns(m, data);
  TreePropagator prop(m);
  std::vector<int> evidence(m.size());
  LikelihoodReport rep;
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    fill_evidence(data, nodes, r, evidence);
    const double lp = prop.propagate(evidence);
    if (lp == kNegInf) {
      rep.zero_probability_rows.push_back(r);
      rep.log_likelihood = kNegInf;
    } else if (rep.log_likelihood != kNegInf) {
      rep.log_likelihood += static_cast<double>(data.weight(r)) * lp;
    }
  }
  return rep;
}

inline double log_likelihood(const LatentTreeModel& m, const WeightedDataset& data) {
  return likelihood_report(m, data).log_likelihood;
}

// Variant for learners: zero-probability rows are an error.
inline double checked_log_likelihood(const LatentTreeModel& m, const WeightedDataset& data) {
  const auto rep = likelihood_report(m, data);
  if (!rep.zero_probability_rows.empty())
    throw NumericError(std::to_string(rep.zero_probability_rows.size()) +
                       " dataset row(s) have zero probability under the model");
  return rep.log_likelihood;
}

using Evidence = std::map<std::string, int>;

struct PosteriorTable {
  Variable target;
  std::vector<double> distribution;
};

inline PosteriorTable posterior_marginal(const LatentTreeModel& m, const Evidence& evidence,
                                         std::string_view target) {
  const int t = m.index_of(target);
  if (t < 0) throw ModelError("unknown target '" + std::string(target) + "'");
  std::vector<int> ev(m.size(), -1);
  for (const auto& [name, state] : evidence) {
    const int v = m.index_of(name);
    if (v < 0) throw DataError("unknown evidence variable '" + name + "'");
    if (!m.variable(v).observed())
      throw DataError("evidence on latent variable '" + name + "' is not supported");
    if (state < 0 || state >= m.cardinality(v))
      throw DataError("evidence state out of range for '" + name + "'");
    if (v == t) throw DataError("target '" + name + "' is fixed by the evidence");
    ev[v] = state;
  }
  TreePropagator prop(m);
  if (prop.propagate(ev) == kNegInf) throw NumericError("evidence has zero probability");
  prop.downward();
  return {m.variable(t), prop.posterior(t)};
}

enum class CompletionMode { map, sample };

// Turns latent variables into observed columns: each record receives a state
// for every target, either the posterior mode (ties to the lowest index) or a
// draw from the posterior marginal.
inline WeightedDataset complete_data(const LatentTreeModel& m, const WeightedDataset& data,
                                     std::span<const std::string> targets,
                                     CompletionMode mode = CompletionMode::map,
                                     std::uint64_t seed = 0) {
  std::vector<int> tnodes;
  std::vector<Variable> vars;
  for (const auto& name : targets) {
    const int v = m.index_of(name);
    if (v < 0 || !m.variable(v).latent())
      throw ModelError("completion target '" + name + "' is not a latent node");
    tnodes.push_back(v);
    vars.push_back(observed_variable(name, m.cardinality(v)));
  }
  const auto nodes = bind_columns(m, data);
  TreePropagator prop(m);
  std::vector<int> evidence(m.size());
  DatasetBuilder b(std::move(vars));
  std::vector<int> rec(tnodes.size());
  std::vector<std::vector<double>> post(tnodes.size());
  Rng rng(seed);
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    fill_evidence(data, nodes, r, evidence);
    if (prop.propagate(evidence) == kNegInf)
      throw NumericError("row " + std::to_string(r) + " has zero probability");
    prop.downward();
    for (std::size_t i = 0; i < tnodes.size(); ++i) post[i] = prop.posterior(tnodes[i]);
    if (mode == CompletionMode::map) {
      for (std::size_t i = 0; i < tnodes.size(); ++i)
        rec[i] = static_cast<int>(std::max_element(post[i].begin(), post[i].end()) -
                                  post[i].begin());
      b.add(rec, data.weight(r));
    } else {
      for (std::int64_t k = 0; k < data.weight(r); ++k) {
        for (std::size_t i = 0; i < tnodes.size(); ++i) rec[i] = rng.categorical(post[i]);
        b.add(rec);
      }
    }
  }
  return b.build();
}

// Posterior-mode state of every target node for each dataset row, indexed
// [row][target]. Dataset columns absent from the model are ignored; ties go
// to the lowest state.
inline std::vector<std::vector<int>> map_assignments(const LatentTreeModel& m,
                                                     const WeightedDataset& data,
                                                     std::span<const int> targets) {
  std::vector<int> nodes;
  for (const auto& var : data.variables()) {
    const int v = m.index_of(var.name);
    nodes.push_back(v >= 0 && m.variable(v).observed() ? v : -1);
  }
  TreePropagator prop(m);
  std::vector<int> evidence(m.size());
  std::vector<std::vector<int>> out(data.num_rows(), std::vector<int>(targets.size()));
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    std::fill(evidence.begin(), evidence.end(), -1);
    const auto row = data.row(r);
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i] >= 0) evidence[nodes[i]] = row[i];
    if (prop.propagate(evidence) == kNegInf)
      throw NumericError("row " + std::to_string(r) + " has zero probability");
    prop.downward();
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const auto post = prop.posterior(targets[t]);
      out[r][t] = static_cast<int>(std::max_element(post.begin(), post.end()) - post.begin());
    }
  }
  return out;
}

// Dense probability table over an ordered variable list, row-major with the
// first variable most significant.
struct JointTable {
  std::vector<Variable> variables;
  std::vector<double> probabilities;

  std::size_t index(std::span<const int> states) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < variables.size(); ++i)
      idx = idx * variables[i].cardinality + states[i];
    return idx;
  }
};

namespace detail {

inline bool next_configuration(std::vector<int>& states, std::span<const int> cards) {
  for (int i = static_cast<int>(states.size()) - 1; i >= 0; --i) {
    if (++states[i] < cards[i]) return true;
    states[i] = 0;
  }
  return false;
}

}  // namespace detail

// Exact joint over the observed variables, obtained by one propagation per
// observed configuration.
inline JointTable observed_marginal(const LatentTreeModel& m) {
  const auto obs = m.observed_nodes();
  JointTable out;
  std::vector<int> cards;
  std::int64_t cells = 1;
  for (int v : obs) {
    out.variables.push_back(m.variable(v));
    cards.push_back(m.cardinality(v));
    cells *= m.cardinality(v);
    if (cells > kObservedMarginalGuard)
      throw NumericError("observed joint exceeds the enumeration guard");
  }
  out.probabilities.reserve(cells);
  TreePropagator prop(m);
  std::vector<int> states(obs.size(), 0), evidence(m.size(), -1);
  do {
    for (std::size_t i = 0; i < obs.size(); ++i) evidence[obs[i]] = states[i];
    const double lp = prop.propagate(evidence);
    out.probabilities.push_back(lp == kNegInf ? 0.0 : std::exp(lp));
  } while (detail::next_configuration(states, cards));
  return out;
}

// Joint over all nodes (index order) by direct product of tables. Intended as
// a test oracle.
inline JointTable brute_force_joint(const LatentTreeModel& m) {
  JointTable out;
  std::vector<int> cards;
  std::int64_t cells = 1;
  for (std::size_t v = 0; v < m.size(); ++v) {
    out.variables.push_back(m.variable(static_cast<int>(v)));
    cards.push_back(m.cardinality(static_cast<int>(v)));
    cells *= cards.back();
    if (cells > kBruteForceGuard) throw NumericError("joint exceeds the enumeration guard");
  }
  out.probabilities.reserve(cells);
  std::vector<int> states(m.size(), 0);
  do {
    double p = 1.0;
    for (std::size_t v = 0; v < m.size(); ++v) {
      const int pv = m.parent[v];
      p *= m.conditional(static_cast<int>(v), pv < 0 ? 0 : states[pv], states[v]);
    }
    out.probabilities.push_back(p);
  } while (detail::next_configuration(states, cards));
  return out;
}

// Sums a joint table down to the named variables (in the given order).
inline JointTable marginalize(const JointTable& joint, std::span<const std::string> keep) {
  JointTable out;
  std::vector<int> pos;
  for (const auto& name : keep) {
    int found = -1;
    for (std::size_t i = 0; i < joint.variables.size(); ++i)
      if (joint.variables[i].name == name) found = static_cast<int>(i);
    if (found < 0) throw ModelError("unknown variable '" + name + "'");
    pos.push_back(found);
    out.variables.push_back(joint.variables[found]);
  }
  std::size_t cells = 1;
  for (const auto& v : out.variables) cells *= v.cardinality;
  out.probabilities.assign(cells, 0.0);
  std::vector<int> cards, states(joint.variables.size(), 0), sub(pos.size());
  for (const auto& v : joint.variables) cards.push_back(v.cardinality);
  std::size_t k = 0;
  do {
    for (std::size_t i = 0; i < pos.size(); ++i) sub[i] = states[pos[i]];
    out.probabilities[out.index(sub)] += joint.probabilities[k++];
  } while (detail::next_configuration(states, cards));
  return out;
}

// Exact joint P(u, v) as a |u| x |v| row-major matrix, composed along the
// tree path between the two nodes.
inline std::vector<double> pairwise_joint(const LatentTreeModel& m, int u, int v,
                                          const std::vector<std::vector<double>>& mu) {
  const int cu = m.cardinality(u);
  // Path u -> lca -> v.
  std::vector<int> up_u, up_v;
  std::vector<int> depth(m.size(), 0);
  for (int w : m.preorder())
    if (m.parent[w] >= 0) depth[w] = depth[m.parent[w]] + 1;
  int a = u, b = v;
  std::vector<int> tail;
  up_u.push_back(a);
  tail.push_back(b);
  while (a != b) {
    if (depth[a] >= depth[b]) {
      a = m.parent[a];
      up_u.push_back(a);
    } else {
      b = m.parent[b];
      tail.push_back(b);
    }
  }
  tail.pop_back();  // lca already in up_u
  std::vector<int> path = up_u;
  path.insert(path.end(), tail.rbegin(), tail.rend());

  // cur = P(u, current node).
  std::vector<double> cur(static_cast<std::size_t>(cu) * cu, 0.0);
  for (int i = 0; i < cu; ++i) cur[i * cu + i] = mu[u][i];
  int cur_card = cu;
  for (std::size_t k = 1; k < path.size(); ++k) {
    const int from = path[k - 1], to = path[k];
    const int tc = m.cardinality(to);
    std::vector<double> next(static_cast<std::size_t>(cu) * tc, 0.0);
    const bool going_up = m.parent[from] == to;
    for (int j = 0; j < cur_card; ++j) {
      for (int t = 0; t < tc; ++t) {
        // P(to = t | from = j)
        double trans;
        if (going_up) {
          trans = mu[from][j] > 0.0 ? m.conditional(from, t, j) * mu[to][t] / mu[from][j]
                                    : (t == 0 ? 1.0 : 0.0);
        } else {
          trans = m.conditional(to, j, t);
        }
        if (trans == 0.0) continue;
        for (int i = 0; i < cu; ++i) next[i * tc + t] += cur[i * cur_card + j] * trans;
      }
    }
    cur = std::move(next);
    cur_card = tc;
  }
  return cur;
}

inline std::vector<double> pairwise_joint(const LatentTreeModel& m, int u, int v) {
  return pairwise_joint(m, u, v, node_marginals(m));
}

}  // namespace ltm
