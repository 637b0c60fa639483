#pragma once

// Shared generators and brute-force oracles for the test suites. Nothing here
// calls into the message-passing code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ltm/ltm.hpp"

namespace ltm::testing {

// Binary symmetric conditional: P(child = parent) = 1 - flip.
inline std::vector<double> channel(double flip) {
  return {1.0 - flip, flip, flip, 1.0 - flip};
}

// The two-latent tree Y1 - Y2 with leaves X1, X2, X3 on Y1 and X4, X5 on Y2,
// rooted at Y1. All variables binary; `strong` edges flip with probability
// `leaf_flip`, the latent link with `latent_flip`.
inline LatentTreeModel figure1_model(double leaf_flip = 0.1, double latent_flip = 0.15,
                                     double root_p = 0.5) {
  TreeStructure s;
  s.add_node(latent_variable("Y1", 2));
  s.add_node(latent_variable("Y2", 2));
  for (int i = 1; i <= 5; ++i) s.add_node(observed_variable("X" + std::to_string(i), 2));
  s.add_edge("Y1", "Y2");
  s.add_edge("Y1", "X1");
  s.add_edge("Y1", "X2");
  s.add_edge("Y1", "X3");
  s.add_edge("Y2", "X4");
  s.add_edge("Y2", "X5");
  auto m = make_model(std::move(s), "Y1");
  m.tables[m.require("Y1")] = {root_p, 1.0 - root_p};
  m.tables[m.require("Y2")] = channel(latent_flip);
  // Slightly asymmetric leaf channels keep the parameters generic.
  const double skew[] = {0.0, 0.02, -0.02, 0.01, -0.01};
  for (int i = 1; i <= 5; ++i) {
    const double f = leaf_flip + skew[i - 1];
    m.tables[m.require("X" + std::to_string(i))] = {1.0 - f, f, f + 0.03, 1.0 - f - 0.03};
  }
  return m;
}

// Latent class model: one latent of cardinality `k` with `leaves` observed
// children of cardinality `leaf_card`, random parameters.
inline LatentTreeModel random_lcm(Rng& rng, int leaves, int k = 2, int leaf_card = 2) {
  TreeStructure s;
  s.add_node(latent_variable("Z", k));
  for (int i = 0; i < leaves; ++i) {
    s.add_node(observed_variable("X" + std::to_string(i + 1), leaf_card));
    s.add_edge(0, i + 1);
  }
  auto m = make_model(std::move(s), 0);
  randomize_parameters(m, rng);
  return m;
}

// Random valid latent tree: `latents` latent nodes in a random tree, every
// latent topped up with observed leaves to degree >= 3, then further leaves
// attached at random until there are at least `observed` of them.
// Cardinalities are drawn from [2, max_card].
inline LatentTreeModel random_model(Rng& rng, int latents, int observed, int max_card = 2) {
  TreeStructure s;
  auto card = [&] { return 2 + static_cast<int>(rng.below(max_card - 1)); };
  for (int i = 0; i < latents; ++i) s.add_node(latent_variable("H" + std::to_string(i), card()));
  std::vector<int> degree(latents, 0);
  for (int i = 1; i < latents; ++i) {
    const int p = static_cast<int>(rng.below(i));
    s.add_edge(p, i);
    ++degree[p];
    ++degree[i];
  }
  std::vector<int> hosts;
  for (int i = 0; i < latents; ++i)
    for (int k = degree[i]; k < 3; ++k) hosts.push_back(i);
  while (static_cast<int>(hosts.size()) < observed)
    hosts.push_back(static_cast<int>(rng.below(latents)));
  for (std::size_t k = 0; k < hosts.size(); ++k) {
    const int v = s.add_node(observed_variable("X" + std::to_string(k + 1), card()));
    s.add_edge(hosts[k], v);
  }
  auto m = make_model(std::move(s), static_cast<int>(rng.below(latents)));
  randomize_parameters(m, rng);
  return m;
}

// Random tree as above whose conditionals keep most mass on a matching state,
// so that leaf-to-leaf joints stay well conditioned.
inline LatentTreeModel informative_model(Rng& rng, int latents, int observed, int max_card = 2) {
  auto m = random_model(rng, latents, observed, max_card);
  for (std::size_t v = 0; v < m.size(); ++v) {
    const int p = m.parent[v];
    if (p < 0) continue;
    const int cp = m.cardinality(p), cv = m.cardinality(static_cast<int>(v));
    auto& t = m.tables[v];
    for (int a = 0; a < cp; ++a) {
      const double keep = 0.6 + 0.3 * rng.uniform();
      for (int b = 0; b < cv; ++b)
        t[a * cv + b] = (1.0 - keep) * t[a * cv + b] + (b == a % cv ? keep : 0.0);
    }
  }
  return m;
}

// Two-level topic generator: root T over four binary topics, each topic over
// three binary words ("w1".."w12"; topic k owns words 3k-2..3k). Words are
// rare unless their topic is on.
inline LatentTreeModel two_level_model(double topic_flip = 0.2, double word_on = 0.75,
                                       double word_off = 0.06) {
  TreeStructure s;
  s.add_node(latent_variable("T", 2));
  for (int k = 1; k <= 4; ++k) {
    const std::string topic = "G" + std::to_string(k);
    s.add_node(latent_variable(topic, 2));
    s.add_edge("T", topic);
    for (int i = 0; i < 3; ++i) {
      const std::string word = "w" + std::to_string(3 * (k - 1) + i + 1);
      s.add_node(observed_variable(word, 2));
      s.add_edge(topic, word);
    }
  }
  auto m = make_model(std::move(s), "T");
  m.tables[m.require("T")] = {0.6, 0.4};
  for (int k = 1; k <= 4; ++k) {
    const auto topic = "G" + std::to_string(k);
    m.tables[m.require(topic)] = {1.0 - topic_flip, topic_flip, topic_flip, 1.0 - topic_flip};
    for (int i = 0; i < 3; ++i) {
      const double off = word_off + 0.01 * i, on = word_on - 0.05 * i;
      m.tables[m.require("w" + std::to_string(3 * (k - 1) + i + 1))] = {1.0 - off, off, 1.0 - on, on};
    }
  }
  return m;
}

// Name of the latent adjacent to each observed variable.
inline std::map<std::string, std::string> observed_parents(const LatentTreeModel& m) {
  std::map<std::string, std::string> out;
  const auto adj = m.structure.adjacency();
  for (int v : m.observed_nodes())
    for (int w : adj[v])
      if (m.variable(w).latent()) out[m.variable(v).name] = m.variable(w).name;
  return out;
}

// Adjusted Rand index of two groupings of the same keys, by pair counting.
inline double grouping_ari(const std::map<std::string, std::string>& a,
                           const std::map<std::string, std::string>& b) {
  std::vector<std::string> keys;
  for (const auto& [k, v] : a) keys.push_back(k);
  double both = 0, in_a = 0, in_b = 0, pairs = 0;
  for (std::size_t i = 0; i < keys.size(); ++i)
    for (std::size_t j = i + 1; j < keys.size(); ++j) {
      const bool sa = a.at(keys[i]) == a.at(keys[j]), sb = b.at(keys[i]) == b.at(keys[j]);
      both += sa && sb;
      in_a += sa;
      in_b += sb;
      pairs += 1;
    }
  const double expected = in_a * in_b / pairs, maximum = 0.5 * (in_a + in_b);
  return maximum == expected ? 1.0 : (both - expected) / (maximum - expected);
}

// Class variable C (three classes) over four binary factors F1..F4, each with
// three binary items ("a1".."a12"). Items are dependent given C, which breaks
// local independence. Class 0 switches no factor on, class 1 switches on F1
// and F2, class 2 switches on F3 and F4; `factor_noise` and `item_noise` are
// the corresponding flip probabilities.
inline LatentTreeModel class_factor_model(double factor_noise = 0.1, double item_noise = 0.15) {
  TreeStructure s;
  s.add_node(latent_variable("C", 3));
  for (int f = 1; f <= 4; ++f) {
    const auto factor = "F" + std::to_string(f);
    s.add_node(latent_variable(factor, 2));
    s.add_edge("C", factor);
    for (int i = 1; i <= 3; ++i) {
      const auto item = "a" + std::to_string(3 * (f - 1) + i);
      s.add_node(observed_variable(item, 2));
      s.add_edge(factor, item);
    }
  }
  auto m = make_model(std::move(s), "C");
  m.tables[m.require("C")] = {0.3, 0.3, 0.4};
  for (int f = 1; f <= 4; ++f) {
    auto& t = m.tables[m.require("F" + std::to_string(f))];
    t.clear();
    for (int c = 0; c < 3; ++c) {
      const bool on = (c == 1 && f <= 2) || (c == 2 && f >= 3);
      const double p1 = on ? 1.0 - factor_noise : factor_noise;
      t.push_back(1.0 - p1);
      t.push_back(p1);
    }
    for (int i = 1; i <= 3; ++i)
      m.tables[m.require("a" + std::to_string(3 * (f - 1) + i))] = channel(item_noise + 0.02 * (i - 1));
  }
  return m;
}

// Ancestral sample keeping every variable (latents included) as a column.
inline WeightedDataset sample_all(const LatentTreeModel& m, std::int64_t n, std::uint64_t seed) {
  std::vector<Variable> vars;
  for (std::size_t v = 0; v < m.size(); ++v)
    vars.push_back(observed_variable(m.variable(static_cast<int>(v)).name,
                                     m.cardinality(static_cast<int>(v))));
  DatasetBuilder b(vars);
  Rng rng(seed);
  std::vector<int> state(m.size());
  for (std::int64_t k = 0; k < n; ++k) {
    for (int v : m.preorder()) {
      const int p = m.parent[v];
      state[v] = rng.categorical(m.conditional_row(v, p < 0 ? 0 : state[p]));
    }
    b.add(state);
  }
  return b.build();
}

// Probability of an observed configuration by summing the brute-force joint.
inline std::map<std::vector<int>, double> observed_distribution(const LatentTreeModel& m) {
  const auto joint = brute_force_joint(m);
  const auto obs = m.observed_nodes();
  std::map<std::vector<int>, double> out;
  std::vector<int> states(m.size(), 0), cards;
  for (std::size_t v = 0; v < m.size(); ++v) cards.push_back(m.cardinality(static_cast<int>(v)));
  std::size_t k = 0;
  do {
    std::vector<int> key;
    for (int v : obs) key.push_back(states[v]);
    out[key] += joint.probabilities[k++];
  } while (detail::next_configuration(states, cards));
  return out;
}

// Posterior of `target` given evidence by brute-force enumeration.
inline std::vector<double> enumerate_posterior(const LatentTreeModel& m,
                                               const std::map<int, int>& evidence, int target) {
  const auto joint = brute_force_joint(m);
  std::vector<int> states(m.size(), 0), cards;
  for (std::size_t v = 0; v < m.size(); ++v) cards.push_back(m.cardinality(static_cast<int>(v)));
  std::vector<double> post(m.cardinality(target), 0.0);
  std::size_t k = 0;
  do {
    bool match = true;
    for (auto [v, s] : evidence) match = match && states[v] == s;
    if (match) post[states[target]] += joint.probabilities[k];
    ++k;
  } while (detail::next_configuration(states, cards));
  double total = 0.0;
  for (double p : post) total += p;
  for (double& p : post) p /= total;
  return post;
}

// Leaf bipartitions induced by the edges of an unrooted tree; two leaf-labeled
// trees without degree-2 latents have the same topology iff these sets match.
inline std::set<std::set<std::string>> leaf_splits(const LatentTreeModel& m) {
  const auto adj = m.structure.adjacency();
  const auto obs = m.observed_names();
  const std::string anchor = *std::min_element(obs.begin(), obs.end());
  std::set<std::set<std::string>> splits;
  for (auto [a, b] : m.structure.edges) {
    // Leaves on b's side when the edge is cut.
    std::set<std::string> side;
    std::vector<int> stack = {b};
    std::vector<char> seen(m.size(), 0);
    seen[a] = seen[b] = 1;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      if (m.variable(v).observed()) side.insert(m.variable(v).name);
      for (int w : adj[v])
        if (!seen[w]) seen[w] = 1, stack.push_back(w);
    }
    if (side.count(anchor)) {
      std::set<std::string> other;
      for (const auto& n : obs)
        if (!side.count(n)) other.insert(n);
      side = std::move(other);
    }
    if (side.size() >= 2 && side.size() + 2 <= obs.size()) splits.insert(side);
  }
  return splits;
}

inline bool same_topology(const LatentTreeModel& a, const LatentTreeModel& b) {
  auto oa = a.observed_names(), ob = b.observed_names();
  std::sort(oa.begin(), oa.end());
  std::sort(ob.begin(), ob.end());
  return oa == ob && leaf_splits(a) == leaf_splits(b);
}

inline double linf(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace ltm::testing
