#pragma once

#include <algorithm>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ltm/bridged_islands.hpp"
#include "ltm/dataset.hpp"
#include "ltm/em.hpp"
#include "ltm/error.hpp"
#include "ltm/inference.hpp"
#include "ltm/learning.hpp"
#include "ltm/model.hpp"

namespace ltm {

// Flat model: bridged islands with binary latents, parameters by progressive
// EM. Every latent keeps at least one observed neighbor.
inline LatentTreeModel learn_flat(const WeightedDataset& data, const LearnConfig& cfg,
                                  const std::string& latent_prefix = "Z") {
  LearnConfig flat = cfg;
  flat.binary_latents = true;
  flat.check();
  for (const auto& v : data.variables())
    if (v.cardinality > 2) throw DataError("flat models need binary variables: '" + v.name + "'");
  const auto islands = build_islands(data, flat, latent_prefix);
  const auto structure = detail::bridge_structure(islands, data, flat.em.smoothing);
  return progressive_em(structure, data, flat.em).refined.model;
}

struct HierarchicalModel {
  std::vector<LatentTreeModel> levels;  // level k+1 observes the latents of level k
  LatentTreeModel merged;               // all layers, word variables as leaves
  std::map<std::string, int> latent_level;  // 1-based level of every latent

  int level_of(const std::string& name) const {
    auto it = latent_level.find(name);
    return it == latent_level.end() ? 0 : it->second;
  }
};

namespace detail {

// Stacks per-level flat models into one tree: latent links inside a level are
// replaced by the level above, except at the top level.
inline LatentTreeModel stack_levels(const std::vector<LatentTreeModel>& levels) {
  TreeStructure s;
  for (std::size_t k = 0; k < levels.size(); ++k)
    for (int v = 0; v < static_cast<int>(levels[k].size()); ++v) {
      const auto& var = levels[k].variable(v);
      if (k == 0 || var.latent()) s.add_node(var);
    }
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const auto& m = levels[k];
    const bool top = k + 1 == levels.size();
    for (auto [a, b] : m.structure.edges) {
      const bool both_latent = m.variable(a).latent() && m.variable(b).latent();
      if (both_latent && !top) continue;
      s.add_edge(m.variable(a).name, m.variable(b).name);
    }
  }
  const auto& top = levels.back();
  return make_model(std::move(s), top.variable(top.root).name);
}

}  // namespace detail

// Learns a flat model, completes its latents, learns a flat model over them,
// and so on up to `max_levels` or until a level has a single latent. The
// stacked model is re-estimated end to end by progressive EM.
inline HierarchicalModel build_hierarchy(const WeightedDataset& data, int max_levels,
                                         const LearnConfig& cfg) {
  if (max_levels < 1) throw DataError("max_levels must be >= 1");
  HierarchicalModel h;
  WeightedDataset current = data;
  for (int level = 1; level <= max_levels; ++level) {
    if (current.num_variables() < 2) break;
    auto flat = learn_flat(current, cfg, "Z" + std::to_string(level) + "_");
    const auto latents = flat.latent_nodes();
    std::vector<std::string> names;
    for (int z : latents) {
      names.push_back(flat.variable(z).name);
      h.latent_level[names.back()] = level;
    }
    h.levels.push_back(std::move(flat));
    if (names.size() <= 1 || level == max_levels) break;
    current = complete_data(h.levels.back(), current, names, CompletionMode::map);
  }
  if (h.levels.size() == 1) {
    h.merged = h.levels[0];
  } else {
    h.merged = progressive_em(detail::stack_levels(h.levels), data, cfg.em).refined.model;
  }
  return h;
}

struct TopicWord {
  std::string word;
  std::vector<double> probabilities;  // P(word present | latent state), per state
};

struct TopicTable {
  std::string latent;
  int level = 0;
  std::vector<double> state_shares;
  int topic_state = 0;
  std::vector<TopicWord> words;  // sorted by the topic state's probability, descending
};

inline constexpr std::size_t kTopicWords = 10;
inline constexpr std::size_t kTopicStateWords = 5;

namespace detail {

inline std::vector<std::vector<int>> subtree_observed(const LatentTreeModel& m) {
  const auto order = m.preorder();
  const auto children = m.children();
  std::vector<std::vector<int>> below(m.size());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int v = *it;
    if (m.variable(v).observed()) below[v].push_back(v);
    for (int c : children[v]) below[v].insert(below[v].end(), below[c].begin(), below[c].end());
  }
  return below;
}

}  // namespace detail

// Topic table of one latent from an exact computation on `m`: the observed
// descendants with the largest spread of presence probability across states
// (at most 10), the topic state chosen by the larger mean presence over the
// first five of them.
inline TopicTable topic_table(const LatentTreeModel& m, int z,
                              const std::vector<std::vector<double>>& mu,
                              const std::vector<int>& words) {
  TopicTable t;
  t.latent = m.variable(z).name;
  t.state_shares = mu[z];
  const int k = m.cardinality(z);
  std::vector<std::pair<double, TopicWord>> scored;
  for (int w : words) {
    const auto joint = pairwise_joint(m, z, w, mu);
    const int cw = m.cardinality(w);
    TopicWord row{m.variable(w).name, std::vector<double>(k, 0.0)};
    for (int s = 0; s < k; ++s)
      row.probabilities[s] = mu[z][s] > 0.0 ? joint[s * cw + (cw - 1)] / mu[z][s] : 0.0;
    const auto [lo, hi] = std::minmax_element(row.probabilities.begin(), row.probabilities.end());
    scored.emplace_back(*hi - *lo, std::move(row));
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second.word < b.second.word;
  });
  if (scored.size() > kTopicWords) scored.resize(kTopicWords);
  std::vector<double> mean(k, 0.0);
  for (std::size_t i = 0; i < std::min(scored.size(), kTopicStateWords); ++i)
    for (int s = 0; s < k; ++s) mean[s] += scored[i].second.probabilities[s];
  t.topic_state = static_cast<int>(std::max_element(mean.begin(), mean.end()) - mean.begin());
  for (auto& [score, row] : scored) t.words.push_back(std::move(row));
  std::stable_sort(t.words.begin(), t.words.end(), [&](const TopicWord& a, const TopicWord& b) {
    return a.probabilities[t.topic_state] > b.probabilities[t.topic_state];
  });
  return t;
}

// One table per latent of the merged model, highest level first.
inline std::vector<TopicTable> extract_topics(const HierarchicalModel& h,
                                              const WeightedDataset& data) {
  const auto& m = h.merged;
  for (const auto& name : data.names()) {
    const int v = m.index_of(name);
    if (v < 0 || !m.variable(v).observed())
      throw DataError("dataset variable '" + name + "' is not a word of the hierarchy");
  }
  const auto mu = node_marginals(m);
  const auto below = detail::subtree_observed(m);
  std::vector<TopicTable> out;
  for (int z : m.latent_nodes()) {
    auto t = topic_table(m, z, mu, below[z]);
    t.level = h.level_of(t.latent);
    out.push_back(std::move(t));
  }
  std::stable_sort(out.begin(), out.end(), [](const TopicTable& a, const TopicTable& b) {
    return a.level != b.level ? a.level > b.level : a.latent < b.latent;
  });
  return out;
}

// Paper-style table: state shares in parentheses, then one row per word.
inline void write_topic_table(std::ostream& out, const TopicTable& t) {
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::fixed << std::setprecision(2);
  out << std::left << std::setw(14) << "";
  for (std::size_t s = 0; s < t.state_shares.size(); ++s) out << std::setw(9) << ("s" + std::to_string(s));
  out << '\n' << std::setw(14) << t.latent;
  for (double p : t.state_shares) {
    std::ostringstream cell;
    cell << std::fixed << std::setprecision(2) << '(' << p << ')';
    out << std::setw(9) << cell.str();
  }
  out << '\n';
  for (const auto& w : t.words) {
    out << std::setw(14) << w.word;
    for (double p : w.probabilities) out << std::setw(9) << p;
    out << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

// Node of the exported topic hierarchy.
struct TopicNode {
  std::string latent;
  int level = 0;
  double share = 0.0;  // probability of the topic state
  std::vector<std::pair<std::string, double>> words;
  std::vector<TopicNode> children;

  bool operator==(const TopicNode&) const = default;
};

// Nested topics: the children of a level-k latent are the level-(k-1)
// latents adjacent to it; siblings ordered by share, descending.
inline std::vector<TopicNode> topic_hierarchy(const std::vector<TopicTable>& topics,
                                              const HierarchicalModel& h) {
  std::map<std::string, const TopicTable*> by_name;
  for (const auto& t : topics) by_name[t.latent] = &t;
  const auto& m = h.merged;
  const auto adj = m.structure.adjacency();
  auto by_share = [](std::vector<TopicNode>& nodes) {
    std::stable_sort(nodes.begin(), nodes.end(), [](const TopicNode& a, const TopicNode& b) {
      return a.share != b.share ? a.share > b.share : a.latent < b.latent;
    });
  };
  auto build = [&](auto&& self, const TopicTable& t) -> TopicNode {
    TopicNode node;
    node.latent = t.latent;
    node.level = t.level;
    node.share = t.state_shares[t.topic_state];
    for (const auto& w : t.words) node.words.emplace_back(w.word, w.probabilities[t.topic_state]);
    for (int v : adj[m.require(t.latent)]) {
      const auto& name = m.variable(v).name;
      auto it = by_name.find(name);
      if (it != by_name.end() && it->second->level == t.level - 1)
        node.children.push_back(self(self, *it->second));
    }
    by_share(node.children);
    return node;
  };
  int top = 0;
  for (const auto& t : topics) top = std::max(top, t.level);
  std::vector<TopicNode> roots;
  for (const auto& t : topics)
    if (t.level == top) roots.push_back(build(build, t));
  by_share(roots);
  return roots;
}

inline nlohmann::json to_json(const TopicNode& node) {
  nlohmann::json words = nlohmann::json::array();
  for (const auto& [w, p] : node.words) words.push_back({{"word", w}, {"probability", p}});
  nlohmann::json children = nlohmann::json::array();
  for (const auto& c : node.children) children.push_back(to_json(c));
  return {{"latent", node.latent}, {"level", node.level}, {"share", node.share},
          {"words", words}, {"children", children}};
}

inline TopicNode topic_node_from_json(const nlohmann::json& j) {
  TopicNode node;
  node.latent = j.at("latent").get<std::string>();
  node.level = j.at("level").get<int>();
  node.share = j.at("share").get<double>();
  for (const auto& w : j.at("words"))
    node.words.emplace_back(w.at("word").get<std::string>(), w.at("probability").get<double>());
  for (const auto& c : j.at("children")) node.children.push_back(topic_node_from_json(c));
  return node;
}

inline std::string hierarchy_to_json(const std::vector<TopicNode>& roots) {
  nlohmann::json topics = nlohmann::json::array();
  for (const auto& r : roots) topics.push_back(to_json(r));
  return nlohmann::json{{"topics", topics}}.dump(2);
}

inline std::vector<TopicNode> hierarchy_from_json(const std::string& text) {
  std::vector<TopicNode> roots;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& t : doc.at("topics")) roots.push_back(topic_node_from_json(t));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed topic hierarchy: ") + e.what());
  }
  return roots;
}

namespace detail {

// Words shown in listings: the first five by topic-state probability.
inline std::vector<std::string> listed_words(const TopicNode& node) {
  std::vector<std::string> out;
  for (const auto& [w, p] : node.words) {
    if (out.size() == kTopicStateWords) break;
    out.push_back(w);
  }
  return out;
}

inline std::string html_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

// Indented listing, one latent per line: "Z2_1: w1 w2 w3".
inline std::string hierarchy_to_text(const std::vector<TopicNode>& roots) {
  std::ostringstream out;
  auto emit = [&](auto&& self, const TopicNode& node, int depth) -> void {
    out << std::string(2 * depth, ' ') << node.latent << ':';
    for (const auto& w : detail::listed_words(node)) out << ' ' << w;
    out << '\n';
    for (const auto& c : node.children) self(self, c, depth + 1);
  };
  for (const auto& r : roots) emit(emit, r, 0);
  return out.str();
}

// Static page with collapsible nesting; no external resources.
inline std::string hierarchy_to_html(const std::vector<TopicNode>& roots) {
  std::ostringstream out;
  out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Topic hierarchy</title>\n"
         "<style>body{font-family:sans-serif}details{margin-left:1.5em}"
         ".share{color:#666}</style></head><body>\n<h1>Topic hierarchy</h1>\n";
  auto emit = [&](auto&& self, const TopicNode& node) -> void {
    out << "<details open><summary><b>" << detail::html_escape(node.latent) << "</b> <span class=\"share\">("
        << std::fixed << std::setprecision(2) << node.share << ")</span>";
    for (const auto& w : detail::listed_words(node)) out << ' ' << detail::html_escape(w);
    out << "</summary>\n";
    for (const auto& c : node.children) self(self, c);
    out << "</details>\n";
  };
  for (const auto& r : roots) emit(emit, r);
  out << "</body></html>\n";
  return out.str();
}

}  // namespace ltm
