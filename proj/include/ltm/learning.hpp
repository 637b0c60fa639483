#pragma once

// Settings and small search helpers shared by the structure learners.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ltm/dataset.hpp"
#include "ltm/em.hpp"
#include "ltm/error.hpp"
#include "ltm/model.hpp"
#include "ltm/score.hpp"

namespace ltm {

struct LearnConfig {
  EmConfig em;
  double ud_threshold = 3.0;   // BIC units
  double rg_tolerance = 0.1;   // relative grouping tolerance at 10,000 records
  bool binary_latents = false;
  int max_cardinality = 0;     // 0: only the regularity bound applies

  void check() const {
    em.check();
    if (!(ud_threshold >= 0.0)) throw DataError("unidimensionality threshold must be >= 0");
    if (!(rg_tolerance >= 0.0)) throw DataError("grouping tolerance must be >= 0");
    if (max_cardinality < 0) throw DataError("max cardinality must be >= 0");
  }
};

struct ScoredModel {
  LatentTreeModel model;
  double log_likelihood = kNegInf;
  double bic = kNegInf;
};

inline ScoredModel fit_scored(const LatentTreeModel& structure, const WeightedDataset& data,
                              const EmConfig& cfg) {
  auto r = em_fit(structure, data, cfg);
  const double score = bic_from(r.log_likelihood, dimension(r.model), data.total_weight());
  return {std::move(r.model), r.log_likelihood, score};
}

inline ScoredModel refine_scored(const LatentTreeModel& model, const WeightedDataset& data,
                                 const EmConfig& cfg) {
  auto r = em_refine(model, data, cfg);
  const double score = bic_from(r.log_likelihood, dimension(r.model), data.total_weight());
  return {std::move(r.model), r.log_likelihood, score};
}

// Same structure and root with one node's cardinality changed; all tables are
// reset to uniform.
inline LatentTreeModel with_cardinality(const LatentTreeModel& m, int node, int card) {
  TreeStructure s = m.structure;
  s.nodes[node].cardinality = card;
  return make_model(std::move(s), m.root);
}

inline int cardinality_cap(const LatentTreeModel& m, int latent, const LearnConfig& cfg) {
  if (cfg.binary_latents) return 2;
  std::int64_t cap = max_regular_cardinality(m, latent);
  if (cfg.max_cardinality > 0) cap = std::min<std::int64_t>(cap, cfg.max_cardinality);
  return static_cast<int>(std::max<std::int64_t>(cap, 1));
}

// Coordinate-wise cardinality search: every listed latent starts at 2 and is
// incremented while BIC improves and the regularity bound allows. Latents
// whose bound is below 2 keep that bound.
inline ScoredModel cardinality_search(const LatentTreeModel& structure, std::span<const int> latents,
                                      const WeightedDataset& data, const LearnConfig& cfg) {
  TreeStructure s = structure.structure;
  for (int z : latents) s.nodes[z].cardinality = 2;
  LatentTreeModel start = make_model(std::move(s), structure.root);
  for (int z : latents) {
    const int cap = cardinality_cap(start, z, cfg);
    if (cap < 2) start = with_cardinality(start, z, cap);
  }
  ScoredModel best = fit_scored(start, data, cfg.em);
  if (cfg.binary_latents) return best;
  bool improved = true;
  while (improved) {
    improved = false;
    for (int z : latents) {
      while (best.model.cardinality(z) + 1 <= cardinality_cap(best.model, z, cfg)) {
        auto candidate =
            fit_scored(with_cardinality(best.model, z, best.model.cardinality(z) + 1), data, cfg.em);
        if (!(candidate.bic > best.bic)) break;
        best = std::move(candidate);
        improved = true;
      }
    }
  }
  return best;
}

// Latent class model over the named dataset variables with a single latent.
inline LatentTreeModel lcm_structure(const WeightedDataset& data,
                                     std::span<const std::string> members,
                                     const std::string& latent_name, int card = 2) {
  TreeStructure s;
  s.add_node(latent_variable(latent_name, card));
  for (const auto& name : members) {
    const int i = data.require_index(name);
    s.add_edge(0, s.add_node(data.variables()[i]));
  }
  return make_model(std::move(s), 0);
}

// Latent class model with BIC-selected cardinality. With two members the
// regularity bound would force a single state, so the latent is kept binary;
// callers attach it to further neighbors before regularizing.
inline ScoredModel learn_lcm(const WeightedDataset& data, std::span<const std::string> members,
                             const std::string& latent_name, const LearnConfig& cfg) {
  const auto sub = project(data, members);
  const auto m = lcm_structure(sub, members, latent_name);
  if (members.size() <= 2) return fit_scored(m, sub, cfg.em);
  const std::vector<int> latents = {0};
  return cardinality_search(m, latents, sub, cfg);
}

// Fresh node name with the given prefix that does not occur in `taken`.
inline std::string fresh_name(const std::string& prefix, int& counter,
                              const std::vector<std::string>& taken) {
  for (;;) {
    std::string name = prefix + std::to_string(++counter);
    if (std::find(taken.begin(), taken.end(), name) == taken.end()) return name;
  }
}

}  // namespace ltm
