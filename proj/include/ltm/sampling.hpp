#pragma once

#include <cstdint>

#include "ltm/dataset.hpp"
#include "ltm/error.hpp"
#include "ltm/model.hpp"
#include "ltm/random.hpp"

namespace ltm {

// Ancestral sampling of n joint configurations; latent columns are dropped
// and the observed records compressed.
inline WeightedDataset forward_sample(const LatentTreeModel& m, std::int64_t n,
                                      std::uint64_t seed) {
  if (n < 1) throw DataError("sample size must be >= 1");
  if (const auto problems = validate(m, 1e-9); !problems.empty())
    throw ModelError("cannot sample from an invalid model: " + problems.front());
  const auto order = m.preorder();
  const auto obs = m.observed_nodes();
  std::vector<Variable> vars;
  for (int v : obs) vars.push_back(m.variable(v));
  DatasetBuilder b(std::move(vars));
  Rng rng(seed);
  std::vector<int> state(m.size()), rec(obs.size());
  for (std::int64_t k = 0; k < n; ++k) {
    for (int v : order) {
      const int p = m.parent[v];
      state[v] = rng.categorical(m.conditional_row(v, p < 0 ? 0 : state[p]));
    }
    for (std::size_t i = 0; i < obs.size(); ++i) rec[i] = state[obs[i]];
    b.add(rec);
  }
  return b.build();
}

}  // namespace ltm
