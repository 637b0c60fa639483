#pragma once

#include <cmath>

#include "ltm/dataset.hpp"
#include "ltm/inference.hpp"
#include "ltm/model.hpp"

namespace ltm {

// BIC = logL - (d/2) ln N; higher is better. The dataset must cover exactly
// the model's observed variables.
inline double bic(const LatentTreeModel& m, const WeightedDataset& data) {
  if (data.num_variables() != m.observed_nodes().size())
    throw DataError("dataset variables do not match the model's observed variables");
  const double ll = log_likelihood(m, data);
  return ll - 0.5 * static_cast<double>(dimension(m)) *
                  std::log(static_cast<double>(data.total_weight()));
}

// Same score from an already computed log-likelihood.
inline double bic_from(double log_likelihood, std::int64_t dim, std::int64_t total_weight) {
  return log_likelihood -
         0.5 * static_cast<double>(dim) * std::log(static_cast<double>(total_weight));
}

}  // namespace ltm
