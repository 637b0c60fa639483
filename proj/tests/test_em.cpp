#include <gtest/gtest.h>

#include "support.hpp"

using namespace ltm;
using namespace ltm::testing;

namespace {

WeightedDataset scaled(const WeightedDataset& d, std::int64_t factor) {
  DatasetBuilder b(d.variables());
  for (std::size_t r = 0; r < d.num_rows(); ++r) b.add(d.row(r), factor * d.weight(r));
  return b.build();
}

EmConfig config(std::uint64_t seed, int restarts = 3) {
  EmConfig cfg;
  cfg.seed = seed;
  cfg.restarts = restarts;
  cfg.tolerance = 1e-7;
  return cfg;
}

}  // namespace

TEST(EmFit, NoLatentClosedForm) {
  // A single observed variable: the MAP estimate is (count + 1) / (N + k).
  TreeStructure s;
  s.add_node(observed_variable("X", 3));
  const auto m = make_model(s, 0);
  DatasetBuilder b({observed_variable("X", 3)});
  b.add(std::vector<int>{0}, 6);
  b.add(std::vector<int>{2}, 3);
  const auto fit = em_fit(m, b.build(), config(1));
  const std::vector<double> expected = {7.0 / 12.0, 1.0 / 12.0, 4.0 / 12.0};
  EXPECT_LE(linf(fit.model.tables[0], expected), 1e-12);
}

TEST(EmFit, RecoversLatentClassModel) {
  TreeStructure s;
  s.add_node(latent_variable("Z", 2));
  for (int i = 1; i <= 4; ++i) s.add_edge(0, s.add_node(observed_variable("X" + std::to_string(i), 2)));
  auto truth = make_model(s, 0);
  truth.tables[0] = {0.35, 0.65};
  truth.tables[1] = {0.9, 0.1, 0.2, 0.8};
  truth.tables[2] = {0.85, 0.15, 0.1, 0.9};
  truth.tables[3] = {0.2, 0.8, 0.75, 0.25};
  truth.tables[4] = {0.7, 0.3, 0.1, 0.9};
  const auto data = forward_sample(truth, 20000, 8);
  auto cfg = config(3, 5);
  cfg.smoothing = 0.0;
  const auto fit = em_fit(make_model(s, 0), data, cfg);
  // The latent labels are identifiable only up to a permutation.
  double best = 1e9;
  for (int swap = 0; swap < 2; ++swap) {
    double err = 0.0;
    for (int v = 0; v < 5; ++v) {
      auto t = fit.model.tables[v];
      if (swap) {
        if (v == 0) std::swap(t[0], t[1]);
        else std::swap_ranges(t.begin(), t.begin() + 2, t.begin() + 2);
      }
      err = std::max(err, linf(t, truth.tables[v]));
    }
    best = std::min(best, err);
  }
  EXPECT_LE(best, 0.02);
}

TEST(EmFit, TracesAreNonDecreasing) {
  Rng rng(17);
  for (int trial = 0; trial < 8; ++trial) {
    const auto truth = random_model(rng, 2, 6, 3);
    const auto data = forward_sample(truth, 800, trial);
    auto cfg = config(trial);
    cfg.smoothing = trial % 2 ? 1.0 : 0.0;
    const auto fit = em_fit(truth, data, cfg);
    ASSERT_EQ(fit.traces.size(), 3u);
    for (const auto& trace : fit.traces)
      for (std::size_t k = 1; k < trace.size(); ++k) EXPECT_GE(trace[k], trace[k - 1]);
    EXPECT_NEAR(fit.log_likelihood, log_likelihood(fit.model, data), 1e-6);
  }
}

TEST(EmFit, SmoothingKeepsProbabilitiesInterior) {
  auto truth = figure1_model();
  for (auto& table : truth.tables)
    if (table.size() == 4) table = channel(0.0);
  const auto data = forward_sample(truth, 300, 4);
  const auto fit = em_fit(truth, data, config(2));
  for (const auto& table : fit.model.tables)
    for (double p : table) {
      EXPECT_GT(p, 0.0);
      EXPECT_LT(p, 1.0);
    }
}

TEST(EmFit, DeterministicForSeedAndThreads) {
  const auto truth = figure1_model();
  const auto data = forward_sample(truth, 1000, 1);
  const auto a = em_fit(truth, data, config(9));
  const auto b = em_fit(truth, data, config(9));
  EXPECT_EQ(a.model.tables, b.model.tables);
  auto threaded = config(9);
  threaded.threads = 3;
  const auto c = em_fit(truth, data, threaded);
  EXPECT_EQ(a.model.tables, c.model.tables);
  EXPECT_EQ(a.best_restart, c.best_restart);
}

TEST(EmFit, RejectsBadInput) {
  const auto m = figure1_model();
  DatasetBuilder b({observed_variable("X1", 2)});
  b.add(std::vector<int>{0});
  EXPECT_THROW(em_fit(m, b.build(), config(1)), DataError);
  EmConfig bad;
  bad.restarts = 0;
  EXPECT_THROW(em_fit(m, forward_sample(m, 10, 1), bad), DataError);
}

TEST(EmRefine, NeverDecreasesLikelihood) {
  Rng rng(5);
  const auto truth = random_model(rng, 2, 6, 2);
  const auto data = forward_sample(truth, 1000, 3);
  auto start = truth;
  randomize_parameters(start, rng);
  const auto refined = em_refine(start, data, config(1));
  EXPECT_GE(refined.log_likelihood, log_likelihood(start, data));
}

TEST(ProgressiveEm, SubmodelsAreSmall) {
  Rng rng(23);
  const auto truth = random_model(rng, 4, 12, 2);
  const auto data = forward_sample(truth, 5000, 2);
  const auto result = progressive_em(truth, data, config(4));
  ASSERT_FALSE(result.submodel_rows.empty());
  for (std::size_t k = 0; k < result.submodel_rows.size(); ++k) {
    EXPECT_LE(result.submodel_variables[k].size(), 4u);
    EXPECT_GE(result.submodel_variables[k].size(), 2u);
    EXPECT_LE(result.submodel_rows[k], 16u);
  }
}

TEST(ProgressiveEm, BinaryTripleSubmodelsHaveAtMostEightRows) {
  const auto truth = figure1_model();
  const auto data = forward_sample(truth, 5000, 6);
  const auto result = progressive_em(truth, data, config(1));
  for (std::size_t k = 0; k < result.submodel_rows.size(); ++k)
    if (result.submodel_variables[k].size() == 3) {
      EXPECT_LE(result.submodel_rows[k], 8u);
    }
}

TEST(ProgressiveEm, CloseToFullEm) {
  Rng rng(31);
  for (int trial = 0; trial < 3; ++trial) {
    const auto truth = random_model(rng, 3, 9, 2);
    const auto data = forward_sample(truth, 3000, trial + 10);
    const auto full = em_fit(truth, data, config(trial, 10));
    const auto pem = progressive_em(truth, data, config(trial));
    EXPECT_GE(pem.refined.log_likelihood, full.log_likelihood - 0.02 * std::abs(full.log_likelihood));
  }
}

TEST(ProgressiveEm, InvariantToUniformWeightScaling) {
  const auto truth = figure1_model();
  const auto data = forward_sample(truth, 2000, 12);
  auto cfg = config(5);
  cfg.smoothing = 0.0;
  const auto a = progressive_em(truth, data, cfg);
  const auto b = progressive_em(truth, scaled(data, 10), cfg);
  for (std::size_t v = 0; v < a.refined.model.size(); ++v)
    EXPECT_LE(linf(a.refined.model.tables[v], b.refined.model.tables[v]), 1e-6);
  EXPECT_NEAR(10 * a.refined.log_likelihood, b.refined.log_likelihood,
              1e-6 * std::abs(b.refined.log_likelihood));
}

TEST(Score, TreeBeatsLatentClassOnTreeData) {
  const auto truth = figure1_model(0.1, 0.3);
  const auto data = forward_sample(truth, 5000, 77);
  const auto tree = em_fit(truth, data, config(1));
  TreeStructure s;
  s.add_node(latent_variable("Z", 2));
  for (int i = 1; i <= 5; ++i) s.add_edge(0, s.add_node(observed_variable("X" + std::to_string(i), 2)));
  const auto lcm = em_fit(make_model(s, 0), data, config(1));
  EXPECT_GT(bic(tree.model, data), bic(lcm.model, data));
}
