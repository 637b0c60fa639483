#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace ltm;
using namespace ltm::testing;

namespace {

LearnConfig config(std::uint64_t seed) {
  LearnConfig cfg;
  cfg.em.seed = seed;
  return cfg;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

DistanceMatrix matrix(std::vector<std::string> names, std::vector<std::vector<double>> rows) {
  DistanceMatrix d;
  d.names = std::move(names);
  for (const auto& row : rows) d.values.insert(d.values.end(), row.begin(), row.end());
  return d;
}

// Distances along the edges of a weighted tree, summed over paths.
DistanceMatrix tree_metric(int n_leaves, int n_nodes, std::vector<std::tuple<int, int, double>> edges) {
  std::vector<std::vector<double>> dist(n_nodes, std::vector<double>(n_nodes, kInfinity));
  for (int i = 0; i < n_nodes; ++i) dist[i][i] = 0.0;
  for (auto [a, b, w] : edges) dist[a][b] = dist[b][a] = w;
  for (int k = 0; k < n_nodes; ++k)
    for (int i = 0; i < n_nodes; ++i)
      for (int j = 0; j < n_nodes; ++j) dist[i][j] = std::min(dist[i][j], dist[i][k] + dist[k][j]);
  DistanceMatrix d;
  for (int i = 0; i < n_leaves; ++i) d.names.push_back(std::string(1, static_cast<char>('a' + i)));
  for (int i = 0; i < n_leaves; ++i)
    for (int j = 0; j < n_leaves; ++j) d.values.push_back(dist[i][j]);
  return d;
}

std::set<std::pair<std::string, std::string>> named_edges(const LocalTree& t) {
  std::set<std::pair<std::string, std::string>> out;
  for (auto [a, b] : t.edges) out.insert(std::minmax(t.names[a], t.names[b]));
  return out;
}

int degree(const LocalTree& t, int node) {
  int d = 0;
  for (auto [a, b] : t.edges) d += (a == node) + (b == node);
  return d;
}

}  // namespace

TEST(MutualInformation, MatchesEntropyIdentity) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> joint(6);
    for (double& p : joint) p = 0.05 + rng.uniform();
    double total = 0.0;
    for (double p : joint) total += p;
    for (double& p : joint) p /= total;
    std::vector<double> px(2, 0.0), py(3, 0.0);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 3; ++j) px[i] += joint[i * 3 + j], py[j] += joint[i * 3 + j];
    EXPECT_NEAR(mutual_information(joint, 2, 3), entropy(px) + entropy(py) - entropy(joint), 1e-12);
  }
}

TEST(MutualInformation, CopyAndIndependence) {
  EXPECT_NEAR(mutual_information({0.5, 0.0, 0.0, 0.5}, 2, 2), std::log(2.0), 1e-15);
  EXPECT_NEAR(mutual_information({0.06, 0.14, 0.24, 0.56}, 2, 2), 0.0, 1e-15);
}

TEST(InformationDistance, ClosedForms) {
  EXPECT_NEAR(information_distance_from_joint({0.5, 0.0, 0.0, 0.5}, 2, 2), 0.0, 1e-15);
  EXPECT_EQ(information_distance_from_joint({0.06, 0.14, 0.24, 0.56}, 2, 2), kInfinity);
  // Uniform input through a symmetric channel with flip 0.1: |det J| = 0.2,
  // sqrt(det Dx det Dy) = 0.25.
  EXPECT_NEAR(information_distance_from_joint({0.45, 0.05, 0.05, 0.45}, 2, 2), -std::log(0.8), 1e-14);
}

TEST(InformationDistance, ZeroMarginalIsNumericError) {
  EXPECT_THROW(information_distance_from_joint({0.0, 0.0, 0.5, 0.5}, 2, 2), NumericError);
}

TEST(InformationDistance, AdditiveAlongGeneratingTree) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = informative_model(rng, 2 + static_cast<int>(rng.below(3)), 6, 2);
    const auto obs = m.observed_nodes();
    for (std::size_t i = 0; i < obs.size(); ++i)
      for (std::size_t j = i + 1; j < obs.size(); ++j) {
        const auto c = additivity_check(m, obs[i], obs[j]);
        EXPECT_NEAR(c.direct, c.path_sum, 1e-10);
      }
  }
}

TEST(InformationDistance, AdditiveWithEqualCardinalities) {
  Rng rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = informative_model(rng, 3, 7, 2);
    // Same tree with every node ternary.
    TreeStructure s = m.structure;
    for (auto& v : s.nodes) v.cardinality = 3;
    auto t = make_model(std::move(s), m.root);
    randomize_parameters(t, rng);
    for (std::size_t v = 0; v < t.size(); ++v)
      if (t.parent[v] >= 0)
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) t.tables[v][a * 3 + b] = 0.4 * t.tables[v][a * 3 + b] + (a == b ? 0.6 : 0.0);
    const auto obs = t.observed_nodes();
    for (std::size_t i = 0; i < obs.size(); ++i)
      for (std::size_t j = i + 1; j < obs.size(); ++j) {
        const auto c = additivity_check(t, obs[i], obs[j]);
        EXPECT_NEAR(c.direct, c.path_sum, 1e-10);
      }
  }
}

TEST(InformationDistance, EmpiricalMatrixIsSymmetric) {
  const auto data = forward_sample(figure1_model(), 3000, 2);
  const auto d = information_distances(data, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(d(i, i), 0.0);
    for (std::size_t j = 0; j < d.size(); ++j) EXPECT_EQ(d(i, j), d(j, i));
  }
}

TEST(ChowLiu, SpanningTreeOfHandMatrix) {
  const auto w = matrix({"a", "b", "c", "d"}, {{0, 5, 1, 2},  //
                                               {5, 0, 4, 3},
                                               {1, 4, 0, 6},
                                               {2, 3, 6, 0}});
  auto edges = maximum_spanning_tree(w);
  std::set<std::pair<int, int>> got;
  for (auto [a, b] : edges) got.insert(std::minmax(a, b));
  EXPECT_EQ(got, (std::set<std::pair<int, int>>{{0, 1}, {1, 2}, {2, 3}}));
}

TEST(ChowLiu, TiesBrokenByNamePair) {
  const auto w = matrix({"c", "a", "b"}, {{0, 1, 1}, {1, 0, 1}, {1, 1, 0}});
  const auto edges = maximum_spanning_tree(w);
  std::set<std::pair<std::string, std::string>> got;
  for (auto [x, y] : edges) got.insert(std::minmax(w.names[x], w.names[y]));
  // Candidate pairs in order: (a,b), (a,c), (b,c).
  EXPECT_EQ(got, (std::set<std::pair<std::string, std::string>>{{"a", "b"}, {"a", "c"}}));
}

TEST(ChowLiu, RecoversObservedChain) {
  // Markov chain X1 - X2 - ... - X5 sampled directly.
  std::vector<Variable> vars;
  for (int i = 1; i <= 5; ++i) vars.push_back(observed_variable("X" + std::to_string(i), 2));
  DatasetBuilder b(vars);
  Rng rng(3);
  for (int k = 0; k < 20000; ++k) {
    std::vector<int> rec(5);
    rec[0] = rng.uniform() < 0.6;
    for (int v = 1; v < 5; ++v) rec[v] = rng.uniform() < 0.05 + 0.03 * v ? 1 - rec[v - 1] : rec[v - 1];
    b.add(rec);
  }
  const auto tree = chow_liu(b.build());
  std::set<std::pair<std::string, std::string>> got, want;
  for (auto [a, c] : tree.edges) got.insert(std::minmax(tree.nodes[a].name, tree.nodes[c].name));
  for (int i = 1; i < 5; ++i) want.insert({"X" + std::to_string(i), "X" + std::to_string(i + 1)});
  EXPECT_EQ(got, want);
  for (const auto& v : tree.nodes) EXPECT_TRUE(v.observed());
}

TEST(ChowLiu, NeedsTwoVariables) {
  DatasetBuilder b({observed_variable("A", 2)});
  b.add(std::vector<int>{1});
  EXPECT_THROW(chow_liu(b.build()), DataError);
}

TEST(RecursiveGrouping, StarGetsOneLatent) {
  const auto d = tree_metric(3, 4, {{0, 3, 1.0}, {1, 3, 2.0}, {2, 3, 1.5}});
  const auto t = recursive_grouping(d, 0.0);
  ASSERT_EQ(t.latents_added, 1);
  EXPECT_EQ(t.edges.size(), 3u);
  EXPECT_EQ(degree(t, 3), 3);
}

TEST(RecursiveGrouping, ObservedParentNeedsNoLatent) {
  const auto d = matrix({"a", "b", "c"}, {{0, 2, 1}, {2, 0, 1}, {1, 1, 0}});
  const auto t = recursive_grouping(d, 0.0);
  EXPECT_EQ(t.latents_added, 0);
  EXPECT_EQ(named_edges(t), (std::set<std::pair<std::string, std::string>>{{"a", "c"}, {"b", "c"}}));
}

TEST(RecursiveGrouping, TwoCherries) {
  // ((a,b)h1,(c,d)h2) with h1 - h2.
  const auto d = tree_metric(4, 6, {{0, 4, 0.5}, {1, 4, 0.7}, {2, 5, 0.6}, {3, 5, 0.4}, {4, 5, 0.9}});
  const auto t = recursive_grouping(d, 0.0);
  ASSERT_EQ(t.latents_added, 2);
  EXPECT_EQ(t.edges.size(), 5u);
  // Each latent joins one cherry.
  for (int h : {4, 5}) EXPECT_EQ(degree(t, h), 3);
  std::set<std::set<int>> cherries;
  for (int h : {4, 5}) {
    std::set<int> leaves;
    for (auto [a, b] : t.edges) {
      if (a == h && b < 4) leaves.insert(b);
      if (b == h && a < 4) leaves.insert(a);
    }
    cherries.insert(leaves);
  }
  EXPECT_EQ(cherries, (std::set<std::set<int>>{{0, 1}, {2, 3}}));
}

TEST(RecursiveGrouping, NonAdditiveDistancesStaySingletons) {
  Rng rng(11);
  DistanceMatrix d;
  const int n = 6;
  for (int i = 0; i < n; ++i) d.names.push_back("v" + std::to_string(i));
  d.values.assign(n * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) d(i, j) = d(j, i) = 1.0 + rng.uniform();
  const auto t = recursive_grouping(d, 0.0);
  EXPECT_TRUE(t.edges.empty());
  EXPECT_EQ(t.latents_added, 0);
}

TEST(RecursiveGrouping, ResultIsATree) {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_model(rng, 3, 7, 2);
    const auto mu = node_marginals(m);
    const auto obs = m.observed_nodes();
    DistanceMatrix d;
    for (int v : obs) d.names.push_back(m.variable(v).name);
    for (int a : obs)
      for (int b : obs) d.values.push_back(information_distance(m, a, b, mu));
    const auto t = recursive_grouping(d, 0.0);
    ASSERT_EQ(t.edges.size() + 1, t.names.size());
    detail::DisjointSets sets(static_cast<int>(t.names.size()));
    for (auto [a, b] : t.edges) EXPECT_TRUE(sets.unite(a, b));
    for (int h = static_cast<int>(obs.size()); h < static_cast<int>(t.names.size()); ++h)
      EXPECT_GE(degree(t, h), 3);
  }
}

TEST(Clrg, RecoversFigureOneTopology) {
  const auto truth = figure1_model();
  const auto data = forward_sample(truth, 50000, 1);
  const auto r = clrg(data, config(1));
  EXPECT_TRUE(same_topology(r.model, truth));
  EXPECT_TRUE(validate(r.model, 1e-9).empty());
  EXPECT_NEAR(r.bic, bic(r.model, data), 1e-6);
}

TEST(Clrg, IndependentDataScoresLikeIndependenceModel) {
  DatasetBuilder b({observed_variable("A", 2), observed_variable("B", 3), observed_variable("C", 2),
                    observed_variable("D", 2)});
  Rng rng(4);
  for (int k = 0; k < 4000; ++k)
    b.add(std::vector<int>{rng.uniform() < 0.3, static_cast<int>(rng.below(3)), rng.uniform() < 0.6,
                           rng.uniform() < 0.5});
  const auto data = b.build();
  // Independence BIC from marginal counts.
  double ll = 0.0;
  std::int64_t dim = 0;
  for (std::size_t v = 0; v < data.num_variables(); ++v) {
    const int c = data.variables()[v].cardinality;
    std::vector<double> counts(c, 0.0);
    for (std::size_t r = 0; r < data.num_rows(); ++r) counts[data.row(r)[v]] += data.weight(r);
    for (double n : counts)
      if (n > 0) ll += n * std::log(n / data.total_weight());
    dim += c - 1;
  }
  const double independent = ll - 0.5 * dim * std::log(static_cast<double>(data.total_weight()));
  LearnConfig cfg = config(2);
  cfg.em.smoothing = 0.0;
  const auto r = clrg(data, cfg);
  EXPECT_GE(r.bic, independent - 1e-6);
  EXPECT_LE(r.bic, independent + 5.0);
}

TEST(Clrg, ThreeVariables) {
  Rng rng(8);
  const auto data = forward_sample(random_lcm(rng, 3), 2000, 8);
  const auto r = clrg(data, config(3));
  auto names = r.model.observed_names();
  std::sort(names.begin(), names.end());
  EXPECT_EQ(names, (std::vector<std::string>{"X1", "X2", "X3"}));
  EXPECT_TRUE(validate(r.model, 1e-9).empty());
}

TEST(Clrg, RejectsTooFewVariables) {
  const auto data = project(forward_sample(figure1_model(), 100, 1), {"X1", "X2"});
  EXPECT_THROW(clrg(data, config(1)), DataError);
}

TEST(Learning, LcmCardinalitySearchFindsThreeClasses) {
  TreeStructure s;
  s.add_node(latent_variable("Z", 3));
  for (int i = 1; i <= 6; ++i) {
    s.add_node(observed_variable("X" + std::to_string(i), 3));
    s.add_edge(0, i);
  }
  auto m = make_model(std::move(s), 0);
  m.tables[0] = {0.3, 0.3, 0.4};
  for (int i = 1; i <= 6; ++i) m.tables[i] = {0.8, 0.1, 0.1, 0.1, 0.8, 0.1, 0.1, 0.1, 0.8};
  const auto data = forward_sample(m, 5000, 6);
  const auto names = data.names();
  const auto r = learn_lcm(data, names, "Z", config(6));
  EXPECT_EQ(r.model.cardinality(r.model.require("Z")), 3);
}

TEST(Learning, FreshNamesAvoidTakenOnes) {
  int counter = 0;
  std::vector<std::string> taken = {"H1", "H3"};
  EXPECT_EQ(fresh_name("H", counter, taken), "H2");
  EXPECT_EQ(fresh_name("H", counter, taken), "H4");
}

TEST(Unidimensionality, SingleClassDataPasses) {
  Rng rng(2);
  const auto m = random_lcm(rng, 6, 2);
  const auto data = forward_sample(m, 4000, 2);
  const auto names = data.names();
  const auto r = unidimensionality_test(data, names, config(2));
  EXPECT_TRUE(r.unidimensional);
  EXPECT_LE(r.two.bic - r.one.bic, 3.0);
}

TEST(Unidimensionality, TwoFactorDataFailsWithTrueGroups) {
  const auto truth = figure1_model(0.08, 0.4);
  const auto data = forward_sample(truth, 8000, 9);
  const auto names = data.names();
  const auto r = unidimensionality_test(data, names, config(9));
  ASSERT_FALSE(r.unidimensional);
  std::set<std::set<std::string>> groups;
  for (const auto& g : r.groups) groups.insert({g.begin(), g.end()});
  EXPECT_EQ(groups, (std::set<std::set<std::string>>{{"X1", "X2", "X3"}, {"X4", "X5"}}));
}

TEST(Unidimensionality, SmallSubsetsAreUnidimensional) {
  const auto data = forward_sample(figure1_model(), 500, 1);
  const std::vector<std::string> three = {"X1", "X2", "X4"};
  EXPECT_TRUE(unidimensionality_test(data, three, config(1)).unidimensional);
}

TEST(Islands, PartitionTheVariables) {
  const auto truth = figure1_model(0.08, 0.4);
  const auto data = forward_sample(truth, 8000, 4);
  const auto islands = build_islands(data, config(4));
  std::set<std::set<std::string>> got;
  std::size_t covered = 0;
  for (const auto& island : islands) {
    got.insert({island.members.begin(), island.members.end()});
    covered += island.members.size();
    EXPECT_EQ(island.lcm.latent_nodes().size(), 1u);
  }
  EXPECT_EQ(covered, data.num_variables());
  EXPECT_EQ(got, (std::set<std::set<std::string>>{{"X1", "X2", "X3"}, {"X4", "X5"}}));
}

TEST(Islands, BridgingDoesNotLoseLikelihood) {
  const auto data = forward_sample(figure1_model(0.08, 0.3), 6000, 5);
  const auto cfg = config(5);
  const auto islands = build_islands(data, cfg);
  const auto start = detail::bridge_structure(islands, data, cfg.em.smoothing);
  const auto bridged = bridge_islands(islands, data, cfg);
  EXPECT_GE(bridged.log_likelihood, log_likelihood(start, data) - 1e-6);
  EXPECT_TRUE(validate(bridged.model, 1e-9).empty());
}

TEST(BridgedIslands, RecoversFigureOneTopology) {
  const auto truth = figure1_model();
  const auto data = forward_sample(truth, 50000, 2);
  const auto r = learn_bi(data, config(2));
  EXPECT_TRUE(same_topology(r.model, truth));
  EXPECT_NEAR(r.bic, bic(r.model, data), 1e-6);
}

TEST(BridgedIslands, BinaryLatentsOption) {
  Rng rng(12);
  const auto m = random_model(rng, 3, 9, 3);
  const auto data = forward_sample(m, 3000, 12);
  auto cfg = config(12);
  cfg.binary_latents = true;
  const auto r = learn_bi(data, cfg);
  for (int z : r.model.latent_nodes()) EXPECT_LE(r.model.cardinality(z), 2);
}

TEST(BridgedIslands, RegularOutput) {
  Rng rng(31);
  for (int trial = 0; trial < 3; ++trial) {
    const auto m = random_model(rng, 3, 8, 3);
    const auto data = forward_sample(m, 2000, trial);
    const auto r = learn_bi(data, config(trial));
    EXPECT_TRUE(validate(r.model, 1e-9).empty());
    for (int z : r.model.latent_nodes())
      EXPECT_LE(r.model.cardinality(z), max_regular_cardinality(r.model, z));
  }
}
