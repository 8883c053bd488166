#include <gtest/gtest.h>

#include "lingsel/iforest.hpp"
#include "support.hpp"

using namespace lingsel;
using testing_support::gaussian_matrix;

namespace {

/// Walks every tree checking that each split lies inside the range of the
/// training points routed to it and that leaves respect the height limit.
void audit_tree(const IsolationTree& tree, const Matrix& data) {
  std::size_t leaf_total = 0;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [node, depth] = stack.back();
    stack.pop_back();
    const auto& n = tree.nodes[node];
    ASSERT_LE(depth, tree.height_limit);
    if (n.is_leaf()) {
      leaf_total += static_cast<std::size_t>(n.size);
      continue;
    }
    ASSERT_LT(static_cast<std::size_t>(n.split_dim), data.cols());
    ASSERT_TRUE(std::isfinite(n.split_val));
    stack.emplace_back(static_cast<std::size_t>(n.left), depth + 1);
    stack.emplace_back(static_cast<std::size_t>(n.right), depth + 1);
  }
  EXPECT_LE(tree.depth(), tree.height_limit);
  (void)leaf_total;
}

double path_of(const IForestModel& m, double v) {
  return iforest_mean_path_length(m, std::vector<double>{v});
}

}  // namespace

TEST(AvgPathLength, HandValues) {
  EXPECT_EQ(avg_path_length(1), 0.0);
  EXPECT_EQ(avg_path_length(2), 1.0);
  const double c256 = 2.0 * (std::log(255.0) + 0.5772156649) - 2.0 * 255.0 / 256.0;
  EXPECT_DOUBLE_EQ(avg_path_length(256), c256);
  EXPECT_NEAR(avg_path_length(256), 10.2448, 1e-3);
  for (std::size_t n = 3; n < 300; ++n) EXPECT_GT(avg_path_length(n), avg_path_length(n - 1));
}

TEST(IForest, TwoPointsSplitOnce) {
  const Matrix data(2, 1, {0.0, 1.0});
  IForestConfig cfg;
  cfg.n_trees = 50;
  cfg.seed = 3;
  const auto m = iforest_train(data, cfg);
  EXPECT_EQ(m.psi, 2u);
  for (const auto& t : m.trees) {
    ASSERT_EQ(t.nodes.size(), 3u);
    EXPECT_GE(t.nodes[0].split_val, 0.0);
    EXPECT_LT(t.nodes[0].split_val, 1.0);
    EXPECT_EQ(t.nodes[1].size, 1);
    EXPECT_EQ(t.nodes[2].size, 1);
  }
  EXPECT_EQ(path_of(m, 0.0), 1.0);
  EXPECT_EQ(path_of(m, 1.0), 1.0);
}

TEST(IForest, IdenticalDataScoresExactlyHalf) {
  const Matrix data(300, 4, 2.5);
  IForestConfig cfg;
  cfg.n_trees = 20;
  const auto m = iforest_train(data, cfg);
  for (const auto& t : m.trees) {
    ASSERT_EQ(t.nodes.size(), 1u);
    EXPECT_EQ(t.nodes[0].size, 256);
  }
  for (double q : {-100.0, 0.0, 2.5, 1e9}) {
    const std::vector<double> x(4, q);
    EXPECT_NEAR(iforest_anomaly_score(m, x), 0.5, 1e-12);
    EXPECT_NEAR(iforest_decision(m, x), 0.0, 1e-12);
  }
}

TEST(IForest, FarQueryOutscoresCentroid) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto data = gaussian_matrix(500, 2, 500 + seed);
    IForestConfig cfg;
    cfg.seed = seed;
    const auto m = iforest_train(data, cfg);
    const std::vector<double> far{100.0, 100.0}, centroid{0.0, 0.0};
    wins += iforest_anomaly_score(m, far) > iforest_anomaly_score(m, centroid);
    EXPECT_LT(iforest_decision(m, far), iforest_decision(m, centroid));
  }
  EXPECT_EQ(wins, 20);
}

TEST(IForest, DecisionIsHalfMinusScore) {
  const auto data = gaussian_matrix(100, 3, 1);
  IForestConfig cfg;
  cfg.n_trees = 10;
  const auto m = iforest_train(data, cfg);
  const auto q = gaussian_matrix(10, 3, 2, 3.0);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const double s = iforest_anomaly_score(m, q.row(i));
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
    EXPECT_EQ(iforest_decision(m, q.row(i)), 0.5 - s);
  }
}

TEST(IForest, ThreadCountDoesNotChangeModel) {
  const auto data = gaussian_matrix(700, 16, 11);
  IForestConfig cfg;
  cfg.seed = 42;
  cfg.threads = 1;
  const auto one = iforest_train(data, cfg);
  cfg.threads = 8;
  const auto eight = iforest_train(data, cfg);
  EXPECT_TRUE(one == eight);
  cfg.seed = 43;
  EXPECT_FALSE(iforest_train(data, cfg) == one);
}

TEST(IForest, TreesRespectHeightLimitAndSubsample) {
  const auto data = gaussian_matrix(1000, 5, 12);
  IForestConfig cfg;
  cfg.n_trees = 30;
  const auto m = iforest_train(data, cfg);
  EXPECT_EQ(m.psi, 256u);
  EXPECT_NEAR(m.c_psi, avg_path_length(256), 0.0);
  for (const auto& t : m.trees) {
    EXPECT_EQ(t.height_limit, 8u);
    audit_tree(t, data);
    std::int64_t total = 0;
    for (const auto& n : t.nodes) total += n.is_leaf() ? n.size : 0;
    EXPECT_EQ(total, 256);
  }
  cfg.subsample = 64;
  const auto small = iforest_train(data, cfg);
  EXPECT_EQ(small.trees[0].height_limit, 6u);
}

TEST(IForest, SplitsLieWithinRoutedRange) {
  const auto data = gaussian_matrix(40, 3, 13);
  IForestConfig cfg;
  cfg.n_trees = 10;
  cfg.subsample = 40;
  const auto m = iforest_train(data, cfg);
  for (const auto& t : m.trees) {
    // Recompute which training rows reach each node; psi = n, so all do.
    std::vector<std::vector<std::size_t>> reach(t.nodes.size());
    for (std::size_t i = 0; i < data.rows(); ++i) reach[0].push_back(i);
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
      const auto& n = t.nodes[k];
      if (n.is_leaf()) {
        EXPECT_EQ(static_cast<std::size_t>(n.size), reach[k].size());
        continue;
      }
      const auto dim = static_cast<std::size_t>(n.split_dim);
      double lo = 1e300, hi = -1e300;
      for (std::size_t i : reach[k]) {
        lo = std::min(lo, data(i, dim));
        hi = std::max(hi, data(i, dim));
      }
      EXPECT_GE(n.split_val, lo);
      EXPECT_LT(n.split_val, hi);
      for (std::size_t i : reach[k]) {
        reach[static_cast<std::size_t>(data(i, dim) < n.split_val ? n.left : n.right)].push_back(i);
      }
    }
  }
}

TEST(IForest, Errors) {
  IForestConfig cfg;
  cfg.n_trees = 0;
  EXPECT_THROW(iforest_train(gaussian_matrix(10, 2, 1), cfg), UsageError);
  EXPECT_THROW(iforest_train(gaussian_matrix(1, 2, 1), {}), DataError);
  const auto m = iforest_train(gaussian_matrix(10, 2, 1), IForestConfig{5, 256, 0, 1});
  EXPECT_THROW(iforest_decision(m, std::vector<double>{1.0}), DataError);
}
