#pragma once

// Isolation Forest: random axis-aligned partition trees grown on
// subsamples; points that isolate after few splits are anomalous.
//
//   s(x, psi) = 2^(-E[h(x)] / c(psi)),   decision(x) = 0.5 - s(x, psi)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lingsel/error.hpp"
#include "lingsel/numcore.hpp"
#include "lingsel/parallel.hpp"

namespace lingsel {

inline constexpr double kEulerGamma = 0.5772156649;

/// Average unsuccessful-search path length of a binary search tree over n
/// points: c(n) = 2 H(n-1) - 2 (n-1) / n, with c(0) = c(1) = 0 and c(2) = 1.
inline double avg_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  const double m = static_cast<double>(n - 1);
  return 2.0 * (std::log(m) + kEulerGamma) - 2.0 * m / static_cast<double>(n);
}

struct IForestConfig {
  std::size_t n_trees = 200;
  std::size_t subsample = 256;  ///< psi, capped at the training size
  std::uint64_t seed = 0;
  std::size_t threads = 0;  ///< 0: default_thread_count()
};

inline void validate(const IForestConfig& config) {
  if (config.n_trees < 1) throw UsageError("n_trees must be at least 1");
  if (config.subsample < 2) throw UsageError("subsample must be at least 2");
}

/// Internal nodes have split_dim >= 0 and both children set; leaves record
/// how many subsample points reached them.
struct IsolationNode {
  std::int32_t split_dim = -1;
  double split_val = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int64_t size = 0;

  bool is_leaf() const noexcept { return split_dim < 0; }
  friend bool operator==(const IsolationNode&, const IsolationNode&) = default;
};

struct IsolationTree {
  std::vector<IsolationNode> nodes;  ///< nodes[0] is the root
  std::size_t height_limit = 0;

  /// Edges from the root to x's leaf, plus c(leaf size) for the points the
  /// leaf left unresolved.
  double path_length(std::span<const double> x) const {
    std::size_t node = 0;
    double depth = 0.0;
    while (!nodes[node].is_leaf()) {
      const auto& n = nodes[node];
      node = static_cast<std::size_t>(x[static_cast<std::size_t>(n.split_dim)] < n.split_val
                                          ? n.left
                                          : n.right);
      depth += 1.0;
    }
    return depth + avg_path_length(static_cast<std::size_t>(nodes[node].size));
  }

  std::size_t depth() const {
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    std::size_t deepest = 0;
    while (!stack.empty()) {
      auto [node, d] = stack.back();
      stack.pop_back();
      deepest = std::max(deepest, d);
      if (!nodes[node].is_leaf()) {
        stack.emplace_back(static_cast<std::size_t>(nodes[node].left), d + 1);
        stack.emplace_back(static_cast<std::size_t>(nodes[node].right), d + 1);
      }
    }
    return deepest;
  }

  friend bool operator==(const IsolationTree&, const IsolationTree&) = default;
};

struct IForestModel {
  std::vector<IsolationTree> trees;
  std::size_t psi = 0;
  double c_psi = 0.0;
  std::size_t dim = 0;

  friend bool operator==(const IForestModel&, const IForestModel&) = default;
};

namespace detail {

class TreeGrower {
 public:
  TreeGrower(const Matrix& data, IsolationTree& tree, std::uint64_t seed)
      : data_(data), tree_(tree), rng_(seed) {}

  std::int32_t grow(std::span<std::size_t> points, std::size_t depth) {
    const auto index = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    if (depth >= tree_.height_limit || points.size() <= 1) {
      tree_.nodes[index].size = static_cast<std::int64_t>(points.size());
      return index;
    }
    const std::size_t d = data_.cols();
    for (std::size_t attempt = 0; attempt < d; ++attempt) {
      const std::size_t dim = rng_.below(d);
      double lo = data_(points[0], dim);
      double hi = lo;
      for (std::size_t p : points) {
        lo = std::min(lo, data_(p, dim));
        hi = std::max(hi, data_(p, dim));
      }
      if (!(hi > lo)) continue;  // constant on this feature, redraw
      const double split = lo + (hi - lo) * rng_.uniform();
      const auto mid = std::partition(points.begin(), points.end(),
                                      [&](std::size_t p) { return data_(p, dim) < split; });
      const auto n_left = static_cast<std::size_t>(mid - points.begin());
      tree_.nodes[index].split_dim = static_cast<std::int32_t>(dim);
      tree_.nodes[index].split_val = split;
      const auto left = grow(points.first(n_left), depth + 1);
      const auto right = grow(points.subspan(n_left), depth + 1);
      tree_.nodes[index].left = left;
      tree_.nodes[index].right = right;
      return index;
    }
    tree_.nodes[index].size = static_cast<std::int64_t>(points.size());
    return index;
  }

  SplitMix64& rng() { return rng_; }

 private:
  const Matrix& data_;
  IsolationTree& tree_;
  SplitMix64 rng_;
};

}  // namespace detail

/// Tree t is grown from child seed derive_seed(seed, t), so the forest is
/// bit-identical for any thread count.
inline IForestModel iforest_train(const Matrix& data, const IForestConfig& config) {
  validate(config);
  const std::size_t n = data.rows();
  if (n < 2) throw DataError("isolation forest needs at least 2 training vectors");
  if (data.cols() < 1) throw DataError("isolation forest needs dimension >= 1");

  IForestModel model;
  model.psi = std::min(config.subsample, n);
  model.c_psi = avg_path_length(model.psi);
  model.dim = data.cols();
  model.trees.resize(config.n_trees);
  const auto height_limit =
      static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(model.psi))));

  const std::size_t threads = config.threads ? config.threads : default_thread_count();
  parallel_for(config.n_trees, threads, [&](std::size_t t) {
    IsolationTree& tree = model.trees[t];
    tree.height_limit = height_limit;
    detail::TreeGrower grower(data, tree, derive_seed(config.seed, t));
    // Subsample without replacement: partial Fisher-Yates.
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t k = 0; k < model.psi; ++k) {
      std::swap(idx[k], idx[k + grower.rng().below(n - k)]);
    }
    grower.grow(std::span(idx).first(model.psi), 0);
  });
  return model;
}

inline double iforest_mean_path_length(const IForestModel& model, std::span<const double> x) {
  if (x.size() != model.dim) {
    throw DataError("query dimension " + std::to_string(x.size()) + " does not match model dim " +
                    std::to_string(model.dim));
  }
  double total = 0.0;
  for (const auto& tree : model.trees) total += tree.path_length(x);
  return total / static_cast<double>(model.trees.size());
}

/// Higher is more anomalous; in (0, 1).
inline double iforest_anomaly_score(const IForestModel& model, std::span<const double> x) {
  return std::exp2(-iforest_mean_path_length(model, x) / model.c_psi);
}

/// 0.5 - s: non-negative for inliers, higher is more target-like.
inline double iforest_decision(const IForestModel& model, std::span<const double> x) {
  return 0.5 - iforest_anomaly_score(model, x);
}

}  // namespace lingsel
