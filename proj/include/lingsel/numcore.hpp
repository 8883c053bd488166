#pragma once

// Shared numerics: a dense row-major matrix, the RBF kernel, the pooled
// variance "scale" rule for its width, and the splitmix64 generator every
// stochastic component draws from.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lingsel/error.hpp"

namespace lingsel {

/// Dense row-major n x d matrix of doubles. Rows are samples.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
      throw DataError("matrix storage does not match " + std::to_string(rows_) + "x" +
                      std::to_string(cols_));
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<const double> row(std::size_t i) const { return {values_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) { return {values_.data() + i * cols_, cols_}; }

  double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  /// Copy of the given rows, in the given order.
  Matrix select_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const auto src = row(indices[k]);
      std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

inline double squared_distance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DataError("dimension mismatch: " + std::to_string(x.size()) + " vs " +
                    std::to_string(y.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    acc += diff * diff;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// RBF kernel

struct KernelParams {
  double gamma = 1.0;
};

inline void validate(const KernelParams& params) {
  if (!(params.gamma > 0.0) || !std::isfinite(params.gamma)) {
    throw UsageError("kernel gamma must be positive and finite");
  }
}

/// exp(-gamma * ||x - y||^2)
inline double rbf_kernel(std::span<const double> x, std::span<const double> y,
                         const KernelParams& params) {
  return std::exp(-params.gamma * squared_distance(x, y));
}

/// Full symmetric Gram matrix K(i, j) = k(x_i, x_j).
inline Matrix gram_matrix(const Matrix& data, const KernelParams& params) {
  const std::size_t n = data.rows();
  Matrix gram(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    gram(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double k = rbf_kernel(data.row(i), data.row(j), params);
      gram(i, j) = k;
      gram(j, i) = k;
    }
  }
  return gram;
}

/// The "scale" width rule: 1 / (d * Var(X)), variance pooled over all n*d
/// entries (population variance).
inline double gamma_scale(const Matrix& data) {
  if (data.rows() == 0 || data.cols() == 0) {
    throw DataError("gamma_scale needs a non-empty matrix");
  }
  const auto values = data.values();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  if (var == 0.0) {
    throw DataError("degenerate data: all entries are identical, gamma is undefined");
  }
  return 1.0 / (static_cast<double>(data.cols()) * var);
}

// ---------------------------------------------------------------------------
// Random numbers

inline constexpr std::uint64_t kSplitMixIncrement = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct RngState {
  std::uint64_t state = 0;
  friend bool operator==(const RngState&, const RngState&) = default;
};

/// Seed for the stream_index-th child of a parent state. Children are
/// independent of how many threads later consume them.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream_index) noexcept {
  return splitmix64_mix((parent ^ stream_index) + kSplitMixIncrement);
}

/// splitmix64 with convenience draws. Same seed, same call sequence, same
/// numbers on every platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}
  explicit SplitMix64(RngState s) noexcept : state_(s.state) {}

  RngState state() const noexcept { return {state_}; }

  std::uint64_t next_u64() noexcept {
    state_ += kSplitMixIncrement;
    return splitmix64_mix(state_);
  }

  /// Top 53 bits mapped to [0, 1).
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Box-Muller, cosine branch only so the state stays a single word.
  double gaussian() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n) noexcept {
    const auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

  /// Fisher-Yates, portable (std::shuffle is implementation-defined).
  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::uint64_t state_;
};

inline std::pair<double, RngState> rng_next_uniform(RngState state) {
  SplitMix64 rng(state);
  const double u = rng.uniform();
  return {u, rng.state()};
}

inline std::pair<double, RngState> rng_next_gaussian(RngState state) {
  SplitMix64 rng(state);
  const double g = rng.gaussian();
  return {g, rng.state()};
}

}  // namespace lingsel
