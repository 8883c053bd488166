#pragma once

// Positive/negative error rates of a one-class classifier, and a seeded
// two-cluster suite to measure them on.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lingsel/corpus_io.hpp"
#include "lingsel/error.hpp"
#include "lingsel/numcore.hpp"

namespace lingsel {

struct ErrorRates {
  double pos_err = 0.0;  ///< target utterances classified outlier
  double neg_err = 0.0;  ///< non-target utterances classified inlier
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// Inlier <=> decision >= threshold.
inline ErrorRates evaluate_classifier(std::span<const double> decisions_pos,
                                      std::span<const double> decisions_neg, double threshold) {
  if (decisions_pos.empty()) throw DataError("positive set is empty");
  if (decisions_neg.empty()) throw DataError("negative set is empty");
  std::size_t pos_miss = 0;
  for (double d : decisions_pos) pos_miss += d < threshold ? 1 : 0;
  std::size_t neg_miss = 0;
  for (double d : decisions_neg) neg_miss += d >= threshold ? 1 : 0;
  ErrorRates r;
  r.n_pos = decisions_pos.size();
  r.n_neg = decisions_neg.size();
  r.pos_err = static_cast<double>(pos_miss) / static_cast<double>(r.n_pos);
  r.neg_err = static_cast<double>(neg_miss) / static_cast<double>(r.n_neg);
  return r;
}

struct SyntheticSuite {
  Corpus target;
  Corpus other;
};

/// Target ~ N(0, I); other ~ N(mu, I) where mu points along a seeded random
/// direction and its root-mean-square coordinate equals `separation`
/// (||mu|| = separation * sqrt(dim)). Durations ~ U[5, 25] s.
inline SyntheticSuite gen_synthetic_suite(std::uint64_t seed, std::size_t n_target,
                                          std::size_t n_other, std::size_t dim,
                                          double separation, const std::string& target_prefix = "tgt",
                                          const std::string& other_prefix = "oth") {
  if (n_target < 1 || n_other < 1 || dim < 1) throw UsageError("suite sizes must be at least 1");
  if (!(separation >= 0.0) || !std::isfinite(separation)) {
    throw UsageError("separation must be finite and non-negative");
  }
  SplitMix64 dir_rng(derive_seed(seed, 0));
  std::vector<double> mu(dim);
  double norm = 0.0;
  for (double& v : mu) {
    v = dir_rng.gaussian();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  const double length = separation * std::sqrt(static_cast<double>(dim));
  for (double& v : mu) v = norm > 0.0 ? v / norm * length : 0.0;

  auto draw = [&](std::uint64_t stream, std::size_t count, const std::string& prefix,
                  bool shifted) {
    SplitMix64 rng(derive_seed(seed, stream));
    Corpus c;
    c.dim = dim;
    c.records.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      UtteranceRecord r;
      const std::string number = std::to_string(i);
      r.id = prefix + "-" + std::string(number.size() < 6 ? 6 - number.size() : 0, '0') + number;
      r.duration_sec = rng.uniform(5.0, 25.0);
      r.embedding.resize(dim);
      for (std::size_t j = 0; j < dim; ++j) {
        r.embedding[j] = rng.gaussian() + (shifted ? mu[j] : 0.0);
      }
      c.records.push_back(std::move(r));
    }
    return c;
  };
  return {draw(1, n_target, target_prefix, false), draw(2, n_other, other_prefix, true)};
}

}  // namespace lingsel
