#pragma once

// nu-parameterised one-class SVM with an RBF kernel.
//
// Dual problem:   min_a  1/2 a'Qa   s.t.  0 <= a_i <= C = 1/(nu n),  sum a_i = 1
// Decision:       f(x) = sum_i a_i k(x_i, x) - rho,   f >= 0  <=>  inlier
//
// Solved by two-coordinate (SMO) steps on the maximal-violating pair, which
// keep sum a = 1 exactly and never increase the objective.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lingsel/error.hpp"
#include "lingsel/numcore.hpp"

namespace lingsel {

struct OcSvmConfig {
  double nu = 0.01;
  std::optional<double> gamma;  ///< empty selects gamma_scale(data)
  double tol = 1e-6;            ///< KKT tolerance on the gradient gap
  std::size_t max_iter = 100000;
};

inline void validate(const OcSvmConfig& config) {
  if (!(config.nu > 0.0 && config.nu <= 1.0)) throw UsageError("nu must lie in (0, 1]");
  if (config.gamma) validate(KernelParams{*config.gamma});
  if (!(config.tol > 0.0)) throw UsageError("tol must be positive");
  if (config.max_iter == 0) throw UsageError("max_iter must be positive");
}

struct OcSvmModel {
  std::vector<double> alphas;  ///< one per training row
  double rho = 0.0;
  double gamma = 1.0;
  double nu = 0.01;
  Matrix support_vectors;  ///< training rows with alpha > 0, in training order
  bool converged = false;
  std::size_t iterations = 0;

  std::size_t dim() const noexcept { return support_vectors.cols(); }

  /// Alphas aligned with support_vectors rows.
  std::vector<double> support_alphas() const {
    std::vector<double> out;
    for (double a : alphas) {
      if (a > 0.0) out.push_back(a);
    }
    return out;
  }

  /// Upper box bound 1/(nu n).
  double box() const noexcept { return 1.0 / (nu * static_cast<double>(alphas.size())); }
};

/// Called after every pair update with the iteration count and the dual
/// objective 1/2 a'Qa.
using DualObjectiveObserver = std::function<void(std::size_t, double)>;

namespace detail {

inline double half_quadratic(std::span<const double> alphas, std::span<const double> grad) {
  double acc = 0.0;
  for (std::size_t i = 0; i < alphas.size(); ++i) acc += alphas[i] * grad[i];
  return 0.5 * acc;
}

}  // namespace detail

inline OcSvmModel ocsvm_train(const Matrix& data, const OcSvmConfig& config,
                              const DualObjectiveObserver& observer = {}) {
  validate(config);
  const std::size_t n = data.rows();
  if (n < 2) throw DataError("one-class SVM needs at least 2 training vectors");

  OcSvmModel model;
  model.nu = config.nu;
  model.gamma = config.gamma ? *config.gamma : gamma_scale(data);
  const KernelParams kernel{model.gamma};
  const Matrix q = gram_matrix(data, kernel);
  const double box = 1.0 / (config.nu * static_cast<double>(n));

  std::vector<double>& alpha = model.alphas;
  alpha.assign(n, 1.0 / static_cast<double>(n));
  if (box <= alpha[0]) alpha.assign(n, box);  // nu = 1: the box pins every alpha

  std::vector<double> grad(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) grad[i] += q(i, j) * alpha[j];
  }

  for (;;) {
    // i: may increase (alpha < C), smallest gradient.
    // j: may decrease (alpha > 0), largest gradient.
    std::size_t up = n;
    std::size_t low = n;
    double g_up = std::numeric_limits<double>::infinity();
    double g_low = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (alpha[t] < box && grad[t] < g_up) {
        g_up = grad[t];
        up = t;
      }
      if (alpha[t] > 0.0 && grad[t] > g_low) {
        g_low = grad[t];
        low = t;
      }
    }
    if (up == n || low == n || g_low - g_up <= config.tol) {
      model.converged = true;
      break;
    }
    if (model.iterations >= config.max_iter) break;

    double curvature = q(up, up) + q(low, low) - 2.0 * q(up, low);
    if (curvature <= 0.0) curvature = 1e-12;
    // The step keeps alpha[up] <= box and alpha[low] >= 0, so sum(alpha) is
    // preserved; whichever bound binds is set exactly.
    const double room_up = box - alpha[up];
    const double room_low = alpha[low];
    const double step = std::min({(g_low - g_up) / curvature, room_up, room_low});
    alpha[up] = step == room_up ? box : alpha[up] + step;
    alpha[low] = step == room_low ? 0.0 : alpha[low] - step;
    for (std::size_t t = 0; t < n; ++t) grad[t] += step * (q(t, up) - q(t, low));

    ++model.iterations;
    if (observer) observer(model.iterations, detail::half_quadratic(alpha, grad));
  }

  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] > 0.0) support.push_back(i);
  }
  model.support_vectors = data.select_rows(support);

  // Recompute the gradient in the same summation order ocsvm_decision uses,
  // so training-point decisions are exactly G_i - rho.
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t s : support) acc += alpha[s] * q(s, i);
    grad[i] = acc;
  }
  // rho sits at the bottom of the KKT interval: the smallest gradient among
  // vectors not at the upper bound. Only bounded vectors (at most nu n) can
  // then score below zero. When every alpha is bounded, take the largest
  // gradient so that all of them sit on or inside the boundary.
  double rho = std::numeric_limits<double>::infinity();
  bool any_free = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] < box) {
      rho = std::min(rho, grad[i]);
      any_free = true;
    }
  }
  if (!any_free) rho = *std::max_element(grad.begin(), grad.end());
  model.rho = rho;
  return model;
}

inline double ocsvm_decision(const OcSvmModel& model, std::span<const double> x) {
  if (x.size() != model.dim()) {
    throw DataError("query dimension " + std::to_string(x.size()) + " does not match model dim " +
                    std::to_string(model.dim()));
  }
  const KernelParams kernel{model.gamma};
  double acc = 0.0;
  std::size_t row = 0;
  for (double a : model.alphas) {
    if (a > 0.0) acc += a * rbf_kernel(model.support_vectors.row(row++), x, kernel);
  }
  return acc - model.rho;
}

}  // namespace lingsel
