#pragma once

// Density-ratio fitting for phi(x) = p(x) / p(x | y_s) from single-class
// samples and unlabeled samples, by minimizing the empirical Bregman
// divergence
//
//   B_hat = (1/n)   sum_i grad_eta(phi(x_i)) phi(x_i)
//         - (1/n)   sum_i eta(phi(x_i))
//         - (1/n_u) sum_j grad_eta(phi(x_j^u))
//
// with eta(t) = (t - 1)^2 / 2 over a nonnegative Gaussian-kernel model.

#include "conflearn/common.hpp"

#include <functional>

#include "json.hpp"

namespace conflearn {

using RatioFunction = std::function<double(const Vector&)>;

/// phi(x) = sum_b alpha_b exp(-|x - c_b|^2 / (2 sigma^2)), alpha >= 0.
struct RatioModel {
  Matrix centers;  // B x d
  double sigma = 1.0;
  Vector alpha;    // B

  Index num_centers() const { return centers.rows(); }
};

/// Squared generator eta(t) = (t - 1)^2 / 2.
struct SquaredBregman {
  static double eta(double t) { return 0.5 * (t - 1.0) * (t - 1.0); }
  static double grad(double t) { return t - 1.0; }
};

double eval_ratio(const RatioModel& model, const Vector& x);

/// n x B matrix of kernel responses k_b(x_i).
Matrix kernel_responses(const RatioModel& model, const Matrix& points);

/// Literal evaluation of the empirical Bregman objective for any ratio
/// callable and generator.
template <typename Ratio, typename Generator = SquaredBregman>
double empirical_bregman(const Ratio& ratio, const Matrix& sc_samples, const Matrix& u_samples,
                         const Generator& gen = Generator{}) {
  if (sc_samples.rows() == 0 || u_samples.rows() == 0) {
    throw ArgumentError("empirical_bregman: both sample sets must be nonempty");
  }
  double sc_term = 0.0;
  for (Index i = 0; i < sc_samples.rows(); ++i) {
    const double v = ratio(Vector(sc_samples.row(i).transpose()));
    sc_term += gen.grad(v) * v - gen.eta(v);
  }
  double u_term = 0.0;
  for (Index j = 0; j < u_samples.rows(); ++j) {
    u_term += gen.grad(ratio(Vector(u_samples.row(j).transpose())));
  }
  return sc_term / static_cast<double>(sc_samples.rows()) -
         u_term / static_cast<double>(u_samples.rows());
}

double empirical_bregman(const RatioModel& model, const Matrix& sc_samples, const Matrix& u_samples);

struct BregmanConfig {
  Index max_centers = 100;
  /// Kernel width; 0 selects the median pairwise distance among centers.
  double bandwidth = 0.0;
  double ridge = 1e-3;
  /// When set, ridge is chosen from ridge_grid by k-fold cross-validation
  /// of the empirical Bregman objective. With bandwidth 0 the kernel width is
  /// chosen jointly from bandwidth_scales times the median distance.
  bool cross_validate = false;
  std::vector<double> ridge_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  std::vector<double> bandwidth_scales{0.125, 0.25, 0.5, 1.0};
  int folds = 5;
};

/// Minimizes 1/2 a^T H a - h^T a + ridge a^T a subject to a >= 0 (closed form
/// when the unconstrained solution is already nonnegative, active set otherwise).
/// H = (1/n) sum_i k(x_i) k(x_i)^T over single-class samples,
/// h = (1/n_u) sum_j k(x_j^u) over unlabeled samples.
RatioModel fit_ratio(const Matrix& sc_samples, const Matrix& u_samples, const BregmanConfig& config,
                     std::uint64_t seed);

/// Solve step of fit_ratio for fixed centers and bandwidth.
Vector solve_ratio_coefficients(const Matrix& sc_responses, const Matrix& u_responses, double ridge);

/// Median pairwise Euclidean distance among rows (1.0 when fewer than two
/// distinct rows).
double median_pairwise_distance(const Matrix& points);

nlohmann::json ratio_to_json(const RatioModel& model);
RatioModel ratio_from_json(const nlohmann::json& doc);

}  // namespace conflearn
