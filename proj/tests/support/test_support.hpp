#pragma once

#include "conflearn/common.hpp"
#include "conflearn/mlp.hpp"
#include "conflearn/rng.hpp"

#include <algorithm>
#include <cmath>

#include <filesystem>
#include <string>

namespace testsupport {

inline conflearn::Matrix random_matrix(conflearn::Index rows, conflearn::Index cols, std::uint64_t seed,
                                       double lo = -1.0, double hi = 1.0) {
  conflearn::Rng rng(seed);
  conflearn::Matrix m(rows, cols);
  for (conflearn::Index i = 0; i < rows; ++i) {
    for (conflearn::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  }
  return m;
}

/// Random probability vector with strictly positive entries.
inline conflearn::Vector random_simplex(conflearn::Index k, conflearn::Rng& rng) {
  conflearn::Vector r(k);
  for (conflearn::Index i = 0; i < k; ++i) r(i) = 0.01 + rng.uniform();
  return r / r.sum();
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("conflearn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

struct GradCheck {
  double max_rel_error = 0.0;
  conflearn::Index coordinates = 0;
};

/// Central finite differences of the weighted batch loss, evaluated in long
/// double, against the analytic gradient. Relative error uses
/// max(|analytic|, |fd|, 1e-6) as the denominator.
inline GradCheck check_gradient(const conflearn::Mlp& model, const conflearn::Matrix& x,
                                const conflearn::Matrix& w, long double step = 1e-5L) {
  using LD = long double;
  const auto analytic = conflearn::flatten(conflearn::weighted_batch_grad(model, x, w).grad);
  const auto model_ld = model.cast<LD>();
  const conflearn::MatrixX<LD> x_ld = x.cast<LD>();
  const conflearn::MatrixX<LD> w_ld = w.cast<LD>();
  const conflearn::VectorX<LD> theta = conflearn::flatten(model_ld);

  auto loss_at = [&](const conflearn::VectorX<LD>& params) {
    auto m = model_ld;
    conflearn::unflatten(params, m);
    const conflearn::MatrixX<LD> logits = conflearn::forward_batch(m, x_ld);
    LD total = 0;
    for (conflearn::Index i = 0; i < logits.rows(); ++i) {
      const LD top = logits.row(i).maxCoeff();
      LD s = 0;
      for (conflearn::Index k = 0; k < logits.cols(); ++k) s += std::exp(logits(i, k) - top);
      const LD lse = top + std::log(s);
      for (conflearn::Index k = 0; k < logits.cols(); ++k) total += w_ld(i, k) * (lse - logits(i, k));
    }
    return total / static_cast<LD>(logits.rows());
  };

  GradCheck out;
  for (conflearn::Index p = 0; p < theta.size(); ++p) {
    auto plus = theta;
    auto minus = theta;
    plus(p) += step;
    minus(p) -= step;
    const double fd = static_cast<double>((loss_at(plus) - loss_at(minus)) / (2 * step));
    const double a = analytic(p);
    const double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(a - fd) / denom);
    ++out.coordinates;
  }
  return out;
}

}  // namespace testsupport
