#pragma once

// Per-example loss weights for every risk estimator, and the weighted
// empirical risk they all share:
//
//   R_hat(g) = (1/n) sum_i sum_y w_i^y loss(g(x_i), y)
//
// The estimators differ only in how w_i is built from the confidence vector
// r_i (and, for the noise-robust variants, the density ratio phi(x_i)):
//
//   ScConf      w_y = r_y / max(r_{y_s}, floor)
//   SubConf     w_y = r_y / max(sum_{y' in S} r_{y'}, floor)
//   NoRscConf   w_y = phi(x) * r~_y          (phi = p(x) / p(x | y_s))
//   NoRscSubConf w_y = phi(x) * r~_y         (phi = p(x) / p(x | y in S))
//   Weighted    w_y = r_y
//   Supervised  w_y = [y == label]
//
// The class-prior factors pi_{y_s} and pi_S that make ScConf and SubConf
// unbiased for the supervised risk do not change the minimizer, so they are
// left out of the weights and reported separately by prior_factor().

#include "conflearn/common.hpp"
#include "conflearn/confidence.hpp"
#include "conflearn/gaussian_mixture.hpp"
#include "conflearn/mlp.hpp"

#include <string>
#include <string_view>

namespace conflearn {

inline constexpr double kDefaultFloor = 1e-2;

Vector sc_conf_weights(const Vector& r, ClassIndex single_class, double floor = kDefaultFloor);

Vector sub_conf_weights(const Vector& r, const ClassSet& subset, double floor = kDefaultFloor);

/// phi * r. Serves both the single-class and the subset noise-robust
/// estimators; the caller picks the ratio's conditioning set.
Vector norsc_weights(const Vector& noisy_r, double phi);

Vector weighted_baseline_weights(const Vector& r);

/// Largest entry minus second largest.
double margin_delta(const Vector& noisy_r);

enum class EstimatorKind { ScConf, SubConf, NoRscConf, NoRscSubConf, Weighted, Supervised };

EstimatorKind parse_estimator_kind(std::string_view name);
std::string to_string(EstimatorKind kind);

/// Whether the estimator needs phi(x).
bool uses_ratio(EstimatorKind kind);

struct Estimator {
  EstimatorKind kind = EstimatorKind::ScConf;
  ClassSet conditioning;  // y_s or S; ignored by Weighted and Supervised
  double floor = kDefaultFloor;

  /// Throws ArgumentError when the conditioning does not suit the kind.
  void validate(int num_classes) const;

  /// The dropped constant that rescales the trained objective to the
  /// supervised risk: pi_{y_s} or pi_S for ScConf/SubConf, 1 otherwise.
  double prior_factor(const GaussianMixture& mix) const;

  /// Weights for one example. `phi` is consulted only when uses_ratio(kind).
  Vector weights(const Vector& r, double phi = 1.0) const;
};

struct SoftmaxCrossEntropy {
  template <typename Derived>
  double operator()(const Eigen::MatrixBase<Derived>& logits, ClassIndex y) const {
    return softmax_ce(logits, y);
  }
};

/// (1/n) sum_i sum_y w_iy loss(g(x_i), y). `instances` is n x d and
/// `weights` n x K.
template <typename Loss = SoftmaxCrossEntropy>
double empirical_risk(const Mlp& model, const Matrix& instances, const Matrix& weights,
                      const Loss& loss = Loss{}) {
  if (instances.rows() == 0) throw ArgumentError("empirical_risk: empty data");
  if (weights.rows() != instances.rows() || weights.cols() != model.num_classes()) {
    throw ShapeError("empirical_risk: weights must be n x K");
  }
  check_loss_weights(weights);
  const Matrix logits = forward_batch(model, instances);
  double total = 0.0;
  for (Index i = 0; i < logits.rows(); ++i) {
    for (Index y = 0; y < logits.cols(); ++y) {
      if (weights(i, y) != 0.0) {
        total += weights(i, y) * loss(logits.row(i).transpose(), static_cast<ClassIndex>(y));
      }
    }
  }
  return total / static_cast<double>(instances.rows());
}

/// Mean cross-entropy over labeled examples.
double supervised_risk(const Mlp& model, const Matrix& instances, const std::vector<ClassIndex>& labels);

/// One-hot weight rows for labels.
Matrix one_hot_rows(const std::vector<ClassIndex>& labels, int num_classes);

}  // namespace conflearn
