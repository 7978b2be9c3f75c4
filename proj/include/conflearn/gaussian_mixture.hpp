#pragma once

// Ground-truth Gaussian-mixture world. Every quantity the estimators need to
// be checked against (posteriors, density ratios, Bayes accuracy) is exact
// here, so synthetic experiments have analytic oracles.

#include "conflearn/common.hpp"
#include "conflearn/confidence.hpp"

#include <Eigen/Cholesky>

#include "json.hpp"

namespace conflearn {

struct GaussianMixtureSpec {
  Vector priors;                   // K, positive, sums to 1
  std::vector<Vector> means;       // K vectors of length d
  std::vector<Matrix> covariances; // K symmetric positive-definite d x d

  int num_classes() const { return static_cast<int>(priors.size()); }
  Index dim() const { return means.empty() ? 0 : means.front().size(); }
};

/// Validated spec with cached Cholesky factors.
class GaussianMixture {
 public:
  explicit GaussianMixture(GaussianMixtureSpec spec);

  const GaussianMixtureSpec& spec() const { return spec_; }
  int num_classes() const { return spec_.num_classes(); }
  Index dim() const { return spec_.dim(); }
  double prior(ClassIndex y) const { return spec_.priors(y); }
  double prior_mass(const ClassSet& set) const;

  /// log N(x; mu_y, Sigma_y)
  double log_class_density(ClassIndex y, const Vector& x) const;
  /// log p(x, y) for every class.
  Vector log_joint(const Vector& x) const;
  double log_marginal_density(const Vector& x) const;
  /// log p(x | y in set)
  double log_conditional_density(const ClassSet& set, const Vector& x) const;

  /// mu_y + L_y z for a standard-normal vector z.
  Vector transform(ClassIndex y, const Vector& z) const;

 private:
  GaussianMixtureSpec spec_;
  std::vector<Eigen::LLT<Matrix>> chol_;
  std::vector<Matrix> lower_;
  std::vector<double> log_norm_;  // -(d log 2pi + log det Sigma) / 2
};

enum class Noise { Clean, OneHot };

Noise parse_noise(std::string_view text);
std::string to_string(Noise noise);

struct LabeledSample {
  Matrix instances;              // n x d
  std::vector<ClassIndex> labels;
};

struct ConfidenceDataset {
  Matrix instances;    // n x d
  Matrix confidences;  // n x K, rows are confidence vectors
  ClassSet conditioning;
  Noise noise = Noise::Clean;

  Index size() const { return instances.rows(); }
};

// Sampling streams: labels come from derive_seed(seed, 1) and standard
// normals from derive_seed(seed, 2). Joint and class-conditional draws that
// share a seed therefore share their standard-normal vectors, which lets
// paired Monte-Carlo comparisons cancel common noise.

/// y ~ Categorical(pi), x ~ N(mu_y, Sigma_y).
LabeledSample sample_joint(const GaussianMixture& mix, Index n, std::uint64_t seed);

/// x ~ p(x | y in set): y drawn from pi restricted to the set, then x | y.
Matrix sample_class_conditional(const GaussianMixture& mix, const ClassSet& set, Index n,
                                std::uint64_t seed);

/// Bayes posterior {p(y|x)} computed in log space.
Vector true_posterior(const GaussianMixture& mix, const Vector& x);
Matrix true_posterior_rows(const GaussianMixture& mix, const Matrix& instances);

/// p(x) / p(x | y in set) = pi_set / p(y in set | x).
double true_density_ratio(const GaussianMixture& mix, const ClassSet& set, const Vector& x);

/// One at the argmax (lowest index on ties), zero elsewhere.
Vector one_hot_corrupt(const Vector& r);

struct AccuracyEstimate {
  double accuracy;
  double std_error;
};

/// Monte-Carlo accuracy of the argmax-posterior rule on fresh joint samples.
AccuracyEstimate bayes_accuracy(const GaussianMixture& mix, Index n_mc, std::uint64_t seed);

/// Accuracy of the argmax-posterior rule on a fixed labeled sample.
double bayes_accuracy_on(const GaussianMixture& mix, const LabeledSample& sample);

ConfidenceDataset build_confidence_dataset(const GaussianMixture& mix, const ClassSet& conditioning,
                                           Index n, Noise noise, std::uint64_t seed);

/// d = 2, K = 3, priors (0.3, 0.3, 0.4), identity covariances, means on an
/// equilateral triangle of side 1.5.
GaussianMixtureSpec default_benchmark_spec();

/// Spec JSON: {"priors": [...], "means": [[...], ...], "covariances": [...]}.
/// A covariance entry may be a d x d nested list or a length-d list holding
/// a diagonal.
GaussianMixtureSpec spec_from_json(const nlohmann::json& doc);
nlohmann::json spec_to_json(const GaussianMixtureSpec& spec);
GaussianMixtureSpec load_spec(const std::string& path);

}  // namespace conflearn
