#include "conflearn/gaussian_mixture.hpp"

#include "conflearn/mlp.hpp"
#include "conflearn/rng.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace conflearn {

namespace {

double log_sum_exp_of(const std::vector<double>& values) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : values) top = std::max(top, v);
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

void validate_spec(const GaussianMixtureSpec& spec) {
  const int k = spec.num_classes();
  if (k < 1) throw ArgumentError("spec invalid: at least one class required");
  if (static_cast<int>(spec.means.size()) != k || static_cast<int>(spec.covariances.size()) != k) {
    throw ArgumentError("spec invalid: priors, means and covariances must all have K entries");
  }
  for (int y = 0; y < k; ++y) {
    if (!(spec.priors(y) > 0.0) || !std::isfinite(spec.priors(y))) {
      throw ArgumentError("spec invalid: priors must be positive");
    }
  }
  if (std::abs(spec.priors.sum() - 1.0) > 1e-12) {
    throw ArgumentError("spec invalid: priors must sum to 1 within 1e-12");
  }
  const Index d = spec.dim();
  if (d < 1) throw ArgumentError("spec invalid: dimension must be positive");
  for (int y = 0; y < k; ++y) {
    if (spec.means[y].size() != d || !spec.means[y].allFinite()) {
      throw ArgumentError("spec invalid: every mean must be a finite vector of length d");
    }
    const Matrix& cov = spec.covariances[y];
    if (cov.rows() != d || cov.cols() != d || !cov.allFinite()) {
      throw ArgumentError("spec invalid: every covariance must be a finite d x d matrix");
    }
    if (!cov.isApprox(cov.transpose(), 1e-12)) {
      throw ArgumentError("spec invalid: covariance " + std::to_string(y + 1) + " is not symmetric");
    }
  }
}

}  // namespace

GaussianMixture::GaussianMixture(GaussianMixtureSpec spec) : spec_(std::move(spec)) {
  validate_spec(spec_);
  const double d = static_cast<double>(spec_.dim());
  for (int y = 0; y < spec_.num_classes(); ++y) {
    Eigen::LLT<Matrix> llt(spec_.covariances[y]);
    if (llt.info() != Eigen::Success) {
      throw ArgumentError("spec invalid: covariance " + std::to_string(y + 1) +
                          " is not positive definite");
    }
    Matrix lower = llt.matrixL();
    const double log_det = 2.0 * lower.diagonal().array().log().sum();
    log_norm_.push_back(-0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det));
    lower_.push_back(std::move(lower));
    chol_.push_back(std::move(llt));
  }
}

double GaussianMixture::prior_mass(const ClassSet& set) const {
  set.validate(num_classes());
  return mass(spec_.priors, set);
}

double GaussianMixture::log_class_density(ClassIndex y, const Vector& x) const {
  if (x.size() != dim()) throw ShapeError("point dimension does not match spec");
  const Vector centered = x - spec_.means[y];
  const Vector solved = chol_[y].matrixL().solve(centered);
  return log_norm_[y] - 0.5 * solved.squaredNorm();
}

Vector GaussianMixture::log_joint(const Vector& x) const {
  Vector out(num_classes());
  for (int y = 0; y < num_classes(); ++y) {
    out(y) = std::log(spec_.priors(y)) + log_class_density(y, x);
  }
  return out;
}

double GaussianMixture::log_marginal_density(const Vector& x) const {
  return log_sum_exp(log_joint(x));
}

double GaussianMixture::log_conditional_density(const ClassSet& set, const Vector& x) const {
  set.validate(num_classes());
  const Vector joint = log_joint(x);
  std::vector<double> terms;
  for (ClassIndex y : set.members) terms.push_back(joint(y));
  return log_sum_exp_of(terms) - std::log(prior_mass(set));
}

Vector GaussianMixture::transform(ClassIndex y, const Vector& z) const {
  return spec_.means[y] + lower_[y] * z;
}

Noise parse_noise(std::string_view text) {
  if (text == "clean") return Noise::Clean;
  if (text == "onehot" || text == "one-hot") return Noise::OneHot;
  throw ArgumentError("unknown noise mode '" + std::string(text) + "' (clean|onehot)");
}

std::string to_string(Noise noise) { return noise == Noise::Clean ? "clean" : "onehot"; }

LabeledSample sample_joint(const GaussianMixture& mix, Index n, std::uint64_t seed) {
  if (n < 1) throw ArgumentError("sample_joint: n must be at least 1");
  Rng labels(derive_seed(seed, 1));
  Rng normals(derive_seed(seed, 2));
  const std::span<const double> priors(mix.spec().priors.data(),
                                       static_cast<std::size_t>(mix.num_classes()));
  LabeledSample out{Matrix(n, mix.dim()), {}};
  out.labels.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto y = static_cast<ClassIndex>(labels.categorical(priors));
    out.labels.push_back(y);
    out.instances.row(i) = mix.transform(y, normals.normal_vector(mix.dim())).transpose();
  }
  return out;
}

Matrix sample_class_conditional(const GaussianMixture& mix, const ClassSet& set, Index n,
                                std::uint64_t seed) {
  if (n < 1) throw ArgumentError("sample_class_conditional: n must be at least 1");
  set.validate(mix.num_classes());
  std::vector<double> restricted;
  for (ClassIndex y : set.members) restricted.push_back(mix.prior(y));
  Rng labels(derive_seed(seed, 1));
  Rng normals(derive_seed(seed, 2));
  Matrix out(n, mix.dim());
  for (Index i = 0; i < n; ++i) {
    const ClassIndex y = set.is_singleton()
                             ? set.members.front()
                             : set.members[static_cast<std::size_t>(labels.categorical(restricted))];
    out.row(i) = mix.transform(y, normals.normal_vector(mix.dim())).transpose();
  }
  return out;
}

Vector true_posterior(const GaussianMixture& mix, const Vector& x) {
  const Vector joint = mix.log_joint(x);
  return (joint.array() - log_sum_exp(joint)).exp().matrix();
}

Matrix true_posterior_rows(const GaussianMixture& mix, const Matrix& instances) {
  Matrix out(instances.rows(), mix.num_classes());
  for (Index i = 0; i < instances.rows(); ++i) {
    out.row(i) = true_posterior(mix, instances.row(i).transpose()).transpose();
  }
  return out;
}

double true_density_ratio(const GaussianMixture& mix, const ClassSet& set, const Vector& x) {
  set.validate(mix.num_classes());
  const Vector joint = mix.log_joint(x);
  if (static_cast<int>(set.size()) == mix.num_classes()) return 1.0;
  std::vector<double> in_set;
  for (ClassIndex y : set.members) in_set.push_back(joint(y));
  // log pi_set - log p(set | x)
  return std::exp(std::log(mix.prior_mass(set)) - (log_sum_exp_of(in_set) - log_sum_exp(joint)));
}

Vector one_hot_corrupt(const Vector& r) {
  Vector out = Vector::Zero(r.size());
  out(argmax_lowest(r)) = 1.0;
  return out;
}

double bayes_accuracy_on(const GaussianMixture& mix, const LabeledSample& sample) {
  if (sample.instances.rows() == 0) throw ArgumentError("bayes_accuracy_on: empty sample");
  Index hits = 0;
  for (Index i = 0; i < sample.instances.rows(); ++i) {
    const Vector joint = mix.log_joint(sample.instances.row(i).transpose());
    if (argmax_lowest(joint) == sample.labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(sample.instances.rows());
}

AccuracyEstimate bayes_accuracy(const GaussianMixture& mix, Index n_mc, std::uint64_t seed) {
  if (n_mc < 1) throw ArgumentError("bayes_accuracy: n_mc must be at least 1");
  const double acc = bayes_accuracy_on(mix, sample_joint(mix, n_mc, seed));
  return {acc, std::sqrt(acc * (1.0 - acc) / static_cast<double>(n_mc))};
}

ConfidenceDataset build_confidence_dataset(const GaussianMixture& mix, const ClassSet& conditioning,
                                           Index n, Noise noise, std::uint64_t seed) {
  ConfidenceDataset out;
  out.instances = sample_class_conditional(mix, conditioning, n, seed);
  out.confidences = true_posterior_rows(mix, out.instances);
  if (noise == Noise::OneHot) {
    for (Index i = 0; i < n; ++i) {
      out.confidences.row(i) = one_hot_corrupt(out.confidences.row(i).transpose()).transpose();
    }
  }
  out.conditioning = conditioning;
  out.noise = noise;
  return out;
}

GaussianMixtureSpec default_benchmark_spec() {
  constexpr double side = 1.5;
  GaussianMixtureSpec spec;
  spec.priors = Vector{{0.3, 0.3, 0.4}};
  spec.means = {Vector{{0.0, 0.0}}, Vector{{side, 0.0}},
                Vector{{side / 2.0, side * std::sqrt(3.0) / 2.0}}};
  spec.covariances.assign(3, Matrix::Identity(2, 2));
  return spec;
}

GaussianMixtureSpec spec_from_json(const nlohmann::json& doc) {
  try {
    GaussianMixtureSpec spec;
    const auto priors = doc.at("priors").get<std::vector<double>>();
    spec.priors = Eigen::Map<const Vector>(priors.data(), static_cast<Index>(priors.size()));
    for (const auto& m : doc.at("means")) {
      const auto v = m.get<std::vector<double>>();
      spec.means.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())));
    }
    for (const auto& c : doc.at("covariances")) {
      if (!c.empty() && c.front().is_array()) {
        const auto rows = c.get<std::vector<std::vector<double>>>();
        Matrix cov(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
          if (static_cast<Index>(rows[r].size()) != cov.cols()) {
            throw ArgumentError("spec invalid: ragged covariance matrix");
          }
          for (std::size_t col = 0; col < rows[r].size(); ++col) {
            cov(static_cast<Index>(r), static_cast<Index>(col)) = rows[r][col];
          }
        }
        spec.covariances.push_back(std::move(cov));
      } else {
        const auto diag = c.get<std::vector<double>>();
        spec.covariances.push_back(
            Eigen::Map<const Vector>(diag.data(), static_cast<Index>(diag.size())).asDiagonal());
      }
    }
    validate_spec(spec);
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("spec invalid: ") + e.what());
  }
}

nlohmann::json spec_to_json(const GaussianMixtureSpec& spec) {
  nlohmann::json doc;
  doc["priors"] = std::vector<double>(spec.priors.data(), spec.priors.data() + spec.priors.size());
  doc["means"] = nlohmann::json::array();
  for (const auto& m : spec.means) doc["means"].push_back(std::vector<double>(m.data(), m.data() + m.size()));
  doc["covariances"] = nlohmann::json::array();
  for (const auto& c : spec.covariances) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index r = 0; r < c.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(c.cols()));
      for (Index col = 0; col < c.cols(); ++col) row[static_cast<std::size_t>(col)] = c(r, col);
      rows.push_back(row);
    }
    doc["covariances"].push_back(rows);
  }
  return doc;
}

GaussianMixtureSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open spec file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("spec invalid: " + path + " is not valid JSON: " + e.what());
  }
  return spec_from_json(doc);
}

}  // namespace conflearn
