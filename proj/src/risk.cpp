#include "conflearn/risk.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace conflearn {

namespace {

void check_floor(double floor) {
  if (!(floor >= 0.0 && floor < 1.0)) throw ArgumentError("floor must lie in [0, 1)");
}

Vector ratio_weights(const Vector& r, double denominator, double floor) {
  check_floor(floor);
  const double clipped = std::max(denominator, floor);
  if (!(clipped > 0.0)) {
    throw NumericError("confidence denominator is zero and floor is 0; use a positive floor");
  }
  return r / clipped;
}

constexpr std::array<std::pair<EstimatorKind, std::string_view>, 6> kNames{{
    {EstimatorKind::ScConf, "ScConf"},
    {EstimatorKind::SubConf, "SubConf"},
    {EstimatorKind::NoRscConf, "NoRscConf"},
    {EstimatorKind::NoRscSubConf, "NoRscSubConf"},
    {EstimatorKind::Weighted, "Weighted"},
    {EstimatorKind::Supervised, "Supervised"},
}};

}  // namespace

Vector sc_conf_weights(const Vector& r, ClassIndex single_class, double floor) {
  if (single_class < 0 || single_class >= r.size()) {
    throw ClassIndexError("single class outside the confidence vector");
  }
  return ratio_weights(r, r(single_class), floor);
}

Vector sub_conf_weights(const Vector& r, const ClassSet& subset, double floor) {
  subset.validate(static_cast<int>(r.size()));
  return ratio_weights(r, mass(r, subset), floor);
}

Vector norsc_weights(const Vector& noisy_r, double phi) {
  if (!(phi >= 0.0) || !std::isfinite(phi)) {
    throw WeightDomainError("density ratio must be finite and nonnegative");
  }
  return phi * noisy_r;
}

Vector weighted_baseline_weights(const Vector& r) { return r; }

double margin_delta(const Vector& noisy_r) {
  if (noisy_r.size() < 2) throw ArgumentError("margin needs at least two classes");
  double first = -std::numeric_limits<double>::infinity();
  double second = first;
  for (Index i = 0; i < noisy_r.size(); ++i) {
    const double v = noisy_r(i);
    if (v > first) {
      second = first;
      first = v;
    } else if (v > second) {
      second = v;
    }
  }
  return first - second;
}

EstimatorKind parse_estimator_kind(std::string_view name) {
  for (const auto& [kind, text] : kNames) {
    if (text == name) return kind;
  }
  if (name == "WeightedBaseline") return EstimatorKind::Weighted;
  throw ArgumentError("unknown estimator '" + std::string(name) +
                      "' (ScConf|SubConf|NoRscConf|NoRscSubConf|Weighted|Supervised)");
}

std::string to_string(EstimatorKind kind) {
  for (const auto& [k, text] : kNames) {
    if (k == kind) return std::string(text);
  }
  return "?";
}

bool uses_ratio(EstimatorKind kind) {
  return kind == EstimatorKind::NoRscConf || kind == EstimatorKind::NoRscSubConf;
}

void Estimator::validate(int num_classes) const {
  check_floor(floor);
  switch (kind) {
    case EstimatorKind::ScConf:
    case EstimatorKind::NoRscConf:
      conditioning.validate(num_classes);
      if (!conditioning.is_singleton()) {
        throw ArgumentError(to_string(kind) + " needs a single conditioning class, got {" +
                            conditioning.to_string() + "}");
      }
      break;
    case EstimatorKind::SubConf:
    case EstimatorKind::NoRscSubConf:
      conditioning.validate(num_classes);
      break;
    case EstimatorKind::Weighted:
    case EstimatorKind::Supervised:
      break;
  }
}

double Estimator::prior_factor(const GaussianMixture& mix) const {
  switch (kind) {
    case EstimatorKind::ScConf:
    case EstimatorKind::SubConf:
      return mix.prior_mass(conditioning);
    default:
      return 1.0;
  }
}

Vector Estimator::weights(const Vector& r, double phi) const {
  switch (kind) {
    case EstimatorKind::ScConf:
      return sc_conf_weights(r, conditioning.members.front(), floor);
    case EstimatorKind::SubConf:
      return sub_conf_weights(r, conditioning, floor);
    case EstimatorKind::NoRscConf:
    case EstimatorKind::NoRscSubConf:
      return norsc_weights(r, phi);
    case EstimatorKind::Weighted:
    case EstimatorKind::Supervised:
      // Supervised rows carry one-hot labels in place of confidences.
      return weighted_baseline_weights(r);
  }
  return r;
}

Matrix one_hot_rows(const std::vector<ClassIndex>& labels, int num_classes) {
  Matrix out = Matrix::Zero(static_cast<Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ClassIndexError("label " + std::to_string(labels[i] + 1) + " outside 1.." +
                            std::to_string(num_classes));
    }
    out(static_cast<Index>(i), labels[i]) = 1.0;
  }
  return out;
}

double supervised_risk(const Mlp& model, const Matrix& instances, const std::vector<ClassIndex>& labels) {
  if (instances.rows() == 0) throw ArgumentError("supervised_risk: empty data");
  if (static_cast<Index>(labels.size()) != instances.rows()) {
    throw ShapeError("supervised_risk: one label per instance required");
  }
  const Matrix logits = forward_batch(model, instances);
  double total = 0.0;
  for (Index i = 0; i < logits.rows(); ++i) {
    total += softmax_ce(logits.row(i).transpose(), labels[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<double>(instances.rows());
}

}  // namespace conflearn
