#pragma once

#include "conflearn/common.hpp"
#include "conflearn/density_ratio.hpp"
#include "conflearn/gaussian_mixture.hpp"
#include "conflearn/mlp.hpp"
#include "conflearn/risk.hpp"

#include <optional>

#include "json.hpp"

namespace conflearn {

struct TrainConfig {
  int epochs = 100;
  Index batch_size = 100;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;  // shuffling stream
  std::vector<Index> hidden{64, 64};
  Estimator estimator;
  /// Print risks to stderr every this many epochs; 0 disables.
  int report_every = 0;

  void validate() const;
};

/// Instances paired with precomputed per-class loss weights.
struct WeightedData {
  Matrix instances;  // n x d
  Matrix weights;    // n x K

  Index size() const { return instances.rows(); }
};

/// One weight row per instance. Noise-robust estimators need `ratio`
/// (a fitted model or an analytic phi).
Matrix precompute_weights(const ConfidenceDataset& data, const Estimator& estimator,
                          const std::optional<RatioFunction>& ratio);

struct TrainReport {
  std::vector<double> train_risk;  // full-batch, after each epoch
  std::vector<double> val_risk;
  double initial_train_risk = 0.0;
  double initial_val_risk = 0.0;
  int selected_epoch = 0;  // one-based; minimizes val_risk, earliest on ties
  std::optional<double> test_accuracy;
  double wall_seconds = 0.0;  // not serialized
};

struct TrainResult {
  Mlp model;
  TrainReport report;
};

/// Mini-batch Adam over seeded shuffles. Returns the snapshot from the epoch
/// with the lowest validation risk.
TrainResult train(std::uint64_t init_seed, const WeightedData& train_set, const WeightedData& val_set,
                  const TrainConfig& config);

/// Fraction of argmax predictions equal to the labels.
double evaluate_accuracy(const Mlp& model, const Matrix& instances, const std::vector<ClassIndex>& labels);

nlohmann::json report_to_json(const TrainReport& report);
TrainReport report_from_json(const nlohmann::json& doc);

}  // namespace conflearn
