#include "conflearn/trainer.hpp"

#include "conflearn/rng.hpp"

#include <chrono>
#include <cmath>
#include <iostream>

namespace conflearn {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0)) {
    throw ConfigError("learning rate and weight decay must be nonnegative");
  }
  for (Index h : hidden) {
    if (h < 1) throw ConfigError("hidden widths must be positive");
  }
}

Matrix precompute_weights(const ConfidenceDataset& data, const Estimator& estimator,
                          const std::optional<RatioFunction>& ratio) {
  const auto k = static_cast<int>(data.confidences.cols());
  estimator.validate(k);
  if (uses_ratio(estimator.kind) && !ratio) {
    throw ConfigError(to_string(estimator.kind) + " needs a density-ratio model");
  }
  Matrix out(data.size(), k);
  for (Index i = 0; i < data.size(); ++i) {
    const Vector r = data.confidences.row(i).transpose();
    const double phi = uses_ratio(estimator.kind) ? (*ratio)(data.instances.row(i).transpose()) : 1.0;
    out.row(i) = estimator.weights(r, phi).transpose();
  }
  return out;
}

TrainResult train(std::uint64_t init_seed, const WeightedData& train_set, const WeightedData& val_set,
                  const TrainConfig& config) {
  config.validate();
  if (train_set.size() == 0 || val_set.size() == 0) throw ArgumentError("train: empty dataset");
  if (config.batch_size > train_set.size()) {
    throw ConfigError("batch size " + std::to_string(config.batch_size) + " exceeds training size " +
                      std::to_string(train_set.size()));
  }
  if (train_set.instances.cols() != val_set.instances.cols() ||
      train_set.weights.cols() != val_set.weights.cols()) {
    throw ShapeError("train and validation splits disagree on shape");
  }
  const auto start = std::chrono::steady_clock::now();

  std::vector<Index> dims{train_set.instances.cols()};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(train_set.weights.cols());

  TrainResult result{make_mlp(dims, init_seed), {}};
  Mlp model = result.model;
  TrainReport& report = result.report;
  report.initial_train_risk = empirical_risk(model, train_set.instances, train_set.weights);
  report.initial_val_risk = empirical_risk(model, val_set.instances, val_set.weights);

  AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  adam.weight_decay = config.weight_decay;
  AdamState<double> state = make_adam_state(model, adam);
  Rng shuffler(derive_seed(config.seed, 11));

  double best_val = std::numeric_limits<double>::infinity();
  const Index n = train_set.size();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::vector<Index> order = shuffler.permutation(n);
    for (Index begin = 0; begin < n; begin += config.batch_size) {
      const Index end = std::min(n, begin + config.batch_size);
      const std::vector<Index> idx(order.begin() + begin, order.begin() + end);
      const Matrix xb = train_set.instances(idx, Eigen::all);
      const Matrix wb = train_set.weights(idx, Eigen::all);
      const auto step = weighted_batch_grad(model, xb, wb);
      if (!std::isfinite(step.loss)) {
        throw DivergenceError("non-finite loss in epoch " + std::to_string(epoch), epoch);
      }
      try {
        adam_step(state, model, step.grad);
      } catch (const DivergenceError&) {
        throw DivergenceError("non-finite gradient in epoch " + std::to_string(epoch), epoch);
      }
    }
    const double tr = empirical_risk(model, train_set.instances, train_set.weights);
    const double va = empirical_risk(model, val_set.instances, val_set.weights);
    if (!std::isfinite(tr) || !std::isfinite(va)) {
      throw DivergenceError("non-finite risk after epoch " + std::to_string(epoch), epoch);
    }
    report.train_risk.push_back(tr);
    report.val_risk.push_back(va);
    if (va < best_val) {
      best_val = va;
      report.selected_epoch = epoch;
      result.model = model;
    }
    if (config.report_every > 0 && epoch % config.report_every == 0) {
      std::clog << "epoch " << epoch << " train " << tr << " val " << va << '\n';
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

double evaluate_accuracy(const Mlp& model, const Matrix& instances, const std::vector<ClassIndex>& labels) {
  if (instances.rows() == 0) throw ArgumentError("evaluate_accuracy: empty test set");
  if (static_cast<Index>(labels.size()) != instances.rows()) {
    throw ShapeError("evaluate_accuracy: one label per instance required");
  }
  const auto predicted = predict_batch(model, instances);
  Index hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= model.num_classes()) throw ClassIndexError("label out of range");
    hits += predicted[i] == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

nlohmann::json report_to_json(const TrainReport& report) {
  nlohmann::json doc;
  doc["train_risk"] = report.train_risk;
  doc["val_risk"] = report.val_risk;
  doc["initial_train_risk"] = report.initial_train_risk;
  doc["initial_val_risk"] = report.initial_val_risk;
  doc["selected_epoch"] = report.selected_epoch;
  doc["test_accuracy"] = report.test_accuracy ? nlohmann::json(*report.test_accuracy) : nlohmann::json(nullptr);
  return doc;
}

TrainReport report_from_json(const nlohmann::json& doc) {
  TrainReport report;
  report.train_risk = doc.at("train_risk").get<std::vector<double>>();
  report.val_risk = doc.at("val_risk").get<std::vector<double>>();
  report.initial_train_risk = doc.at("initial_train_risk").get<double>();
  report.initial_val_risk = doc.at("initial_val_risk").get<double>();
  report.selected_epoch = doc.at("selected_epoch").get<int>();
  if (!doc.at("test_accuracy").is_null()) report.test_accuracy = doc.at("test_accuracy").get<double>();
  return report;
}

}  // namespace conflearn
