#pragma once

// Multi-seed experiment grids over (estimator, conditioning, n, seed) on a
// synthetic Gaussian-mixture world, with per-trial JSON output and an
// aggregated result table.
//
// Within one (conditioning, n, seed) every estimator sees the same training,
// validation, unlabeled and test data and the same initial network, so rows
// can be compared with a paired t-test over seeds.

#include "conflearn/density_ratio.hpp"
#include "conflearn/gaussian_mixture.hpp"
#include "conflearn/trainer.hpp"

#include <filesystem>
#include <optional>
#include <ostream>

#include "json.hpp"

namespace conflearn {

struct ExperimentConfig {
  GaussianMixtureSpec spec = default_benchmark_spec();
  std::vector<ClassSet> conditionings{ClassSet::single(2)};
  Noise noise = Noise::Clean;
  std::vector<EstimatorKind> estimators{EstimatorKind::ScConf};
  std::vector<Index> n_ladder{2000};
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path out_dir = "run";
  int jobs = 1;

  double floor = kDefaultFloor;
  double val_fraction = 0.25;
  Index n_test = 10000;
  Index n_unlabeled = 0;  // 0: same as n
  bool analytic_ratio = false;
  bool analytic_confidence = true;
  /// Supervised rows train on n joint samples when set; otherwise on the
  /// n / pi_S joint draws that would contain n conditioning-set samples.
  bool match_n = false;

  TrainConfig train;
  BregmanConfig ratio;

  void validate() const;
};

/// Parses the JSON config document (see README for keys).
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc,
                                             const std::filesystem::path& base_dir = {});
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

/// Applies "key=value" to a JSON document. Dotted keys address nested
/// objects; the value is parsed as JSON and falls back to a string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

/// "1,2,5" or "1-10" (inclusive) or a mix.
std::vector<std::uint64_t> parse_seed_list(std::string_view text);
std::vector<Index> parse_size_list(std::string_view text);

struct TrialResult {
  EstimatorKind estimator = EstimatorKind::ScConf;
  ClassSet conditioning;
  Noise noise = Noise::Clean;
  Index n = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double accuracy = 0.0;
  double bayes_accuracy = 0.0;
  /// Mean over test instances of max_y p(y|x) - p(yhat|x): the excess error
  /// with labels integrated out. Nonnegative, and far less noisy than
  /// bayes_accuracy - accuracy.
  double posterior_excess = 0.0;
  std::optional<TrainReport> report;

  double excess_vs_bayes() const { return bayes_accuracy - accuracy; }
  std::string file_stem() const;
};

nlohmann::json trial_to_json(const TrialResult& trial);
TrialResult trial_from_json(const nlohmann::json& doc);

/// Data shared by every estimator for one (conditioning, n, seed).
struct TrialData {
  ConfidenceDataset train;
  ConfidenceDataset val;
  Matrix unlabeled;
  LabeledSample test;
  Matrix test_posteriors;  // exact p(y|x) per test row
  LabeledSample supervised_train;
  LabeledSample supervised_val;
  double bayes_accuracy = 0.0;
};

TrialData make_trial_data(const GaussianMixture& mix, const ExperimentConfig& config,
                          const ClassSet& conditioning, Index n, std::uint64_t seed);

/// Trains and evaluates one estimator. Divergence and numeric failures are
/// recorded in the result rather than thrown.
TrialResult run_trial(const GaussianMixture& mix, const ExperimentConfig& config, const TrialData& data,
                      EstimatorKind kind, const ClassSet& conditioning, Index n, std::uint64_t seed);

struct ResultRow {
  EstimatorKind estimator = EstimatorKind::ScConf;
  ClassSet conditioning;
  Noise noise = Noise::Clean;
  Index n = 0;
  int seeds = 0;     // successful trials
  int failures = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // sample standard deviation, 0 for one seed
  double mean_bayes = 0.0;
  /// Best mean in its (conditioning, noise, n) group, or not significantly
  /// different from it under a two-sided paired t-test at 5%.
  bool best_or_equivalent = false;
};

struct ResultTable {
  std::vector<ResultRow> rows;
};

/// Groups trials in first-seen order of (estimator, conditioning, noise, n).
ResultTable aggregate(const std::vector<TrialResult>& trials);

/// Two-sided paired t-test p-value; 1 when all differences are zero.
double paired_t_test_p_value(const std::vector<double>& a, const std::vector<double>& b);

void write_result_csv(const std::filesystem::path& path, const ResultTable& table);
void write_plot_data_csv(const std::filesystem::path& path, const std::vector<TrialResult>& trials);
void print_result_table(std::ostream& out, const ResultTable& table);

struct ExperimentOutcome {
  std::vector<TrialResult> trials;
  ResultTable table;
  bool all_failed = false;
};

/// Runs the whole grid with up to config.jobs threads, writing
/// out_dir/trials/<stem>.json, out_dir/results.csv and out_dir/config.json.
ExperimentOutcome run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

struct ReportOutcome {
  std::vector<TrialResult> trials;
  ResultTable table;
  std::vector<std::string> skipped;  // unreadable trial files
};

/// Re-aggregates the trial JSONs of a run directory, writing results.csv and
/// plot_data.csv there. Throws IoError when no trial could be read.
ReportOutcome report_run(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& warn);

}  // namespace conflearn
