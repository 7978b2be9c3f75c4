// conflearn: data generation, ratio fitting, training, evaluation and
// multi-seed experiment grids on synthetic Gaussian mixtures.
//
// Exit codes: 0 ok, 1 usage/config, 2 IO, 3 all trials diverged,
// 4 partial success (some trial files unreadable in `report`).

#include "conflearn/experiment.hpp"
#include "conflearn/io.hpp"

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

namespace fs = std::filesystem;
using namespace conflearn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitIo = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitPartial = 4;

GaussianMixtureSpec spec_or_default(const std::string& path) {
  return path.empty() ? default_benchmark_spec() : load_spec(path);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

struct GenerateArgs {
  std::string spec;
  std::string conditioning = "3";
  std::string noise = "clean";
  Index n = 1000;
  Index n_unlabeled = 0;
  Index n_test = 10000;
  std::uint64_t seed = 1;
  std::string out = "data";
};

int cmd_generate(const GenerateArgs& a) {
  const GaussianMixture mix(spec_or_default(a.spec));
  const ClassSet cond = ClassSet::parse(a.conditioning);
  cond.validate(mix.num_classes());
  if (a.n < 1) throw ArgumentError("--n must be positive");
  const fs::path out = a.out;
  ensure_dir(out);
  const auto data = build_confidence_dataset(mix, cond, a.n, parse_noise(a.noise), derive_seed(a.seed, 1));
  const Matrix unlabeled =
      sample_joint(mix, a.n_unlabeled > 0 ? a.n_unlabeled : a.n, derive_seed(a.seed, 3)).instances;
  const auto test = sample_joint(mix, a.n_test, derive_seed(a.seed, 4));
  write_confidence_csv(out / "confidence.csv", data.instances, data.confidences);
  write_unlabeled_csv(out / "unlabeled.csv", unlabeled);
  write_labeled_csv(out / "test.csv", test.instances, test.labels);
  std::cout << "wrote " << (out / "confidence.csv").string() << ", unlabeled.csv, test.csv\n";
  return kExitOk;
}

struct FitRatioArgs {
  std::string confidence;
  std::string unlabeled;
  std::string out = "ratio.json";
  std::uint64_t seed = 1;
  BregmanConfig config;
};

int cmd_fit_ratio(const FitRatioArgs& a) {
  const Matrix sc = read_confidence_csv(a.confidence).instances;
  const Matrix u = read_unlabeled_csv(a.unlabeled);
  const RatioModel model = fit_ratio(sc, u, a.config, a.seed);
  write_json_file(a.out, ratio_to_json(model));
  std::cout << "centers " << model.centers.rows() << " sigma " << format_double(model.sigma)
            << " objective " << format_double(empirical_bregman(model, sc, u)) << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string confidence;
  std::string val;
  std::string test;
  std::string spec;
  std::string conditioning = "3";
  std::string estimator = "ScConf";
  std::string noise = "clean";
  std::string ratio;
  bool analytic_ratio = false;
  bool analytic_confidence = false;
  double floor = kDefaultFloor;
  double val_fraction = 0.2;
  std::string out = "model.json";
  std::string report;
  TrainConfig train;
};

// Applies --analytic-confidence: true posteriors from the spec, corrupted
// according to --noise.
void replace_confidences(ConfidenceDataset& data, const GaussianMixture& mix) {
  data.confidences = true_posterior_rows(mix, data.instances);
  if (data.noise == Noise::OneHot) {
    for (Index i = 0; i < data.size(); ++i) {
      data.confidences.row(i) = one_hot_corrupt(data.confidences.row(i).transpose()).transpose();
    }
  }
}

ConfidenceDataset load_confidence(const std::string& path, const ClassSet& cond, Noise noise) {
  auto table = read_confidence_csv(path);
  return {std::move(table.instances), std::move(table.confidences), cond, noise};
}

int cmd_train(TrainArgs a) {
  const Noise noise = parse_noise(a.noise);
  const ClassSet cond = ClassSet::parse(a.conditioning);
  const Estimator estimator{parse_estimator_kind(a.estimator), cond, a.floor};
  if (estimator.kind == EstimatorKind::Supervised) {
    throw ConfigError("the train command works on confidence data; Supervised runs inside `experiment`");
  }

  ConfidenceDataset train_data = load_confidence(a.confidence, cond, noise);
  ConfidenceDataset val_data;
  if (!a.val.empty()) {
    val_data = load_confidence(a.val, cond, noise);
  } else {
    // Hold out the trailing rows; generated files are already in random order.
    const Index n = train_data.size();
    const Index n_val = static_cast<Index>(std::lround(a.val_fraction * static_cast<double>(n)));
    if (n_val < 1 || n_val >= n) throw ConfigError("--val-fraction leaves an empty split");
    val_data = {train_data.instances.bottomRows(n_val), train_data.confidences.bottomRows(n_val), cond, noise};
    train_data.instances.conservativeResize(n - n_val, Eigen::NoChange);
    train_data.confidences.conservativeResize(n - n_val, Eigen::NoChange);
  }

  std::optional<GaussianMixture> mix;
  if (!a.spec.empty() || a.analytic_ratio || a.analytic_confidence) mix.emplace(spec_or_default(a.spec));
  if (a.analytic_confidence) {
    replace_confidences(train_data, *mix);
    replace_confidences(val_data, *mix);
  }
  estimator.validate(static_cast<int>(train_data.confidences.cols()));

  std::optional<RatioFunction> ratio;
  if (uses_ratio(estimator.kind)) {
    if (a.analytic_ratio) {
      ratio = [m = *mix, cond](const Vector& x) { return true_density_ratio(m, cond, x); };
    } else if (!a.ratio.empty()) {
      ratio = [model = ratio_from_json(read_json_file(a.ratio))](const Vector& x) { return eval_ratio(model, x); };
    }
  }

  a.train.estimator = estimator;
  const WeightedData train_set{train_data.instances, precompute_weights(train_data, estimator, ratio)};
  const WeightedData val_set{val_data.instances, precompute_weights(val_data, estimator, ratio)};
  TrainResult result = train(derive_seed(a.train.seed, 8), train_set, val_set, a.train);
  if (!a.test.empty()) {
    const auto test = read_labeled_csv(a.test);
    result.report.test_accuracy = evaluate_accuracy(result.model, test.instances, test.labels);
  }
  write_json_file(a.out, mlp_to_json(result.model));
  if (!a.report.empty()) write_json_file(a.report, report_to_json(result.report));

  const auto& r = result.report;
  std::cout << "selected epoch " << r.selected_epoch << " val risk "
            << format_double(r.val_risk[static_cast<std::size_t>(r.selected_epoch - 1)]);
  if (r.test_accuracy) std::cout << " test accuracy " << format_double(*r.test_accuracy);
  std::cout << '\n';
  return kExitOk;
}

int cmd_evaluate(const std::string& model_path, const std::string& test_path, const std::string& spec) {
  const Mlp model = mlp_from_json(read_json_file(model_path));
  const auto test = read_labeled_csv(test_path);
  std::cout << "accuracy " << format_double(evaluate_accuracy(model, test.instances, test.labels)) << '\n';
  if (!spec.empty()) {
    const GaussianMixture mix(load_spec(spec));
    std::cout << "bayes_accuracy " << format_double(bayes_accuracy_on(mix, {test.instances, test.labels}))
              << '\n';
  }
  return kExitOk;
}

struct ExperimentArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string spec;
  std::string conditioning;
  std::string noise;
  std::string estimators;
  std::string n;
  std::string seeds;
  std::string out;
  int jobs = 0;
  bool analytic_ratio = false;
  bool analytic_confidence = false;
  bool match_n = false;
  std::optional<double> floor;
};

int cmd_experiment(const ExperimentArgs& a) {
  nlohmann::json doc = nlohmann::json::object();
  fs::path base_dir;
  if (!a.config.empty()) {
    doc = read_json_file(a.config);
    base_dir = fs::path(a.config).parent_path();
  }
  if (!a.spec.empty()) doc["spec"] = fs::absolute(a.spec).string();
  if (!a.conditioning.empty()) doc["conditionings"] = {a.conditioning};
  if (!a.noise.empty()) doc["noise"] = a.noise;
  if (!a.estimators.empty()) doc["estimators"] = a.estimators;
  if (!a.n.empty()) doc["n"] = a.n;
  if (!a.seeds.empty()) doc["seeds"] = a.seeds;
  if (!a.out.empty()) doc["out"] = a.out;
  if (a.jobs > 0) doc["jobs"] = a.jobs;
  if (a.analytic_ratio) doc["analytic_ratio"] = true;
  if (a.analytic_confidence) doc["analytic_confidence"] = true;
  if (a.match_n) doc["match_n"] = true;
  if (a.floor) doc["floor"] = *a.floor;
  for (const auto& o : a.overrides) apply_override(doc, o);

  const ExperimentConfig config = experiment_config_from_json(doc, base_dir);
  const ExperimentOutcome outcome = run_experiment(config, &std::clog);
  print_result_table(std::cout, outcome.table);
  return outcome.all_failed ? kExitDiverged : kExitOk;
}

int cmd_report(const std::string& run_dir) {
  const ReportOutcome outcome = report_run(run_dir, std::cout, std::cerr);
  return outcome.skipped.empty() ? kExitOk : kExitPartial;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning from single-class confidence data on synthetic Gaussian mixtures"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write confidence, unlabeled and labeled test CSVs");
  generate->add_option("--spec", gen.spec, "Gaussian mixture spec JSON (default: built-in benchmark)");
  generate->add_option("--conditioning", gen.conditioning, "Class or subset, 1-based, e.g. 3 or 2,3");
  generate->add_option("--noise", gen.noise, "clean or onehot")->check(CLI::IsMember({"clean", "onehot"}));
  generate->add_option("--n", gen.n, "Confidence-data size");
  generate->add_option("--n-unlabeled", gen.n_unlabeled, "Unlabeled size (default: n)");
  generate->add_option("--n-test", gen.n_test, "Labeled test size");
  generate->add_option("--seed", gen.seed);
  generate->add_option("--out", gen.out, "Output directory");

  FitRatioArgs fit;
  auto* fit_ratio_cmd = app.add_subcommand("fit-ratio", "Fit the density ratio p(x)/p(x|conditioning)");
  fit_ratio_cmd->add_option("--confidence", fit.confidence, "Confidence CSV (its instances are used)")->required();
  fit_ratio_cmd->add_option("--unlabeled", fit.unlabeled, "Unlabeled CSV")->required();
  fit_ratio_cmd->add_option("--out", fit.out, "Ratio model JSON");
  fit_ratio_cmd->add_option("--seed", fit.seed);
  fit_ratio_cmd->add_option("--ridge", fit.config.ridge);
  fit_ratio_cmd->add_option("--max-centers", fit.config.max_centers);
  fit_ratio_cmd->add_option("--bandwidth", fit.config.bandwidth, "Kernel width; 0 picks the median distance");
  fit_ratio_cmd->add_flag("--cross-validate", fit.config.cross_validate, "Choose bandwidth and ridge by k-fold CV");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a classifier on confidence data");
  train_cmd->add_option("--confidence", tr.confidence, "Training confidence CSV")->required();
  train_cmd->add_option("--val", tr.val, "Validation confidence CSV (default: hold out --val-fraction)");
  train_cmd->add_option("--val-fraction", tr.val_fraction);
  train_cmd->add_option("--test", tr.test, "Labeled test CSV");
  train_cmd->add_option("--spec", tr.spec, "Spec JSON for analytic oracles");
  train_cmd->add_option("--conditioning", tr.conditioning);
  train_cmd->add_option("--estimator", tr.estimator, "ScConf, SubConf, NoRscConf, NoRscSubConf, Weighted");
  train_cmd->add_option("--noise", tr.noise)->check(CLI::IsMember({"clean", "onehot"}));
  train_cmd->add_option("--ratio", tr.ratio, "Ratio model JSON from fit-ratio");
  train_cmd->add_flag("--analytic-ratio", tr.analytic_ratio, "Use the exact ratio from the spec");
  train_cmd->add_flag("--analytic-confidence", tr.analytic_confidence,
                      "Replace loaded confidences with exact posteriors (one-hot when --noise onehot)");
  train_cmd->add_option("--floor", tr.floor, "Denominator floor for confidence ratios");
  train_cmd->add_option("--epochs", tr.train.epochs);
  train_cmd->add_option("--batch-size", tr.train.batch_size);
  train_cmd->add_option("--lr", tr.train.learning_rate);
  train_cmd->add_option("--weight-decay", tr.train.weight_decay);
  train_cmd->add_option("--hidden", tr.train.hidden, "Hidden widths")->delimiter(',');
  train_cmd->add_option("--seed", tr.train.seed);
  train_cmd->add_option("--report-every", tr.train.report_every);
  train_cmd->add_option("--out", tr.out, "Model JSON");
  train_cmd->add_option("--report", tr.report, "Training report JSON");

  std::string eval_model, eval_test, eval_spec;
  auto* evaluate = app.add_subcommand("evaluate", "Test accuracy of a trained model");
  evaluate->add_option("--model", eval_model)->required();
  evaluate->add_option("--test", eval_test, "Labeled test CSV")->required();
  evaluate->add_option("--spec", eval_spec, "Also print the Bayes accuracy on the same set");

  ExperimentArgs ex;
  double floor_value = 0.0;
  auto* experiment = app.add_subcommand("experiment", "Run an (estimator, n, seed) grid");
  experiment->add_option("--config", ex.config, "Experiment JSON");
  experiment->add_option("--set", ex.overrides, "Override a config key, e.g. train.epochs=20");
  experiment->add_option("--spec", ex.spec);
  experiment->add_option("--conditioning", ex.conditioning);
  experiment->add_option("--noise", ex.noise)->check(CLI::IsMember({"clean", "onehot"}));
  experiment->add_option("--estimator", ex.estimators, "Comma-separated estimator list");
  experiment->add_option("--n", ex.n, "Comma-separated n-ladder");
  experiment->add_option("--seeds", ex.seeds, "e.g. 1-10 or 1,2,5");
  experiment->add_option("--out", ex.out, "Run directory");
  experiment->add_option("--jobs", ex.jobs);
  experiment->add_flag("--analytic-ratio", ex.analytic_ratio);
  experiment->add_flag("--analytic-confidence", ex.analytic_confidence);
  experiment->add_flag("--match-n", ex.match_n, "Supervised reference trains on n joint samples");
  auto* floor_opt = experiment->add_option("--floor", floor_value);

  std::string run_dir;
  auto* report = app.add_subcommand("report", "Aggregate a run directory");
  report->add_option("run_dir", run_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*generate) return cmd_generate(gen);
    if (*fit_ratio_cmd) return cmd_fit_ratio(fit);
    if (*train_cmd) return cmd_train(tr);
    if (*evaluate) return cmd_evaluate(eval_model, eval_test, eval_spec);
    if (*experiment) {
      if (floor_opt->count() > 0) ex.floor = floor_value;
      return cmd_experiment(ex);
    }
    if (*report) return cmd_report(run_dir);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
