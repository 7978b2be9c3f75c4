#include "conflearn/experiment.hpp"

#include "conflearn/io.hpp"
#include "conflearn/rng.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace conflearn {

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  return std::string(s);
}

std::uint64_t parse_u64(const std::string& token) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size()) {
    throw ArgumentError("cannot parse integer '" + token + "'");
  }
  return v;
}

std::uint64_t conditioning_tag(const ClassSet& set) {
  std::uint64_t tag = 0;
  for (ClassIndex y : set.members) tag |= std::uint64_t{1} << static_cast<unsigned>(y % 64);
  return tag;
}

}  // namespace

void ExperimentConfig::validate() const {
  const GaussianMixture mix(spec);
  if (estimators.empty()) throw ConfigError("estimator list is empty");
  if (n_ladder.empty()) throw ConfigError("n-ladder is empty");
  if (seeds.empty()) throw ConfigError("seed list is empty");
  if (conditionings.empty()) throw ConfigError("conditioning list is empty");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  if (!(val_fraction > 0.0)) throw ConfigError("val_fraction must be positive");
  if (n_test < 1) throw ConfigError("n_test must be positive");
  for (Index n : n_ladder) {
    if (n < 1) throw ConfigError("every n must be positive");
  }
  train.validate();
  for (const auto& cond : conditionings) {
    for (EstimatorKind kind : estimators) {
      Estimator{kind, cond, floor}.validate(mix.num_classes());
    }
  }
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> out;
  std::stringstream in{std::string(text)};
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    const auto dash = item.find('-');
    if (dash != std::string::npos && dash > 0) {
      const std::uint64_t lo = parse_u64(trim(item.substr(0, dash)));
      const std::uint64_t hi = parse_u64(trim(item.substr(dash + 1)));
      if (hi < lo) throw ArgumentError("empty seed range '" + item + "'");
      for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
    } else {
      out.push_back(parse_u64(item));
    }
  }
  if (out.empty()) throw ArgumentError("empty seed list");
  return out;
}

std::vector<Index> parse_size_list(std::string_view text) {
  std::vector<Index> out;
  std::stringstream in{std::string(text)};
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(static_cast<Index>(parse_u64(trim(item))));
  if (out.empty()) throw ArgumentError("empty size list");
  return out;
}

void apply_override(nlohmann::json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override must look like key=value, got '" + std::string(assignment) + "'");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (!node->is_object()) *node = nlohmann::json::object();
    start = dot + 1;
  }
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc,
                                             const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  try {
    if (doc.contains("spec")) {
      const auto& s = doc.at("spec");
      if (s.is_string()) {
        std::filesystem::path p = s.get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        c.spec = load_spec(p.string());
      } else {
        c.spec = spec_from_json(s);
      }
    }
    auto parse_cond = [](const nlohmann::json& v) {
      return v.is_number_integer() ? ClassSet::parse(std::to_string(v.get<int>()))
                                   : ClassSet::parse(v.get<std::string>());
    };
    if (doc.contains("conditionings")) {
      c.conditionings.clear();
      for (const auto& v : doc.at("conditionings")) c.conditionings.push_back(parse_cond(v));
    } else if (doc.contains("conditioning")) {
      c.conditionings = {parse_cond(doc.at("conditioning"))};
    }
    if (doc.contains("noise")) c.noise = parse_noise(doc.at("noise").get<std::string>());
    if (doc.contains("estimators")) {
      c.estimators.clear();
      const auto& e = doc.at("estimators");
      if (e.is_string()) {
        std::stringstream in(e.get<std::string>());
        std::string item;
        while (std::getline(in, item, ',')) c.estimators.push_back(parse_estimator_kind(trim(item)));
      } else {
        for (const auto& v : e) c.estimators.push_back(parse_estimator_kind(v.get<std::string>()));
      }
    }
    if (doc.contains("n")) {
      const auto& v = doc.at("n");
      if (v.is_string()) c.n_ladder = parse_size_list(v.get<std::string>());
      else if (v.is_number()) c.n_ladder = {v.get<Index>()};
      else c.n_ladder = v.get<std::vector<Index>>();
    }
    if (doc.contains("seeds")) {
      const auto& v = doc.at("seeds");
      if (v.is_string()) c.seeds = parse_seed_list(v.get<std::string>());
      else if (v.is_number()) c.seeds = {v.get<std::uint64_t>()};
      else c.seeds = v.get<std::vector<std::uint64_t>>();
    }
    if (doc.contains("out")) c.out_dir = doc.at("out").get<std::string>();
    if (doc.contains("jobs")) c.jobs = doc.at("jobs").get<int>();
    if (doc.contains("floor")) c.floor = doc.at("floor").get<double>();
    if (doc.contains("val_fraction")) c.val_fraction = doc.at("val_fraction").get<double>();
    if (doc.contains("n_test")) c.n_test = doc.at("n_test").get<Index>();
    if (doc.contains("n_unlabeled")) c.n_unlabeled = doc.at("n_unlabeled").get<Index>();
    if (doc.contains("analytic_ratio")) c.analytic_ratio = doc.at("analytic_ratio").get<bool>();
    if (doc.contains("analytic_confidence")) c.analytic_confidence = doc.at("analytic_confidence").get<bool>();
    if (doc.contains("match_n")) c.match_n = doc.at("match_n").get<bool>();
    if (doc.contains("train")) {
      const auto& t = doc.at("train");
      if (t.contains("epochs")) c.train.epochs = t.at("epochs").get<int>();
      if (t.contains("batch_size")) c.train.batch_size = t.at("batch_size").get<Index>();
      if (t.contains("learning_rate")) c.train.learning_rate = t.at("learning_rate").get<double>();
      if (t.contains("weight_decay")) c.train.weight_decay = t.at("weight_decay").get<double>();
      if (t.contains("hidden")) c.train.hidden = t.at("hidden").get<std::vector<Index>>();
    }
    if (doc.contains("ratio")) {
      const auto& r = doc.at("ratio");
      if (r.contains("max_centers")) c.ratio.max_centers = r.at("max_centers").get<Index>();
      if (r.contains("bandwidth")) c.ratio.bandwidth = r.at("bandwidth").get<double>();
      if (r.contains("ridge")) c.ratio.ridge = r.at("ridge").get<double>();
      if (r.contains("cross_validate")) c.ratio.cross_validate = r.at("cross_validate").get<bool>();
      if (r.contains("ridge_grid")) c.ratio.ridge_grid = r.at("ridge_grid").get<std::vector<double>>();
      if (r.contains("bandwidth_scales")) {
        c.ratio.bandwidth_scales = r.at("bandwidth_scales").get<std::vector<double>>();
      }
      if (r.contains("folds")) c.ratio.folds = r.at("folds").get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::json doc;
  doc["spec"] = spec_to_json(c.spec);
  doc["conditionings"] = nlohmann::json::array();
  for (const auto& cond : c.conditionings) doc["conditionings"].push_back(cond.to_string());
  doc["noise"] = to_string(c.noise);
  doc["estimators"] = nlohmann::json::array();
  for (auto k : c.estimators) doc["estimators"].push_back(to_string(k));
  doc["n"] = c.n_ladder;
  doc["seeds"] = c.seeds;
  doc["floor"] = c.floor;
  doc["val_fraction"] = c.val_fraction;
  doc["n_test"] = c.n_test;
  doc["n_unlabeled"] = c.n_unlabeled;
  doc["analytic_ratio"] = c.analytic_ratio;
  doc["analytic_confidence"] = c.analytic_confidence;
  doc["match_n"] = c.match_n;
  doc["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"learning_rate", c.train.learning_rate},
                  {"weight_decay", c.train.weight_decay},
                  {"hidden", c.train.hidden}};
  doc["ratio"] = {{"max_centers", c.ratio.max_centers},
                  {"bandwidth", c.ratio.bandwidth},
                  {"ridge", c.ratio.ridge},
                  {"cross_validate", c.ratio.cross_validate},
                  {"ridge_grid", c.ratio.ridge_grid},
                  {"bandwidth_scales", c.ratio.bandwidth_scales},
                  {"folds", c.ratio.folds}};
  return doc;
}

std::string TrialResult::file_stem() const {
  std::string cond = conditioning.to_string();
  std::replace(cond.begin(), cond.end(), ',', '-');
  return to_string(estimator) + "__c" + cond + "__" + to_string(noise) + "__n" + std::to_string(n) +
         "__s" + std::to_string(seed);
}

nlohmann::json trial_to_json(const TrialResult& t) {
  nlohmann::json doc;
  doc["estimator"] = to_string(t.estimator);
  doc["conditioning"] = t.conditioning.to_string();
  doc["noise"] = to_string(t.noise);
  doc["n"] = t.n;
  doc["seed"] = t.seed;
  doc["failed"] = t.failed;
  doc["error"] = t.error;
  doc["accuracy"] = t.accuracy;
  doc["bayes_accuracy"] = t.bayes_accuracy;
  doc["excess_vs_bayes"] = t.excess_vs_bayes();
  doc["posterior_excess"] = t.posterior_excess;
  doc["report"] = t.report ? report_to_json(*t.report) : nlohmann::json(nullptr);
  return doc;
}

TrialResult trial_from_json(const nlohmann::json& doc) {
  TrialResult t;
  t.estimator = parse_estimator_kind(doc.at("estimator").get<std::string>());
  t.conditioning = ClassSet::parse(doc.at("conditioning").get<std::string>());
  t.noise = parse_noise(doc.at("noise").get<std::string>());
  t.n = doc.at("n").get<Index>();
  t.seed = doc.at("seed").get<std::uint64_t>();
  t.failed = doc.at("failed").get<bool>();
  t.error = doc.at("error").get<std::string>();
  t.accuracy = doc.at("accuracy").get<double>();
  t.bayes_accuracy = doc.at("bayes_accuracy").get<double>();
  t.posterior_excess = doc.value("posterior_excess", 0.0);
  if (!doc.at("report").is_null()) t.report = report_from_json(doc.at("report"));
  return t;
}

TrialData make_trial_data(const GaussianMixture& mix, const ExperimentConfig& config,
                          const ClassSet& conditioning, Index n, std::uint64_t seed) {
  const std::uint64_t base =
      derive_seed(derive_seed(seed, static_cast<std::uint64_t>(n)), conditioning_tag(conditioning));
  const Index n_val = std::max<Index>(1, static_cast<Index>(std::lround(config.val_fraction * static_cast<double>(n))));
  const Index n_u = config.n_unlabeled > 0 ? config.n_unlabeled : n;
  const Index n_sup =
      config.match_n ? n
                     : static_cast<Index>(std::lround(static_cast<double>(n) / mix.prior_mass(conditioning)));
  const Index n_sup_val = std::max<Index>(
      1, static_cast<Index>(std::lround(config.val_fraction * static_cast<double>(n_sup))));

  TrialData data;
  data.train = build_confidence_dataset(mix, conditioning, n, config.noise, derive_seed(base, 1));
  data.val = build_confidence_dataset(mix, conditioning, n_val, config.noise, derive_seed(base, 2));
  data.unlabeled = sample_joint(mix, n_u, derive_seed(base, 3)).instances;
  data.test = sample_joint(mix, config.n_test, derive_seed(base, 4));
  data.supervised_train = sample_joint(mix, n_sup, derive_seed(base, 5));
  data.supervised_val = sample_joint(mix, n_sup_val, derive_seed(base, 6));
  data.bayes_accuracy = bayes_accuracy_on(mix, data.test);
  data.test_posteriors = true_posterior_rows(mix, data.test.instances);
  return data;
}

TrialResult run_trial(const GaussianMixture& mix, const ExperimentConfig& config, const TrialData& data,
                      EstimatorKind kind, const ClassSet& conditioning, Index n, std::uint64_t seed) {
  TrialResult result;
  result.estimator = kind;
  result.conditioning = conditioning;
  result.noise = config.noise;
  result.n = n;
  result.seed = seed;
  result.bayes_accuracy = data.bayes_accuracy;

  try {
    const Estimator estimator{kind, conditioning, config.floor};
    estimator.validate(mix.num_classes());
    TrainConfig tc = config.train;
    tc.estimator = estimator;
    tc.seed = derive_seed(seed, 9);
    const std::uint64_t init_seed = derive_seed(seed, 8);

    WeightedData train_set, val_set;
    if (kind == EstimatorKind::Supervised) {
      const int k = mix.num_classes();
      train_set = {data.supervised_train.instances, one_hot_rows(data.supervised_train.labels, k)};
      val_set = {data.supervised_val.instances, one_hot_rows(data.supervised_val.labels, k)};
    } else {
      std::optional<RatioFunction> ratio;
      if (uses_ratio(kind)) {
        if (config.analytic_ratio) {
          ratio = [&mix, &conditioning](const Vector& x) { return true_density_ratio(mix, conditioning, x); };
        } else {
          auto model = std::make_shared<RatioModel>(
              fit_ratio(data.train.instances, data.unlabeled, config.ratio, derive_seed(seed, 7)));
          ratio = [model](const Vector& x) { return eval_ratio(*model, x); };
        }
      }
      train_set = {data.train.instances, precompute_weights(data.train, estimator, ratio)};
      val_set = {data.val.instances, precompute_weights(data.val, estimator, ratio)};
    }
    tc.batch_size = std::min(tc.batch_size, train_set.size());
    TrainResult trained = train(init_seed, train_set, val_set, tc);
    result.accuracy = evaluate_accuracy(trained.model, data.test.instances, data.test.labels);
    trained.report.test_accuracy = result.accuracy;
    const auto predicted = predict_batch(trained.model, data.test.instances);
    double lost = 0.0;
    for (Index i = 0; i < data.test_posteriors.rows(); ++i) {
      lost += data.test_posteriors.row(i).maxCoeff() - data.test_posteriors(i, predicted[static_cast<std::size_t>(i)]);
    }
    result.posterior_excess = lost / static_cast<double>(data.test_posteriors.rows());
    result.report = std::move(trained.report);
  } catch (const DivergenceError& e) {
    result.failed = true;
    result.error = std::string("diverged: ") + e.what();
  } catch (const NumericError& e) {
    result.failed = true;
    result.error = std::string("numeric: ") + e.what();
  }
  return result;
}

double paired_t_test_p_value(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ArgumentError("paired test needs equal-length samples");
  const std::size_t m = a.size();
  if (m < 2) return 1.0;
  std::vector<double> d(m);
  for (std::size_t i = 0; i < m; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(m);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(m - 1));
  if (sd == 0.0) return mean == 0.0 ? 1.0 : 0.0;
  const double t = mean / (sd / std::sqrt(static_cast<double>(m)));
  const boost::math::students_t dist(static_cast<double>(m - 1));
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

ResultTable aggregate(const std::vector<TrialResult>& trials) {
  struct Group {
    ResultRow row;
    std::map<std::uint64_t, double> by_seed;
  };
  std::vector<Group> groups;
  auto same_key = [](const ResultRow& r, const TrialResult& t) {
    return r.estimator == t.estimator && r.conditioning == t.conditioning && r.noise == t.noise && r.n == t.n;
  };
  for (const auto& t : trials) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) { return same_key(g.row, t); });
    if (it == groups.end()) {
      Group g;
      g.row.estimator = t.estimator;
      g.row.conditioning = t.conditioning;
      g.row.noise = t.noise;
      g.row.n = t.n;
      groups.push_back(std::move(g));
      it = std::prev(groups.end());
    }
    if (t.failed) {
      ++it->row.failures;
    } else {
      it->by_seed[t.seed] = t.accuracy;
      it->row.mean_bayes += t.bayes_accuracy;
    }
  }

  for (auto& g : groups) {
    const auto m = static_cast<int>(g.by_seed.size());
    g.row.seeds = m;
    if (m == 0) continue;
    double sum = 0.0;
    for (const auto& [seed, acc] : g.by_seed) sum += acc;
    g.row.mean_accuracy = sum / m;
    g.row.mean_bayes /= m;
    double ss = 0.0;
    for (const auto& [seed, acc] : g.by_seed) ss += (acc - g.row.mean_accuracy) * (acc - g.row.mean_accuracy);
    g.row.std_accuracy = m > 1 ? std::sqrt(ss / (m - 1)) : 0.0;
  }

  // Significance marking within each (conditioning, noise, n) group; the
  // fully supervised reference never competes.
  for (auto& g : groups) {
    if (g.row.seeds == 0 || g.row.estimator == EstimatorKind::Supervised) continue;
    const Group* best = nullptr;
    for (const auto& other : groups) {
      if (other.row.seeds == 0 || other.row.estimator == EstimatorKind::Supervised) continue;
      if (other.row.conditioning != g.row.conditioning || other.row.noise != g.row.noise || other.row.n != g.row.n) {
        continue;
      }
      if (!best || other.row.mean_accuracy > best->row.mean_accuracy) best = &other;
    }
    if (best == &g) {
      g.row.best_or_equivalent = true;
      continue;
    }
    std::vector<double> a, b;
    for (const auto& [seed, acc] : best->by_seed) {
      const auto found = g.by_seed.find(seed);
      if (found != g.by_seed.end()) {
        a.push_back(acc);
        b.push_back(found->second);
      }
    }
    g.row.best_or_equivalent = a.size() >= 2 ? paired_t_test_p_value(a, b) >= 0.05
                                             : g.row.mean_accuracy == best->row.mean_accuracy;
  }

  ResultTable table;
  for (auto& g : groups) table.rows.push_back(g.row);
  return table;
}

void write_result_csv(const std::filesystem::path& path, const ResultTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "estimator,conditioning,noise,n,seeds,failures,mean_accuracy,std_accuracy,mean_bayes_accuracy,"
         "best_or_equivalent\n";
  for (const auto& r : table.rows) {
    out << to_string(r.estimator) << ",\"" << r.conditioning.to_string() << "\"," << to_string(r.noise) << ','
        << r.n << ',' << r.seeds << ',' << r.failures << ',' << format_double(r.mean_accuracy) << ','
        << format_double(r.std_accuracy) << ',' << format_double(r.mean_bayes) << ','
        << (r.best_or_equivalent ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_plot_data_csv(const std::filesystem::path& path, const std::vector<TrialResult>& trials) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "estimator,conditioning,noise,n,seed,accuracy,excess_vs_bayes,posterior_excess\n";
  for (const auto& t : trials) {
    if (t.failed) continue;
    out << to_string(t.estimator) << ",\"" << t.conditioning.to_string() << "\"," << to_string(t.noise) << ','
        << t.n << ',' << t.seed << ',' << format_double(t.accuracy) << ',' << format_double(t.excess_vs_bayes())
        << ',' << format_double(t.posterior_excess) << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void print_result_table(std::ostream& out, const ResultTable& table) {
  out << std::left << std::setw(14) << "estimator" << std::setw(8) << "cond" << std::setw(8) << "noise"
      << std::right << std::setw(8) << "n" << std::setw(7) << "seeds" << std::setw(6) << "fail" << std::setw(10)
      << "mean" << std::setw(10) << "std" << std::setw(10) << "bayes" << "  best\n";
  const auto flags = out.flags();
  for (const auto& r : table.rows) {
    out << std::left << std::setw(14) << to_string(r.estimator) << std::setw(8) << r.conditioning.to_string()
        << std::setw(8) << to_string(r.noise) << std::right << std::setw(8) << r.n << std::setw(7) << r.seeds
        << std::setw(6) << r.failures << std::fixed << std::setprecision(4) << std::setw(10) << r.mean_accuracy
        << std::setw(10) << r.std_accuracy << std::setw(10) << r.mean_bayes << "  "
        << (r.best_or_equivalent ? "*" : "") << '\n';
    out.flags(flags);
  }
}

ExperimentOutcome run_experiment(const ExperimentConfig& config, std::ostream* log) {
  config.validate();
  const GaussianMixture mix(config.spec);

  std::error_code ec;
  std::filesystem::create_directories(config.out_dir / "trials", ec);
  if (ec) throw IoError("cannot create '" + (config.out_dir / "trials").string() + "': " + ec.message());
  write_json_file(config.out_dir / "config.json", experiment_config_to_json(config));

  // One job per (conditioning, n, seed); all estimators share its data.
  struct Job {
    ClassSet conditioning;
    Index n;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& cond : config.conditionings) {
    for (Index n : config.n_ladder) {
      for (std::uint64_t seed : config.seeds) jobs.push_back({cond, n, seed});
    }
  }
  const std::size_t per_job = config.estimators.size();
  std::vector<TrialResult> results(jobs.size() * per_job);
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::exception_ptr fatal;

  auto worker = [&]() {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        const Job& job = jobs[j];
        const TrialData data = make_trial_data(mix, config, job.conditioning, job.n, job.seed);
        for (std::size_t e = 0; e < per_job; ++e) {
          TrialResult r = run_trial(mix, config, data, config.estimators[e], job.conditioning, job.n, job.seed);
          write_json_file(config.out_dir / "trials" / (r.file_stem() + ".json"), trial_to_json(r));
          if (log) {
            const std::lock_guard lock(log_mutex);
            *log << r.file_stem() << (r.failed ? " FAILED " + r.error : " acc " + format_double(r.accuracy))
                 << '\n';
          }
          results[j * per_job + e] = std::move(r);
        }
      } catch (...) {
        const std::lock_guard lock(log_mutex);
        if (!fatal) fatal = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(config.jobs, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (fatal) std::rethrow_exception(fatal);

  // Canonical order: estimator, conditioning, n, seed.
  std::vector<TrialResult> ordered;
  ordered.reserve(results.size());
  for (std::size_t e = 0; e < per_job; ++e) {
    for (std::size_t j = 0; j < jobs.size(); ++j) ordered.push_back(results[j * per_job + e]);
  }

  ExperimentOutcome outcome;
  outcome.trials = std::move(ordered);
  outcome.table = aggregate(outcome.trials);
  outcome.all_failed = std::all_of(outcome.trials.begin(), outcome.trials.end(),
                                   [](const TrialResult& t) { return t.failed; });
  write_result_csv(config.out_dir / "results.csv", outcome.table);
  return outcome;
}

ReportOutcome report_run(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& warn) {
  const auto trial_dir = run_dir / "trials";
  if (!std::filesystem::is_directory(trial_dir)) {
    throw IoError("'" + run_dir.string() + "' has no trials/ directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(trial_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  ReportOutcome outcome;
  for (const auto& f : files) {
    try {
      outcome.trials.push_back(trial_from_json(read_json_file(f)));
    } catch (const std::exception& e) {
      warn << "warning: skipping " << f.filename().string() << ": " << e.what() << '\n';
      outcome.skipped.push_back(f.filename().string());
    }
  }
  if (outcome.trials.empty()) throw IoError("run directory '" + run_dir.string() + "' has no readable trials");

  std::stable_sort(outcome.trials.begin(), outcome.trials.end(), [](const TrialResult& a, const TrialResult& b) {
    return std::tie(a.estimator, a.conditioning.members, a.n, a.seed) <
           std::tie(b.estimator, b.conditioning.members, b.n, b.seed);
  });
  outcome.table = aggregate(outcome.trials);
  print_result_table(out, outcome.table);
  write_result_csv(run_dir / "results.csv", outcome.table);
  write_plot_data_csv(run_dir / "plot_data.csv", outcome.trials);
  return outcome;
}

}  // namespace conflearn
