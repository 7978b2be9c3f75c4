#include "conflearn/density_ratio.hpp"
#include "conflearn/gaussian_mixture.hpp"
#include "conflearn/io.hpp"
#include "conflearn/risk.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "doctest.h"

using namespace conflearn;

namespace {

GaussianMixtureSpec one_d(double m0, double m1, double p0 = 0.5) {
  GaussianMixtureSpec s;
  s.priors = Vector{{p0, 1.0 - p0}};
  s.means = {Vector{{m0}}, Vector{{m1}}};
  s.covariances = {Matrix::Identity(1, 1), Matrix::Identity(1, 1)};
  return s;
}

double normal_pdf(double x, double mu) {
  return std::exp(-0.5 * (x - mu) * (x - mu)) / std::sqrt(2.0 * std::numbers::pi);
}

// Scaled two-sample energy statistic n m / (n + m) * (2 E|X-Y| - E|X-X'| - E|Y-Y'|).
double energy_statistic(const Matrix& a, const Matrix& b) {
  auto mean_dist = [](const Matrix& p, const Matrix& q) {
    double s = 0.0;
    for (Index i = 0; i < p.rows(); ++i) {
      for (Index j = 0; j < q.rows(); ++j) s += (p.row(i) - q.row(j)).norm();
    }
    return s / static_cast<double>(p.rows() * q.rows());
  };
  const double n = static_cast<double>(a.rows()), m = static_cast<double>(b.rows());
  return n * m / (n + m) * (2.0 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b));
}

}  // namespace

TEST_CASE("spec validation") {
  GaussianMixtureSpec s = default_benchmark_spec();
  CHECK_NOTHROW(GaussianMixture{s});
  s.priors(0) += 1e-9;
  CHECK_THROWS_AS(GaussianMixture{s}, ArgumentError);
  s = default_benchmark_spec();
  s.covariances[1](0, 1) = 0.3;
  CHECK_THROWS_AS(GaussianMixture{s}, ArgumentError);
  s.covariances[1](1, 0) = 0.3;
  CHECK_NOTHROW(GaussianMixture{s});
  s.covariances[1] = Matrix{{1.0, 2.0}, {2.0, 1.0}};
  CHECK_THROWS_AS(GaussianMixture{s}, ArgumentError);
}

TEST_CASE("spec json with diagonal covariances") {
  const auto doc = nlohmann::json::parse(R"({"priors":[0.25,0.75],"means":[[0,0],[1,2]],
    "covariances":[[1,2],[[2,0.5],[0.5,1]]]})");
  const GaussianMixtureSpec s = spec_from_json(doc);
  CHECK(s.covariances[0] == Matrix{{1.0, 0.0}, {0.0, 2.0}});
  CHECK(s.covariances[1](0, 1) == 0.5);
  const GaussianMixtureSpec back = spec_from_json(spec_to_json(s));
  CHECK(back.priors == s.priors);
  CHECK(back.covariances[1] == s.covariances[1]);
  CHECK_THROWS_AS(spec_from_json(nlohmann::json::parse(R"({"priors":[1]})")), ArgumentError);
}

TEST_CASE("sample_joint rejects n = 0 and is seeded") {
  const GaussianMixture mix(default_benchmark_spec());
  CHECK_THROWS_AS(sample_joint(mix, 0, 1), ArgumentError);
  const auto a = sample_joint(mix, 50, 9);
  const auto b = sample_joint(mix, 50, 9);
  CHECK(a.instances == b.instances);
  CHECK(a.labels == b.labels);
}

TEST_CASE("single-class mixture") {
  GaussianMixtureSpec s;
  s.priors = Vector{{1.0}};
  s.means = {Vector{{2.0, -1.0}}};
  s.covariances = {Matrix::Identity(2, 2)};
  const GaussianMixture mix(s);
  const auto sample = sample_joint(mix, 200, 3);
  CHECK(std::all_of(sample.labels.begin(), sample.labels.end(), [](int y) { return y == 0; }));
  CHECK(true_density_ratio(mix, ClassSet::single(0), Vector{{0.3, 9.0}}) == 1.0);
}

TEST_CASE("label frequencies follow the priors") {
  GaussianMixtureSpec s = one_d(0.0, 1.0);
  s.priors = Vector{{0.2, 0.3, 0.5}};
  s.means.push_back(Vector{{2.0}});
  s.covariances.push_back(Matrix::Identity(1, 1));
  const GaussianMixture mix(s);
  const auto sample = sample_joint(mix, 100000, 4);
  for (int y = 0; y < 3; ++y) {
    const double freq = static_cast<double>(std::count(sample.labels.begin(), sample.labels.end(), y)) / 1e5;
    CHECK(std::abs(freq - s.priors(y)) <= 0.01);
  }
}

TEST_CASE("class-conditional sample mean is within 3 standard errors") {
  const GaussianMixture mix(default_benchmark_spec());
  const Index n = 20000;
  for (int y = 0; y < 3; ++y) {
    const Matrix x = sample_class_conditional(mix, ClassSet::single(y), n, 10 + static_cast<unsigned>(y));
    const Vector mean = x.colwise().mean().transpose();
    const Vector& mu = mix.spec().means[static_cast<std::size_t>(y)];
    CHECK(((mean - mu).cwiseAbs().array() <= 3.0 / std::sqrt(static_cast<double>(n))).all());
  }
  CHECK(sample_class_conditional(mix, ClassSet::single(1), 1, 2).rows() == 1);
  CHECK_THROWS_AS(sample_class_conditional(mix, ClassSet::single(3), 5, 2), ArgumentError);
}

TEST_CASE("conditioning on all classes matches the joint marginal") {
  const GaussianMixture mix(default_benchmark_spec());
  const Index n = 10000;
  const Matrix all = sample_class_conditional(mix, ClassSet::all(3), n, 100);
  const Matrix joint = sample_joint(mix, n, 200).instances;
  const double observed = energy_statistic(all, joint);

  // Null reference: independent joint-vs-joint pairs at a smaller size; the
  // scaled statistic's null law is approximately size-free. The max of 19
  // replicates is a 5% critical value.
  double critical = 0.0;
  for (std::uint64_t r = 0; r < 19; ++r) {
    critical = std::max(critical, energy_statistic(sample_joint(mix, 1500, 1000 + r).instances,
                                                   sample_joint(mix, 1500, 2000 + r).instances));
  }
  CAPTURE(observed);
  CAPTURE(critical);
  CHECK(observed < critical);
}

TEST_CASE("posterior symmetry, uninformative likelihood and a direct oracle") {
  const GaussianMixture sym(one_d(-1.0, 1.0));
  const Vector mid = true_posterior(sym, Vector{{0.0}});
  CHECK(mid(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mid(1) == doctest::Approx(0.5).epsilon(1e-15));

  GaussianMixtureSpec flat = default_benchmark_spec();
  for (auto& m : flat.means) m.setZero();
  const GaussianMixture same(flat);
  const Vector p = true_posterior(same, Vector{{3.0, -2.0}});
  CHECK((p - flat.priors).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(true_density_ratio(same, ClassSet::single(2), Vector{{3.0, -2.0}}) == doctest::Approx(1.0).epsilon(1e-15));

  const GaussianMixture mix(one_d(0.0, 2.0));
  const long double x = 1.5L;
  const long double a = std::exp(-0.5L * x * x), b = std::exp(-0.5L * (x - 2) * (x - 2));
  const Vector post = true_posterior(mix, Vector{{1.5}});
  CHECK(post(0) == doctest::Approx(static_cast<double>(a / (a + b))).epsilon(1e-14));
  CHECK(post(1) == doctest::Approx(static_cast<double>(b / (a + b))).epsilon(1e-14));
}

TEST_CASE("posterior rows sum to one and the ratio identity holds") {
  const GaussianMixture mix(default_benchmark_spec());
  const auto sample = sample_joint(mix, 500, 8);
  const Matrix post = true_posterior_rows(mix, sample.instances);
  for (Index i = 0; i < post.rows(); ++i) {
    CHECK(std::abs(post.row(i).sum() - 1.0) <= 1e-12);
    CHECK((post.row(i).array() > 0.0).all());
    const Vector x = sample.instances.row(i).transpose();
    for (const ClassSet& set : {ClassSet::single(0), ClassSet::single(2), ClassSet::parse("2,3")}) {
      CHECK(std::abs(true_density_ratio(mix, set, x) * mass(post.row(i).transpose(), set) - mix.prior_mass(set)) <=
            1e-10);
    }
  }
}

TEST_CASE("density ratio equals the mixture over class density quotient") {
  const GaussianMixture mix(one_d(0.0, 2.0, 0.4));
  const double x = 0.0;
  const double quotient = (0.4 * normal_pdf(x, 0.0) + 0.6 * normal_pdf(x, 2.0)) / normal_pdf(x, 0.0);
  CHECK(true_density_ratio(mix, ClassSet::single(0), Vector{{x}}) == doctest::Approx(quotient).epsilon(1e-14));
}

TEST_CASE("one-hot corruption") {
  CHECK(one_hot_corrupt(Vector{{0.2, 0.5, 0.3}}) == Vector{{0.0, 1.0, 0.0}});
  CHECK(one_hot_corrupt(Vector{{0.0, 0.0, 1.0}}) == Vector{{0.0, 0.0, 1.0}});
  CHECK(one_hot_corrupt(Vector{{0.4, 0.4, 0.2}}) == Vector{{1.0, 0.0, 0.0}});
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    const Vector r = testsupport::random_simplex(4, rng);
    const Vector c = one_hot_corrupt(r);
    CHECK(argmax_lowest(c) == argmax_lowest(r));
    CHECK(margin_delta(c) == 1.0);
  }
}

TEST_CASE("bayes accuracy sanity") {
  GaussianMixtureSpec flat = default_benchmark_spec();
  flat.priors = Vector::Constant(3, 1.0 / 3.0);
  for (auto& m : flat.means) m.setZero();
  const auto chance = bayes_accuracy(GaussianMixture(flat), 30000, 3);
  CHECK(std::abs(chance.accuracy - 1.0 / 3.0) <= 3.0 * chance.std_error);

  const auto separated = bayes_accuracy(GaussianMixture(one_d(0.0, 10.0)), 20000, 4);
  CHECK(separated.accuracy >= 0.999);
  CHECK_THROWS_AS(bayes_accuracy(GaussianMixture(one_d(0.0, 1.0)), 0, 1), ArgumentError);
}

TEST_CASE("bayes accuracy of two unit Gaussians two apart is Phi(1)") {
  const auto est = bayes_accuracy(GaussianMixture(one_d(0.0, 2.0)), 1000000, 5);
  const double phi1 = 0.5 * std::erfc(-1.0 / std::sqrt(2.0));
  CHECK(phi1 == doctest::Approx(0.8413).epsilon(1e-4));
  CHECK(std::abs(est.accuracy - phi1) <= 3.0 * est.std_error);
}

TEST_CASE("confidence datasets") {
  const GaussianMixture mix(default_benchmark_spec());
  const auto small = build_confidence_dataset(mix, ClassSet::single(2), 3, Noise::Clean, 1);
  CHECK(small.size() == 3);
  for (Index i = 0; i < 3; ++i) CHECK(std::abs(small.confidences.row(i).sum() - 1.0) <= 1e-12);

  const auto clean = build_confidence_dataset(mix, ClassSet::single(2), 300, Noise::Clean, 2);
  CHECK((clean.confidences - true_posterior_rows(mix, clean.instances)).cwiseAbs().maxCoeff() <= 1e-12);

  const auto noisy = build_confidence_dataset(mix, ClassSet::single(2), 300, Noise::OneHot, 2);
  CHECK(noisy.instances == clean.instances);
  for (Index i = 0; i < noisy.size(); ++i) {
    CHECK((noisy.confidences.row(i).array() != 0.0).count() == 1);
    CHECK(noisy.confidences.row(i).maxCoeff() == 1.0);
  }
}

TEST_CASE("importance weighting identity by quadrature") {
  // 1-D, K = 2, y_s = class 1. Compare
  //   pi_s * int p(x|y_s) sum_y (r_y / r_s) l(g(x), y) dx
  // with int sum_y p(x, y) l(g(x), y) dx on a fine trapezoid grid.
  const GaussianMixture mix(one_d(0.0, 1.5, 0.45));
  const ClassSet cond = ClassSet::single(0);
  const Mlp model = make_mlp({1, 8, 2}, 21);
  const int steps = 40000;
  const double lo = -12.0, hi = 13.5, h = (hi - lo) / steps;
  double weak = 0.0, full = 0.0;
  for (int s = 0; s <= steps; ++s) {
    const double x = lo + h * s;
    const double trap = (s == 0 || s == steps) ? 0.5 : 1.0;
    const Vector xv{{x}};
    const Vector logits = forward(model, xv);
    const Vector r = true_posterior(mix, xv);
    const Vector w = sc_conf_weights(r, 0, 1e-300);
    const double p0 = normal_pdf(x, 0.0), p1 = normal_pdf(x, 1.5);
    double lw = 0.0;
    for (int y = 0; y < 2; ++y) lw += w(y) * softmax_ce(logits, y);
    weak += trap * p0 * lw;
    full += trap * (0.45 * p0 * softmax_ce(logits, 0) + 0.55 * p1 * softmax_ce(logits, 1));
  }
  weak *= 0.45 * h;
  full *= h;
  CHECK(std::abs(weak - full) <= 1e-6);
}

TEST_CASE("dataset csv round trip") {
  const auto dir = testsupport::scratch_dir("synthetic_csv");
  const GaussianMixture mix(default_benchmark_spec());
  const auto data = build_confidence_dataset(mix, ClassSet::single(2), 40, Noise::Clean, 5);
  write_confidence_csv(dir / "c.csv", data.instances, data.confidences);
  const auto back = read_confidence_csv(dir / "c.csv");
  CHECK((back.instances - data.instances).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((back.confidences - data.confidences).cwiseAbs().maxCoeff() <= 1e-12);

  const auto test = sample_joint(mix, 30, 6);
  write_labeled_csv(dir / "t.csv", test.instances, test.labels);
  const auto lt = read_labeled_csv(dir / "t.csv");
  CHECK(lt.instances == test.instances);
  CHECK(lt.labels == test.labels);

  write_unlabeled_csv(dir / "u.csv", test.instances);
  CHECK(read_unlabeled_csv(dir / "u.csv") == test.instances);
}

TEST_CASE("confidence csv ingestion renormalizes small drift and rejects large") {
  const auto dir = testsupport::scratch_dir("synthetic_ingest");
  {
    std::ofstream out(dir / "ok.csv");
    out << "x0,r0,r1\n0.5,0.3000004,0.7\n";
  }
  const auto ok = read_confidence_csv(dir / "ok.csv");
  CHECK(std::abs(ok.confidences.row(0).sum() - 1.0) <= 1e-15);
  {
    std::ofstream out(dir / "bad.csv");
    out << "x0,r0,r1\n0.5,0.4,0.7\n";
  }
  CHECK_THROWS_AS(read_confidence_csv(dir / "bad.csv"), ArgumentError);
  {
    std::ofstream out(dir / "header.csv");
    out << "a,b\n1,2\n";
  }
  CHECK_THROWS_AS(read_confidence_csv(dir / "header.csv"), ArgumentError);
  CHECK_THROWS_AS(read_confidence_csv(dir / "missing.csv"), IoError);
}
