#include "conflearn/density_ratio.hpp"
#include "conflearn/gaussian_mixture.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>

#include "doctest.h"

using namespace conflearn;

namespace {

GaussianMixtureSpec two_component_1d() {
  GaussianMixtureSpec s;
  s.priors = Vector{{0.5, 0.5}};
  s.means = {Vector{{0.0}}, Vector{{3.0}}};
  s.covariances = {Matrix::Identity(1, 1), Matrix::Identity(1, 1)};
  return s;
}

RatioModel small_model() {
  RatioModel m;
  m.centers = Matrix{{0.0, 0.0}, {1.0, -1.0}, {-0.5, 2.0}};
  m.sigma = 0.8;
  m.alpha = Vector{{0.4, 1.1, 0.0}};
  return m;
}

}  // namespace

TEST_CASE("empirical bregman of the constant models") {
  const Matrix sc = testsupport::random_matrix(7, 2, 1);
  const Matrix u = testsupport::random_matrix(5, 2, 2);
  CHECK(empirical_bregman([](const Vector&) { return 0.0; }, sc, u) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(empirical_bregman([](const Vector&) { return 1.0; }, sc, u) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS_AS(empirical_bregman([](const Vector&) { return 1.0; }, Matrix(0, 2), u), ArgumentError);
}

TEST_CASE("empirical bregman matches a term-by-term transcription") {
  const RatioModel model = small_model();
  const Matrix sc = testsupport::random_matrix(5, 2, 3, -2.0, 2.0);
  const Matrix u = testsupport::random_matrix(5, 2, 4, -2.0, 2.0);
  auto phi = [&](const Vector& x) {
    double s = 0.0;
    for (Index b = 0; b < 3; ++b) {
      s += model.alpha(b) * std::exp(-(x - model.centers.row(b).transpose()).squaredNorm() / (2 * 0.64));
    }
    return s;
  };
  // eta(t) = (t-1)^2/2, eta'(t) = t-1
  double sc_term = 0.0;
  for (Index i = 0; i < 5; ++i) {
    const double t = phi(sc.row(i).transpose());
    sc_term += t * (t - 1.0) - 0.5 * (t - 1.0) * (t - 1.0);
  }
  double u_term = 0.0;
  for (Index j = 0; j < 5; ++j) u_term += phi(u.row(j).transpose()) - 1.0;
  CHECK(empirical_bregman(model, sc, u) == doctest::Approx(sc_term / 5.0 - u_term / 5.0).epsilon(1e-13));
}

TEST_CASE("eval_ratio") {
  RatioModel m = small_model();
  m.alpha.setZero();
  CHECK(eval_ratio(m, Vector{{0.3, 0.3}}) == 0.0);

  RatioModel single;
  single.centers = Matrix{{1.5, -0.5}};
  single.sigma = 2.0;
  single.alpha = Vector{{2.0}};
  CHECK(eval_ratio(single, Vector{{1.5, -0.5}}) == 2.0);

  const RatioModel model = small_model();
  const Vector x{{0.2, 0.9}};
  double expected = 0.0;
  for (Index b = 0; b < 3; ++b) {
    const double dx = x(0) - model.centers(b, 0), dy = x(1) - model.centers(b, 1);
    expected += model.alpha(b) * std::exp(-(dx * dx + dy * dy) / (2.0 * 0.8 * 0.8));
  }
  CHECK(eval_ratio(model, x) == doctest::Approx(expected).epsilon(1e-15));
  const Matrix k = kernel_responses(model, Matrix(x.transpose()));
  CHECK((k * model.alpha)(0) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("fit_ratio on identical samples recovers phi = 1") {
  const GaussianMixture mix(default_benchmark_spec());
  const Matrix x = sample_joint(mix, 2000, 5).instances;
  const RatioModel model = fit_ratio(x, x, BregmanConfig{}, 1);
  const Matrix held_out = sample_joint(mix, 2000, 6).instances;
  double mean = 0.0;
  for (Index i = 0; i < held_out.rows(); ++i) mean += eval_ratio(model, held_out.row(i).transpose());
  mean /= static_cast<double>(held_out.rows());
  CHECK(std::abs(mean - 1.0) <= 0.15);
}

TEST_CASE("one center with a large ridge solves the scalar closed form") {
  const Matrix sc = testsupport::random_matrix(30, 1, 7, -1.0, 1.0);
  const Matrix u = testsupport::random_matrix(40, 1, 8, -2.0, 2.0);
  BregmanConfig config;
  config.max_centers = 1;
  config.ridge = 10.0;
  config.bandwidth = 1.3;
  const RatioModel model = fit_ratio(sc, u, config, 3);
  double h11 = 0.0, h1 = 0.0;
  for (Index i = 0; i < sc.rows(); ++i) {
    const double k = std::exp(-std::pow(sc(i, 0) - model.centers(0, 0), 2) / (2 * 1.69));
    h11 += k * k;
  }
  for (Index j = 0; j < u.rows(); ++j) h1 += std::exp(-std::pow(u(j, 0) - model.centers(0, 0), 2) / (2 * 1.69));
  h11 /= static_cast<double>(sc.rows());
  h1 /= static_cast<double>(u.rows());
  CHECK(model.alpha(0) == doctest::Approx(h1 / (h11 + 2 * 10.0)).epsilon(1e-12));
}

TEST_CASE("zero ridge on a singular system asks for a positive ridge") {
  // Duplicate centers make H rank deficient.
  const Matrix sc = Matrix::Constant(5, 1, 0.0);
  const Matrix u = Matrix::Constant(4, 1, 0.0);
  BregmanConfig config;
  config.ridge = 0.0;
  config.bandwidth = 1.0;
  CHECK_THROWS_AS(fit_ratio(sc, u, config, 1), NumericError);
}

TEST_CASE("fitted objective never exceeds the zero or all-ones model") {
  // The bound holds for the ridge-penalized objective that fit_ratio minimizes.
  const GaussianMixture mix(default_benchmark_spec());
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Matrix sc = sample_class_conditional(mix, ClassSet::single(2), 300, seed);
    const Matrix u = sample_joint(mix, 300, seed + 100).instances;
    for (double ridge : {0.0001, 0.01, 1.0, 100.0}) {
      BregmanConfig config;
      config.ridge = ridge;
      RatioModel model = fit_ratio(sc, u, config, seed);
      CHECK((model.alpha.array() >= 0.0).all());
      const double fitted = empirical_bregman(model, sc, u) + ridge * model.alpha.squaredNorm();
      CHECK(fitted <= 0.5 + 1e-12);
      RatioModel ones = model;
      ones.alpha.setOnes();
      CHECK(fitted <= empirical_bregman(ones, sc, u) + ridge * static_cast<double>(ones.alpha.size()) + 1e-12);
    }
  }
}

TEST_CASE("constrained solve satisfies the optimality conditions") {
  const GaussianMixture mix(default_benchmark_spec());
  const Matrix sc = sample_class_conditional(mix, ClassSet::single(0), 400, 3);
  const Matrix u = sample_joint(mix, 400, 4).instances;
  RatioModel shape;
  shape.centers = u.topRows(60);
  shape.sigma = median_pairwise_distance(shape.centers);
  const Matrix k_sc = kernel_responses(shape, sc);
  const Matrix k_u = kernel_responses(shape, u);
  const double ridge = 1e-3;
  const Vector alpha = solve_ratio_coefficients(k_sc, k_u, ridge);
  const Matrix a = k_sc.transpose() * k_sc / 400.0 + 2.0 * ridge * Matrix::Identity(60, 60);
  const Vector grad = a * alpha - k_u.colwise().mean().transpose();
  for (Index j = 0; j < 60; ++j) {
    CHECK(alpha(j) >= 0.0);
    if (alpha(j) > 0.0) {
      CHECK(std::abs(grad(j)) <= 1e-9);
    } else {
      CHECK(grad(j) >= -1e-9);
    }
  }
}

TEST_CASE("true ratio is near-optimal for the empirical objective") {
  const GaussianMixture mix(default_benchmark_spec());
  const ClassSet cond = ClassSet::single(2);
  const Index n = 1000;
  const Matrix sc = sample_class_conditional(mix, cond, n, 11);
  const Matrix u = sample_joint(mix, n, 12).instances;
  const RatioModel model = fit_ratio(sc, u, BregmanConfig{}, 3);
  const double truth =
      empirical_bregman([&](const Vector& x) { return true_density_ratio(mix, cond, x); }, sc, u);
  CHECK(truth <= empirical_bregman(model, sc, u) + 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("ratio error decreases with n on the 1-D two-component spec") {
  const GaussianMixture mix(two_component_1d());
  const ClassSet cond = ClassSet::single(0);
  auto median_mse = [&](Index n) {
    std::vector<double> mses;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const Matrix sc = sample_class_conditional(mix, cond, n, derive_seed(seed, 1));
      const Matrix u = sample_joint(mix, n, derive_seed(seed, 2)).instances;
      BregmanConfig config;
      config.cross_validate = true;
      const RatioModel model = fit_ratio(sc, u, config, seed);
      double mse = 0.0;
      for (int g = 0; g <= 100; ++g) {
        const Vector x{{-2.0 + 4.0 * g / 100.0}};
        const double err = eval_ratio(model, x) - true_density_ratio(mix, cond, x);
        mse += err * err;
      }
      mses.push_back(mse / 101.0);
    }
    std::sort(mses.begin(), mses.end());
    return 0.5 * (mses[4] + mses[5]);
  };
  const double a = median_mse(100), b = median_mse(400), c = median_mse(1600);
  CAPTURE(a);
  CAPTURE(b);
  CAPTURE(c);
  CHECK(a > b);
  CHECK(b > c);
}

TEST_CASE("cross-validated bandwidth comes from the scaled grid") {
  const GaussianMixture mix(default_benchmark_spec());
  const Matrix sc = sample_class_conditional(mix, ClassSet::single(2), 200, 1);
  const Matrix u = sample_joint(mix, 200, 2).instances;
  BregmanConfig config;
  config.cross_validate = true;
  const RatioModel a = fit_ratio(sc, u, config, 4);
  const RatioModel b = fit_ratio(sc, u, config, 4);
  CHECK(a.alpha == b.alpha);
  CHECK(a.sigma == b.sigma);
  CHECK((a.alpha.array() >= 0.0).all());
  const double median = median_pairwise_distance(a.centers);
  bool on_grid = false;
  for (double s : config.bandwidth_scales) on_grid = on_grid || a.sigma == s * median;
  CHECK(on_grid);

  // A fixed bandwidth is kept; only the ridge is searched.
  config.bandwidth = 0.7;
  CHECK(fit_ratio(sc, u, config, 4).sigma == 0.7);
}

TEST_CASE("ratio model json round trip") {
  const RatioModel m = small_model();
  const RatioModel back = ratio_from_json(nlohmann::json::parse(ratio_to_json(m).dump()));
  CHECK(back.centers == m.centers);
  CHECK(back.alpha == m.alpha);
  CHECK(back.sigma == m.sigma);
  nlohmann::json bad = ratio_to_json(m);
  bad["alpha"][0] = -1.0;
  CHECK_THROWS_AS(ratio_from_json(bad), ArgumentError);
}

TEST_CASE("median pairwise distance") {
  CHECK(median_pairwise_distance(Matrix{{0.0}, {1.0}, {3.0}}) == 2.0);
  CHECK(median_pairwise_distance(Matrix{{0.0}, {1.0}, {3.0}, {6.0}}) == 3.0);
  CHECK(median_pairwise_distance(Matrix{{2.0}}) == 1.0);
}
