#include "conflearn/density_ratio.hpp"

#include "conflearn/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>

namespace conflearn {

double eval_ratio(const RatioModel& model, const Vector& x) {
  if (x.size() != model.centers.cols()) throw ShapeError("eval_ratio: dimension mismatch");
  const double scale = -1.0 / (2.0 * model.sigma * model.sigma);
  double total = 0.0;
  for (Index b = 0; b < model.num_centers(); ++b) {
    total += model.alpha(b) * std::exp(scale * (model.centers.row(b).transpose() - x).squaredNorm());
  }
  return std::max(total, 0.0);
}

Matrix kernel_responses(const RatioModel& model, const Matrix& points) {
  if (points.cols() != model.centers.cols()) throw ShapeError("kernel_responses: dimension mismatch");
  const double scale = -1.0 / (2.0 * model.sigma * model.sigma);
  // |x - c|^2 = |x|^2 + |c|^2 - 2 x.c
  Matrix dist2 = (-2.0 * points * model.centers.transpose());
  dist2.colwise() += points.rowwise().squaredNorm();
  dist2.rowwise() += model.centers.rowwise().squaredNorm().transpose();
  return (scale * dist2.cwiseMax(0.0)).array().exp().matrix();
}

double empirical_bregman(const RatioModel& model, const Matrix& sc_samples, const Matrix& u_samples) {
  return empirical_bregman([&](const Vector& x) { return eval_ratio(model, x); }, sc_samples,
                           u_samples);
}

double median_pairwise_distance(const Matrix& points) {
  std::vector<double> dists;
  for (Index i = 0; i < points.rows(); ++i) {
    for (Index j = i + 1; j < points.rows(); ++j) {
      dists.push_back((points.row(i) - points.row(j)).norm());
    }
  }
  if (dists.empty()) return 1.0;
  const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  double median = *mid;
  if (dists.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(dists.begin(), mid));
  }
  return median > 0.0 ? median : 1.0;
}

namespace {

// Quadratic part of the squared-generator objective: 1/2 a^T H a - h^T a.
// The empirical Bregman value is this plus 1/2.
double quadratic_objective(const Matrix& hess, const Vector& lin, const Vector& alpha) {
  return 0.5 * alpha.dot(hess * alpha) - lin.dot(alpha);
}

Vector solve_system(const Matrix& hess, const Vector& lin, double ridge) {
  const Index b = hess.rows();
  const Matrix system = hess + 2.0 * ridge * Matrix::Identity(b, b);
  Eigen::LLT<Matrix> llt(system);
  if (llt.info() == Eigen::Success) {
    Vector alpha = llt.solve(lin);
    if (alpha.allFinite()) return alpha;
  }
  if (ridge > 0.0) {
    Eigen::LDLT<Matrix> ldlt(system);
    Vector alpha = ldlt.solve(lin);
    if (ldlt.info() == Eigen::Success && alpha.allFinite()) return alpha;
  }
  throw NumericError("ratio system is singular; use a positive ridge coefficient");
}

Matrix gather_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

struct Selection {
  double sigma = 1.0;
  double ridge = 0.0;
};

// k-fold cross-validation of the held-out objective over the (bandwidth,
// ridge) grid. Folds are drawn once and shared by every grid point.
Selection select_hyperparameters(const RatioModel& base, const Matrix& sc_samples, const Matrix& u_samples,
                                 const BregmanConfig& config, std::uint64_t seed) {
  std::vector<double> sigmas{base.sigma};
  if (config.bandwidth <= 0.0 && !config.bandwidth_scales.empty()) {
    sigmas.clear();
    for (double s : config.bandwidth_scales) sigmas.push_back(s * base.sigma);
  }
  const int folds = std::max(2, config.folds);
  if (sc_samples.rows() < folds || u_samples.rows() < folds) return {base.sigma, config.ridge};
  Rng rng(derive_seed(seed, 7));
  const auto perm_sc = rng.permutation(sc_samples.rows());
  const auto perm_u = rng.permutation(u_samples.rows());
  auto split = [&](const std::vector<Index>& perm, int f, std::vector<Index>& train, std::vector<Index>& test) {
    for (std::size_t i = 0; i < perm.size(); ++i) {
      (static_cast<int>(i % static_cast<std::size_t>(folds)) == f ? test : train).push_back(perm[i]);
    }
  };

  Selection best{base.sigma, config.ridge};
  double best_score = std::numeric_limits<double>::infinity();
  for (double sigma : sigmas) {
    RatioModel model = base;
    model.sigma = sigma;
    const Matrix k_sc = kernel_responses(model, sc_samples);
    const Matrix k_u = kernel_responses(model, u_samples);
    for (double ridge : config.ridge_grid) {
      double score = 0.0;
      bool ok = true;
      for (int f = 0; f < folds && ok; ++f) {
        std::vector<Index> tr_sc, te_sc, tr_u, te_u;
        split(perm_sc, f, tr_sc, te_sc);
        split(perm_u, f, tr_u, te_u);
        try {
          const Vector alpha =
              solve_ratio_coefficients(gather_rows(k_sc, tr_sc), gather_rows(k_u, tr_u), ridge);
          const Matrix te_sc_k = gather_rows(k_sc, te_sc);
          const Matrix hess = te_sc_k.transpose() * te_sc_k / static_cast<double>(te_sc_k.rows());
          const Vector lin = gather_rows(k_u, te_u).colwise().mean().transpose();
          score += quadratic_objective(hess, lin, alpha);
        } catch (const NumericError&) {
          ok = false;
        }
      }
      if (ok && score < best_score) {
        best_score = score;
        best = {sigma, ridge};
      }
    }
  }
  return best;
}

}  // namespace

Vector solve_ratio_coefficients(const Matrix& sc_responses, const Matrix& u_responses, double ridge) {
  if (ridge < 0.0) throw ArgumentError("ridge must be nonnegative");
  const Matrix hess = sc_responses.transpose() * sc_responses / static_cast<double>(sc_responses.rows());
  const Vector lin = u_responses.colwise().mean().transpose();
  const Index b = hess.rows();
  const Matrix system = hess + 2.0 * ridge * Matrix::Identity(b, b);

  Vector alpha = solve_system(hess, lin, ridge);
  if ((alpha.array() >= 0.0).all()) return alpha;

  // Lawson-Hanson active set on min 1/2 a^T A a - h^T a subject to a >= 0,
  // with A = H + 2 ridge I.
  const double tol = 1e-12 * std::max(1.0, lin.cwiseAbs().maxCoeff());
  alpha.setZero();
  std::vector<bool> passive(static_cast<std::size_t>(b), false);
  auto solve_passive = [&]() {
    std::vector<Index> idx;
    for (Index j = 0; j < b; ++j) {
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    }
    const Matrix sub = system(idx, idx);
    const Vector rhs = lin(idx);
    Eigen::LDLT<Matrix> ldlt(sub);
    const Vector part = ldlt.solve(rhs);
    Vector s = Vector::Zero(b);
    s(idx) = part;
    if (ldlt.info() != Eigen::Success || !s.allFinite()) {
      throw NumericError("ratio system is singular; use a positive ridge coefficient");
    }
    return s;
  };

  for (Index outer = 0; outer < 3 * b + 10; ++outer) {
    const Vector grad = lin - system * alpha;
    Index enter = -1;
    double best = tol;
    for (Index j = 0; j < b; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && grad(j) > best) {
        best = grad(j);
        enter = j;
      }
    }
    if (enter < 0) break;
    passive[static_cast<std::size_t>(enter)] = true;
    while (true) {
      const Vector s = solve_passive();
      bool feasible = true;
      double step = 1.0;
      for (Index j = 0; j < b; ++j) {
        if (passive[static_cast<std::size_t>(j)] && s(j) <= 0.0) {
          feasible = false;
          step = std::min(step, alpha(j) / (alpha(j) - s(j)));
        }
      }
      if (feasible) {
        alpha = s;
        break;
      }
      alpha += step * (s - alpha);
      for (Index j = 0; j < b; ++j) {
        if (passive[static_cast<std::size_t>(j)] && alpha(j) <= tol) {
          passive[static_cast<std::size_t>(j)] = false;
          alpha(j) = 0.0;
        }
      }
    }
  }
  return alpha;
}

RatioModel fit_ratio(const Matrix& sc_samples, const Matrix& u_samples, const BregmanConfig& config,
                     std::uint64_t seed) {
  if (sc_samples.rows() == 0 || u_samples.rows() == 0) {
    throw ArgumentError("fit_ratio: both sample sets must be nonempty");
  }
  if (sc_samples.cols() != u_samples.cols()) throw ShapeError("fit_ratio: dimension mismatch");
  if (config.max_centers < 1) throw ArgumentError("fit_ratio: at least one basis center required");
  if (config.ridge < 0.0) throw ArgumentError("fit_ratio: ridge must be nonnegative");

  RatioModel model;
  const Index num_centers = std::min(config.max_centers, u_samples.rows());
  Rng rng(derive_seed(seed, 5));
  auto perm = rng.permutation(u_samples.rows());
  perm.resize(static_cast<std::size_t>(num_centers));
  model.centers = gather_rows(u_samples, perm);
  model.sigma = config.bandwidth > 0.0 ? config.bandwidth : median_pairwise_distance(model.centers);

  double ridge = config.ridge;
  if (config.cross_validate) {
    const Selection chosen = select_hyperparameters(model, sc_samples, u_samples, config, seed);
    model.sigma = chosen.sigma;
    ridge = chosen.ridge;
  }
  model.alpha = solve_ratio_coefficients(kernel_responses(model, sc_samples), kernel_responses(model, u_samples), ridge);
  return model;
}

nlohmann::json ratio_to_json(const RatioModel& model) {
  nlohmann::json doc;
  doc["sigma"] = model.sigma;
  doc["centers"] = nlohmann::json::array();
  for (Index b = 0; b < model.num_centers(); ++b) {
    std::vector<double> row(static_cast<std::size_t>(model.centers.cols()));
    for (Index c = 0; c < model.centers.cols(); ++c) row[static_cast<std::size_t>(c)] = model.centers(b, c);
    doc["centers"].push_back(row);
  }
  doc["alpha"] = std::vector<double>(model.alpha.data(), model.alpha.data() + model.alpha.size());
  return doc;
}

RatioModel ratio_from_json(const nlohmann::json& doc) {
  try {
    RatioModel model;
    model.sigma = doc.at("sigma").get<double>();
    const auto centers = doc.at("centers").get<std::vector<std::vector<double>>>();
    const auto alpha = doc.at("alpha").get<std::vector<double>>();
    if (centers.empty() || centers.size() != alpha.size()) {
      throw ArgumentError("ratio model: need one alpha per center");
    }
    model.centers.resize(static_cast<Index>(centers.size()), static_cast<Index>(centers[0].size()));
    for (std::size_t b = 0; b < centers.size(); ++b) {
      if (centers[b].size() != centers[0].size()) throw ArgumentError("ratio model: ragged centers");
      for (std::size_t c = 0; c < centers[b].size(); ++c) {
        model.centers(static_cast<Index>(b), static_cast<Index>(c)) = centers[b][c];
      }
    }
    model.alpha = Eigen::Map<const Vector>(alpha.data(), static_cast<Index>(alpha.size()));
    if (!(model.sigma > 0.0) || (model.alpha.array() < 0.0).any()) {
      throw ArgumentError("ratio model: sigma must be positive and alpha nonnegative");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("ratio model: ") + e.what());
  }
}

}  // namespace conflearn
