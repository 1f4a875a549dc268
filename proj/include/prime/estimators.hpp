#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "prime/core.hpp"
#include "prime/imputation.hpp"
#include "prime/rng.hpp"

namespace prime {

struct FitResult {
  Vector beta;
  Matrix z;
  ImputationDiagnostics imputation;
  double gram_condition = 0.0;          // eigenvalue ratio of Z'Z
  double estimating_residual_inf = 0.0; // ||(1/n) Z'(y - Z beta)||_inf
};

// ---------------------------------------------------------------------------
// Unpenalized solves

namespace detail {

constexpr double kConditionLimit = 1e12;

/// Solves the normal equations G beta = x'y with an eigenvalue-based
/// condition guard and one step of iterative refinement.
inline Vector solve_normal_equations(const Matrix& x, const Vector& y, double* condition_out,
                                     const std::string& singular_hint) {
  const Matrix gram = x.transpose() * x;
  const Vector xty = x.transpose() * y;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  const double condition = (lo > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
  if (condition_out) *condition_out = condition;
  if (!(lo > 0.0) || condition > kConditionLimit) {
    throw_estimator("singular_gram",
                    "Gram matrix is singular or ill-conditioned (condition estimate " +
                        std::to_string(condition) + ")" + singular_hint);
  }

  Eigen::LDLT<Matrix> ldlt(gram);
  Vector beta = ldlt.solve(xty);
  beta += ldlt.solve(xty - gram * beta);  // one refinement step
  if (!beta.allFinite()) {
    throw_estimator("nonfinite_solution", "normal-equation solution has non-finite entries");
  }
  return beta;
}

}  // namespace detail

/// Least squares on fully observed data via the normal equations.
inline Vector fit_full_ols(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw_validation("dimension_mismatch", "x and y disagree on n");
  if (!x.allFinite()) {
    throw_estimator("missing_cells", "design matrix has non-finite cells; full fit needs complete data");
  }
  if (x.rows() <= x.cols()) {
    throw_estimator("too_few_rows", "need n > p for an unpenalized fit (n = " +
                                        std::to_string(x.rows()) + ", p = " +
                                        std::to_string(x.cols()) + ")");
  }
  return detail::solve_normal_equations(x, y, nullptr, "");
}

/// Imputes the design matrix and solves the estimating equation in closed
/// form. The result carries the completed design and its diagnostics.
inline FitResult fit_prime(const MaskedDataset& ds, const ImputeConfig& cfg, std::uint64_t seed) {
  if (ds.n() <= ds.p()) {
    throw_estimator("too_few_rows", "need n > p for the unpenalized fit (n = " +
                                        std::to_string(ds.n()) + ", p = " +
                                        std::to_string(ds.p()) + ")");
  }
  FitResult fit;
  std::tie(fit.z, fit.imputation) = build_z(ds, cfg, seed);
  fit.beta = detail::solve_normal_equations(fit.z, ds.y, &fit.gram_condition,
                                            "; consider the penalized fit");
  fit.estimating_residual_inf =
      ((fit.z.transpose() * (ds.y - fit.z * fit.beta)) / ds.n()).cwiseAbs().maxCoeff();
  return fit;
}

// ---------------------------------------------------------------------------
// Penalized solves (lasso via cyclic coordinate descent with soft thresholding)
//
// Objective: (1/(2n)) ||y - Z beta||^2 + lambda ||beta||_1.

struct FixedLambda {
  double value = 0.0;
};
struct CvPath {
  int n_folds = 10;
  int n_lambdas = 100;
};

struct PenaltySpec {
  double gamma = 1.0;  // bridge exponent; only 1 (lasso) is solvable here
  std::variant<FixedLambda, CvPath> lambda = CvPath{};

  void validate() const {
    if (gamma != 1.0) {
      throw_validation("unsupported_gamma", "only gamma = 1 (lasso) is supported by the solver");
    }
    if (const auto* fixed = std::get_if<FixedLambda>(&lambda)) {
      if (!(fixed->value >= 0.0)) throw_validation("invalid_lambda", "lambda must be >= 0");
    } else {
      const auto& cv = std::get<CvPath>(lambda);
      if (cv.n_folds < 2) throw_validation("invalid_folds", "need at least 2 CV folds");
      if (cv.n_lambdas < 1) throw_validation("invalid_lambda_count", "need at least 1 lambda");
    }
  }
};

struct SparsityReport {
  std::vector<int> active_set;
  double lambda_chosen = 0.0;
};

constexpr double kActiveZeroTol = 1e-10;

struct KktReport {
  double max_inactive_excess = 0.0;   // max over zero coords of |g_j| - lambda
  double max_active_mismatch = 0.0;   // max over active coords of |g_j - lambda sign(beta_j)|

  bool ok(double tol = 1e-8) const {
    return max_inactive_excess <= tol && max_active_mismatch <= tol;
  }
};

/// Stationarity check for the lasso objective, with g = (1/n) Z'(y - Z beta).
inline KktReport lasso_kkt(const Matrix& z, const Vector& y, const Vector& beta, double lambda) {
  const Vector grad = z.transpose() * (y - z * beta) / static_cast<double>(z.rows());
  KktReport report;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (std::abs(beta[j]) <= kActiveZeroTol) {
      report.max_inactive_excess = std::max(report.max_inactive_excess, std::abs(grad[j]) - lambda);
    } else {
      const double sign = beta[j] > 0.0 ? 1.0 : -1.0;
      report.max_active_mismatch =
          std::max(report.max_active_mismatch, std::abs(grad[j] - lambda * sign));
    }
  }
  return report;
}

namespace detail {

inline double soft_threshold(double value, double threshold) {
  if (value > threshold) return value - threshold;
  if (value < -threshold) return value + threshold;
  return 0.0;
}

struct ShootingOptions {
  double tol = 1e-9;      // max absolute coefficient change per sweep
  int max_sweeps = 10000;
};

/// One lasso solve. Keeps the residual vector incremental; a sweep costs
/// O(n p). Stops once the sweep movement is below tol and the stationarity
/// conditions hold to 1e-9.
inline Vector shooting_lasso(const Matrix& z, const Vector& y, double lambda,
                             const Vector* warm_start = nullptr, ShootingOptions opt = {}) {
  const int n = static_cast<int>(z.rows());
  const int p = static_cast<int>(z.cols());
  Vector col_sq(p);
  for (int j = 0; j < p; ++j) col_sq[j] = z.col(j).squaredNorm() / n;

  Vector beta = warm_start ? *warm_start : Vector::Zero(p);
  Vector residual = y - z * beta;

  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (int j = 0; j < p; ++j) {
      if (col_sq[j] == 0.0) {
        if (beta[j] != 0.0) {
          residual += z.col(j) * beta[j];
          beta[j] = 0.0;
        }
        continue;
      }
      const double rho = z.col(j).dot(residual) / n + col_sq[j] * beta[j];
      const double updated = soft_threshold(rho, lambda) / col_sq[j];
      const double change = updated - beta[j];
      if (change != 0.0) {
        residual -= z.col(j) * change;
        beta[j] = updated;
        max_change = std::max(max_change, std::abs(change));
      }
    }
    if (max_change < opt.tol && lasso_kkt(z, y, beta, lambda).ok(1e-9)) {
      return beta;
    }
  }

  std::string iterate = "[";
  for (int j = 0; j < p; ++j) iterate += (j ? ", " : "") + std::to_string(beta[j]);
  iterate += "]";
  throw_estimator("lasso_no_convergence",
                  "coordinate descent did not converge in " + std::to_string(opt.max_sweeps) +
                      " sweeps at lambda = " + std::to_string(lambda) +
                      "; last iterate " + iterate);
}

/// Descending log-spaced grid from lambda_max (all-zero threshold) down to
/// 1e-4 * lambda_max.
inline std::vector<double> lambda_grid(const Matrix& z, const Vector& y, int n_lambdas) {
  const double lambda_max = (z.transpose() * y / static_cast<double>(z.rows())).cwiseAbs().maxCoeff();
  std::vector<double> grid(n_lambdas);
  if (n_lambdas == 1 || lambda_max <= 0.0) {
    std::fill(grid.begin(), grid.end(), std::max(lambda_max, 0.0));
    return grid;
  }
  const double log_max = std::log(lambda_max);
  const double log_min = std::log(lambda_max * 1e-4);
  for (int k = 0; k < n_lambdas; ++k) {
    grid[k] = std::exp(log_max + (log_min - log_max) * k / (n_lambdas - 1));
  }
  return grid;
}

/// K-fold cross-validation over the lambda grid, warm-starting each fold's
/// path. Ties prefer the larger (sparser) lambda.
inline double cv_select_lambda(const Matrix& z, const Vector& y, const CvPath& cv,
                               std::uint64_t seed) {
  const int n = static_cast<int>(z.rows());
  const int folds = std::min(cv.n_folds, n);
  if (folds < 2) throw_validation("invalid_folds", "cross-validation needs at least 2 rows");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(combine_seed(seed, stream::kCvFolds));
  rng.shuffle(order);

  const std::vector<double> grid = lambda_grid(z, y, cv.n_lambdas);
  std::vector<double> cv_error(grid.size(), 0.0);

  for (int f = 0; f < folds; ++f) {
    std::vector<int> train, test;
    for (int k = 0; k < n; ++k) {
      (k % folds == f ? test : train).push_back(order[k]);
    }
    Matrix z_train(train.size(), z.cols()), z_test(test.size(), z.cols());
    Vector y_train(train.size()), y_test(test.size());
    for (std::size_t r = 0; r < train.size(); ++r) {
      z_train.row(r) = z.row(train[r]);
      y_train[r] = y[train[r]];
    }
    for (std::size_t r = 0; r < test.size(); ++r) {
      z_test.row(r) = z.row(test[r]);
      y_test[r] = y[test[r]];
    }

    Vector beta = Vector::Zero(z.cols());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      beta = shooting_lasso(z_train, y_train, grid[k], &beta);
      cv_error[k] += (y_test - z_test * beta).squaredNorm() / test.size() / folds;
    }
  }

  std::size_t best = 0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (cv_error[k] < cv_error[best]) best = k;  // strict: ties keep larger lambda
  }
  return grid[best];
}

inline std::vector<int> active_set_of(const Vector& beta) {
  std::vector<int> active;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (std::abs(beta[j]) > kActiveZeroTol) active.push_back(static_cast<int>(j));
  }
  return active;
}

}  // namespace detail

/// Imputes the design matrix and solves the penalized estimating equations
/// at gamma = 1 via the shooting algorithm. p >= n is allowed.
inline std::pair<FitResult, SparsityReport> fit_sprime(const MaskedDataset& ds,
                                                       const ImputeConfig& cfg,
                                                       const PenaltySpec& pen,
                                                       std::uint64_t seed) {
  pen.validate();
  FitResult fit;
  std::tie(fit.z, fit.imputation) = build_z(ds, cfg, seed);

  double lambda;
  if (const auto* fixed = std::get_if<FixedLambda>(&pen.lambda)) {
    lambda = fixed->value;
  } else {
    lambda = detail::cv_select_lambda(fit.z, ds.y, std::get<CvPath>(pen.lambda), seed);
  }
  fit.beta = detail::shooting_lasso(fit.z, ds.y, lambda);
  fit.estimating_residual_inf =
      ((fit.z.transpose() * (ds.y - fit.z * fit.beta)) / ds.n()).cwiseAbs().maxCoeff();

  SparsityReport report;
  report.active_set = detail::active_set_of(fit.beta);
  report.lambda_chosen = lambda;
  return {std::move(fit), std::move(report)};
}

struct CcFit {
  Vector beta;
  int complete_rows = 0;
  std::optional<double> lambda_chosen;
};

/// Regression restricted to fully observed rows; ordinary least squares, or
/// the lasso when a penalty is supplied.
inline CcFit fit_cc(const MaskedDataset& ds, const std::optional<PenaltySpec>& pen = std::nullopt,
                    std::uint64_t seed = 0) {
  std::vector<int> complete;
  for (int i = 0; i < ds.n(); ++i) {
    if (ds.row_complete(i)) complete.push_back(i);
  }
  const int k = static_cast<int>(complete.size());
  const int min_rows = pen ? 2 : ds.p() + 1;
  if (k < min_rows) {
    throw_estimator("too_few_complete_rows",
                    "complete-case fit needs at least " + std::to_string(min_rows) +
                        " complete rows, found " + std::to_string(k));
  }

  Matrix x(k, ds.p());
  Vector y(k);
  for (int r = 0; r < k; ++r) {
    x.row(r) = ds.x.row(complete[r]);
    y[r] = ds.y[complete[r]];
  }

  CcFit fit;
  fit.complete_rows = k;
  if (!pen) {
    fit.beta = detail::solve_normal_equations(x, y, nullptr, "");
  } else {
    pen->validate();
    double lambda;
    if (const auto* fixed = std::get_if<FixedLambda>(&pen->lambda)) {
      lambda = fixed->value;
    } else {
      lambda = detail::cv_select_lambda(x, y, std::get<CvPath>(pen->lambda), seed);
    }
    fit.beta = detail::shooting_lasso(x, y, lambda);
    fit.lambda_chosen = lambda;
  }
  return fit;
}

}  // namespace prime
