#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "prime/core.hpp"
#include "prime/rng.hpp"

namespace prime {

enum class CorrStructure { Exchangeable, Ar1 };

/// Two-group row missingness. A unit first draws a group-1 pattern with
/// probability `a`; otherwise it draws a group-2 pattern with probability
/// 1 / (1 + exp(b * eps_i + c)); otherwise it stays complete. Patterns are
/// chosen uniformly within their group.
struct MissingConfig {
  double a = 0.1;
  double b = -1.5;
  double c = -1.5;
  std::vector<AvailabilityPattern> group1;
  std::vector<AvailabilityPattern> group2;

  void validate(int p) const {
    if (group1.empty() || group2.empty()) {
      throw_validation("empty_pattern_group", "missing-pattern groups must be non-empty");
    }
    for (const auto* group : {&group1, &group2}) {
      for (const auto& pattern : *group) {
        if (pattern.empty()) {
          throw_validation("empty_availability", "a missing pattern observes no columns");
        }
        if (pattern.observed().back() >= p) {
          throw_validation("pattern_out_of_range",
                           "a missing pattern references column " +
                               std::to_string(pattern.observed().back()) + " but p = " +
                               std::to_string(p));
        }
      }
    }
  }

  /// Group-1 rate clamped into [0, 1]; configurations may carry values
  /// outside the unit interval.
  double group1_rate() const { return std::min(1.0, std::max(0.0, a)); }

  double group2_rate(double eps) const { return 1.0 / (1.0 + std::exp(b * eps + c)); }
};

// The twelve canonical row patterns, defined over twelve base columns with
// the last three always observed. Listed here by their missing sets.
namespace detail {
inline const std::vector<std::vector<int>>& group1_missing_sets() {
  static const std::vector<std::vector<int>> sets = {
      {2}, {5}, {8}, {0, 3}, {0, 6}, {3, 6}};
  return sets;
}
inline const std::vector<std::vector<int>>& group2_missing_sets() {
  static const std::vector<std::vector<int>> sets = {
      {0, 1, 2}, {3, 4, 5}, {6, 7, 8}, {0, 1, 2, 3, 4, 5}, {0, 1, 2, 6, 7, 8}, {3, 4, 5, 6, 7, 8}};
  return sets;
}

inline std::vector<AvailabilityPattern> patterns_from_missing(
    const std::vector<std::vector<int>>& missing_sets, int p) {
  if (p < 12) {
    throw_validation("p_too_small", "the default missing patterns need p >= 12, got p = " +
                                        std::to_string(p));
  }
  std::vector<AvailabilityPattern> patterns;
  for (const auto& missing : missing_sets) {
    std::vector<int> observed;
    for (int j = 0; j < p; ++j) {
      if (std::find(missing.begin(), missing.end(), j) == missing.end()) observed.push_back(j);
    }
    patterns.emplace_back(std::move(observed));
  }
  return patterns;
}
}  // namespace detail

inline std::vector<AvailabilityPattern> default_group1_patterns(int p) {
  return detail::patterns_from_missing(detail::group1_missing_sets(), p);
}
inline std::vector<AvailabilityPattern> default_group2_patterns(int p) {
  return detail::patterns_from_missing(detail::group2_missing_sets(), p);
}

inline MissingConfig default_missing_config(int p, double a, double b, double c) {
  MissingConfig cfg;
  cfg.a = a;
  cfg.b = b;
  cfg.c = c;
  cfg.group1 = default_group1_patterns(p);
  cfg.group2 = default_group2_patterns(p);
  cfg.validate(p);
  return cfg;
}

/// (a, b, c) tuned so the incomplete-row fraction lands near the requested
/// missing rate, indexed by signal strength. Rates 60 and 90 are available
/// for r_squared in {0.1, ..., 0.9}.
inline std::array<double, 3> missing_rate_params(int missing_rate_percent, double r_squared) {
  static const double b60[] = {-1.5, -1.5, -1.5, -1.5, -1.5, -1.5, -2.0, -2.0, -4.0};
  static const double c60[] = {-4.0, -2.0, -2.0, -1.5, -1.5, -1.0, -1.0, -1.0, -1.0};
  static const double a90[] = {0.75, 0.75, 0.75, 0.75, 0.75, 0.75, 0.75, 0.75, 0.65};
  static const double b90[] = {-1.5, -1.5, -2.0, -2.0, -3.0, -3.0, -3.5, -3.5, -4.0};

  const int idx = static_cast<int>(std::lround(r_squared * 10.0)) - 1;
  if (idx < 0 || idx > 8 || std::abs(r_squared * 10.0 - std::lround(r_squared * 10.0)) > 1e-9) {
    throw_validation("unknown_missing_setting",
                     "tabulated missing-rate parameters exist only for r_squared in {0.1,...,0.9}");
  }
  if (missing_rate_percent == 60) return {0.1, b60[idx], c60[idx]};
  if (missing_rate_percent == 90) return {a90[idx], b90[idx], -4.0};
  throw_validation("unknown_missing_setting",
                   "tabulated missing-rate parameters exist only for rates 60 and 90");
}

struct ScenarioConfig {
  int n = 100;
  int p = 12;
  Vector beta0;
  CorrStructure corr = CorrStructure::Exchangeable;
  double rho = 0.5;
  double r_squared = 0.5;
  MissingConfig missing;
  int replications = 100;
  std::uint64_t seed = 1;

  void validate() const {
    if (n < 1) throw_validation("invalid_n", "n must be >= 1");
    if (p < 1) throw_validation("invalid_p", "p must be >= 1");
    if (beta0.size() != p) {
      throw_validation("beta0_length", "beta0 has length " + std::to_string(beta0.size()) +
                                           " but p = " + std::to_string(p));
    }
    if (!(r_squared > 0.0 && r_squared < 1.0)) {
      throw_validation("r_squared", "r_squared must lie in (0, 1), got " +
                                        std::to_string(r_squared));
    }
    if (corr == CorrStructure::Exchangeable && !(rho >= 0.0 && rho < 1.0)) {
      throw_validation("invalid_rho", "exchangeable correlation needs rho in [0, 1)");
    }
    if (corr == CorrStructure::Ar1 && !(rho > -1.0 && rho < 1.0)) {
      throw_validation("invalid_rho", "AR(1) correlation needs rho in (-1, 1)");
    }
    if (replications < 1) throw_validation("invalid_replications", "replications must be >= 1");
    missing.validate(p);
  }
};

inline Matrix correlation_matrix(CorrStructure corr, double rho, int p) {
  Matrix sigma(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      if (corr == CorrStructure::Exchangeable) {
        sigma(i, j) = (i == j) ? 1.0 : rho;
      } else {
        sigma(i, j) = std::pow(rho, std::abs(i - j));
      }
    }
  }
  return sigma;
}

/// Population variance of the linear signal x' beta under N(0, sigma).
inline double signal_variance(const Vector& beta0, const Matrix& sigma) {
  return beta0.dot(sigma * beta0);
}

/// Noise variance implied by the target signal-to-total-variance ratio:
/// sigma^2 = var(x' beta) * (1 - R^2) / R^2.
inline double noise_variance(const Vector& beta0, const Matrix& sigma, double r_squared) {
  if (!(r_squared > 0.0 && r_squared < 1.0)) {
    throw_validation("r_squared", "r_squared must lie in (0, 1)");
  }
  return signal_variance(beta0, sigma) * (1.0 - r_squared) / r_squared;
}

/// Rows i.i.d. N(0, sigma) via the Cholesky factor of sigma.
inline Matrix gen_covariates(int n, const Matrix& sigma, Rng& rng) {
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw_validation("covariance_not_pd", "covariance matrix is not positive definite");
  }
  const Matrix chol_l = llt.matrixL();
  const int p = static_cast<int>(sigma.rows());
  Matrix x(n, p);
  Vector z(p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) z[j] = rng.normal();
    x.row(i) = (chol_l * z).transpose();
  }
  return x;
}

/// y = x beta + eps with eps ~ N(0, sigma2) where sigma2 is derived from the
/// target r_squared and the population signal variance. Returns (y, eps);
/// the noise vector also drives the missingness mechanism.
inline std::pair<Vector, Vector> gen_response(const Matrix& x, const Vector& beta0,
                                              double r_squared, double var_signal, Rng& rng) {
  if (!(r_squared > 0.0 && r_squared < 1.0)) {
    throw_validation("r_squared", "r_squared must lie in (0, 1)");
  }
  const double sd = std::sqrt(var_signal * (1.0 - r_squared) / r_squared);
  Vector eps(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) eps[i] = sd * rng.normal();
  Vector y = x * beta0 + eps;
  return {std::move(y), std::move(eps)};
}

/// Draws the observation mask. Group-1 assignment happens first at rate `a`;
/// remaining units draw a group-2 pattern at the noise-dependent logistic
/// rate; everything else stays complete.
inline Mask apply_missingness(int n, int p, const Vector& eps, const MissingConfig& cfg,
                              Rng& rng) {
  cfg.validate(p);
  if (eps.size() != n) throw_validation("dimension_mismatch", "eps length does not match n");
  Mask mask = Mask::Constant(n, p, true);
  auto apply_pattern = [&](int i, const AvailabilityPattern& pattern) {
    for (int j = 0; j < p; ++j) mask(i, j) = pattern.contains(j);
  };
  for (int i = 0; i < n; ++i) {
    if (rng.uniform01() < cfg.group1_rate()) {
      apply_pattern(i, cfg.group1[rng.uniform_index(cfg.group1.size())]);
    } else if (rng.uniform01() < cfg.group2_rate(eps[i])) {
      apply_pattern(i, cfg.group2[rng.uniform_index(cfg.group2.size())]);
    }
  }
  return mask;
}

/// Everything the evaluation stage needs that an estimator must not see.
struct TruthRecord {
  Vector beta0;
  Vector epsilon;
  Matrix x_full;
  double sigma2 = 0.0;
  double r_squared = 0.0;
};

/// One replication of the configured scenario. Deterministic per
/// (cfg.seed, replication_index); the stream order is covariates, noise,
/// then mask.
inline std::pair<MaskedDataset, TruthRecord> gen_scenario(const ScenarioConfig& cfg,
                                                          int replication_index) {
  cfg.validate();
  Rng rng(combine_seed(cfg.seed, stream::kReplication,
                       static_cast<std::uint64_t>(replication_index)));
  const Matrix sigma = correlation_matrix(cfg.corr, cfg.rho, cfg.p);
  const double var_signal = signal_variance(cfg.beta0, sigma);

  Matrix x = gen_covariates(cfg.n, sigma, rng);
  auto [y, eps] = gen_response(x, cfg.beta0, cfg.r_squared, var_signal, rng);
  Mask mask = apply_missingness(cfg.n, cfg.p, eps, cfg.missing, rng);

  TruthRecord truth;
  truth.beta0 = cfg.beta0;
  truth.epsilon = eps;
  truth.x_full = x;
  truth.sigma2 = var_signal * (1.0 - cfg.r_squared) / cfg.r_squared;
  truth.r_squared = cfg.r_squared;

  MaskedDataset ds;
  ds.y = std::move(y);
  ds.x = x;
  for (int i = 0; i < cfg.n; ++i) {
    for (int j = 0; j < cfg.p; ++j) {
      if (!mask(i, j)) ds.x(i, j) = std::numeric_limits<double>::quiet_NaN();
    }
  }
  ds.mask = std::move(mask);
  ds.covariate_names = default_covariate_names(cfg.p);
  ds.validate();
  return {std::move(ds), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Presets

/// The coefficient vector shared by the simulation presets: twelve base
/// values, zero-padded when p exceeds twelve.
inline Vector preset_beta(int p) {
  static const double base[12] = {1.0, -0.6, 1.5, 1.0,  1.2, 0.4,
                                  -1.0, -0.7, 1.3, 0.5, 1.1, -1.4};
  if (p < 12) throw_validation("p_too_small", "preset coefficients need p >= 12");
  Vector beta = Vector::Zero(p);
  for (int j = 0; j < 12; ++j) beta[j] = base[j];
  return beta;
}

/// Moderate dimension, exchangeable correlation 0.5, 60% missing rows.
inline ScenarioConfig scenario1() {
  ScenarioConfig cfg;
  cfg.n = 100;
  cfg.p = 12;
  cfg.beta0 = preset_beta(12);
  cfg.corr = CorrStructure::Exchangeable;
  cfg.rho = 0.5;
  cfg.r_squared = 0.5;
  const auto abc = missing_rate_params(60, cfg.r_squared);
  cfg.missing = default_missing_config(12, abc[0], abc[1], abc[2]);
  cfg.replications = 100;
  return cfg;
}

/// Correlation study at fixed signal strength; override corr/rho and the
/// missing parameters to sweep the grid.
inline ScenarioConfig scenario2() {
  ScenarioConfig cfg;
  cfg.n = 100;
  cfg.p = 12;
  cfg.beta0 = preset_beta(12);
  cfg.corr = CorrStructure::Exchangeable;
  cfg.rho = 0.2;
  cfg.r_squared = 0.7;
  cfg.missing = default_missing_config(12, 0.1, -2.0, -1.0);
  cfg.replications = 100;
  return cfg;
}

/// Sparse setting: thirty covariates with the last eighteen inactive.
inline ScenarioConfig scenario3() {
  ScenarioConfig cfg;
  cfg.n = 200;
  cfg.p = 30;
  cfg.beta0 = preset_beta(30);
  cfg.corr = CorrStructure::Exchangeable;
  cfg.rho = 0.5;
  cfg.r_squared = 0.7;
  cfg.missing = default_missing_config(30, 0.1, -2.0, -1.0);
  cfg.replications = 100;
  return cfg;
}

inline ScenarioConfig scenario_preset(const std::string& name) {
  if (name == "scenario1") return scenario1();
  if (name == "scenario2") return scenario2();
  if (name == "scenario3") return scenario3();
  throw_validation("unknown_scenario", "unknown scenario preset '" + name + "'");
}

}  // namespace prime
