#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "prime/core.hpp"

namespace prime {

struct ReplicationRecord {
  std::string method;
  int replication = 0;
  Vector beta_hat;
};

namespace detail {

inline void check_finite(const Vector& beta, const std::string& what) {
  if (!beta.allFinite()) throw_validation("nonfinite_record", what + " has non-finite entries");
}

/// Groups records by method, ordered by replication index; every method must
/// cover the same replication set.
inline std::map<std::string, std::vector<Vector>> group_by_method(
    const std::vector<ReplicationRecord>& records, bool require_matching) {
  std::map<std::string, std::map<int, Vector>> by_method;
  for (const auto& rec : records) {
    check_finite(rec.beta_hat, "record " + rec.method);
    if (!by_method[rec.method].emplace(rec.replication, rec.beta_hat).second) {
      throw_validation("duplicate_record", "method " + rec.method + " has two records for replication " +
                                               std::to_string(rec.replication));
    }
  }
  if (by_method.empty()) throw_validation("no_records", "no replication records supplied");

  if (require_matching) {
    const auto& reference = by_method.begin()->second;
    for (const auto& [method, reps] : by_method) {
      if (reps.size() != reference.size() ||
          !std::equal(reps.begin(), reps.end(), reference.begin(),
                      [](const auto& a, const auto& b) { return a.first == b.first; })) {
        throw_validation("replication_mismatch",
                         "method " + method + " covers a different replication set");
      }
    }
  }

  std::map<std::string, std::vector<Vector>> out;
  for (auto& [method, reps] : by_method) {
    for (auto& [index, beta] : reps) out[method].push_back(std::move(beta));
  }
  return out;
}

inline double replication_mse(const Vector& beta_hat, const Vector& beta0) {
  return (beta_hat - beta0).squaredNorm() / beta0.size();
}

}  // namespace detail

/// Mean normalized absolute deviation per coefficient:
/// (1/N) sum_i |beta_hat_j - beta0_j| / |beta0_j|. Coefficients with
/// beta0_j = 0 are not scored and come back as NaN.
inline Vector nad(const std::vector<Vector>& betas, const Vector& beta0) {
  if (betas.empty()) throw_validation("no_records", "no replication records supplied");
  const Eigen::Index p = beta0.size();
  bool any_nonzero = false;
  Vector out = Vector::Constant(p, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index j = 0; j < p; ++j) {
    if (beta0[j] == 0.0) continue;
    any_nonzero = true;
    double acc = 0.0;
    for (const auto& beta : betas) {
      detail::check_finite(beta, "record");
      if (beta.size() != p) throw_validation("dimension_mismatch", "coefficient length mismatch");
      acc += std::abs(beta[j] - beta0[j]);
    }
    out[j] = acc / betas.size() / std::abs(beta0[j]);
  }
  if (!any_nonzero) {
    throw_validation("all_zero_truth", "every true coefficient is zero; deviation is not normalizable");
  }
  return out;
}

struct MseDecomposition {
  double mse = 0.0;
  double variance = 0.0;
  double bias_sq = 0.0;
};

/// MSE = (1/N) sum_i (1/p) ||beta_hat_i - beta0||^2, split exactly into the
/// spread around the replication mean plus the squared deviation of that
/// mean from the truth.
inline MseDecomposition mse_decomposed(const std::vector<Vector>& betas, const Vector& beta0) {
  if (betas.empty()) throw_validation("no_records", "no replication records supplied");
  const Eigen::Index p = beta0.size();
  const double n = static_cast<double>(betas.size());

  Vector mean = Vector::Zero(p);
  for (const auto& beta : betas) {
    detail::check_finite(beta, "record");
    if (beta.size() != p) throw_validation("dimension_mismatch", "coefficient length mismatch");
    mean += beta;
  }
  mean /= n;

  MseDecomposition out;
  for (const auto& beta : betas) {
    out.mse += (beta - beta0).squaredNorm();
    out.variance += (beta - mean).squaredNorm();
  }
  out.mse /= n * p;
  out.variance /= n * p;
  out.bias_sq = (mean - beta0).squaredNorm() / p;
  return out;
}

/// Fraction of replications in which each method attains the smallest
/// per-replication MSE; exact ties share the win equally.
inline std::map<std::string, double> optimal_rate(const std::vector<ReplicationRecord>& records,
                                                  const Vector& beta0) {
  auto by_method = detail::group_by_method(records, /*require_matching=*/true);
  if (by_method.size() < 2) {
    throw_validation("too_few_methods", "optimal rate needs at least two methods");
  }
  const std::size_t n_reps = by_method.begin()->second.size();

  std::map<std::string, double> rate;
  for (const auto& [method, betas] : by_method) rate[method] = 0.0;

  for (std::size_t r = 0; r < n_reps; ++r) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [method, betas] : by_method) {
      best = std::min(best, detail::replication_mse(betas[r], beta0));
    }
    std::vector<std::string> winners;
    for (const auto& [method, betas] : by_method) {
      if (detail::replication_mse(betas[r], beta0) == best) winners.push_back(method);
    }
    for (const auto& winner : winners) rate[winner] += 1.0 / (n_reps * winners.size());
  }
  return rate;
}

/// Mean squared distance of the per-replication estimates from a reference
/// coefficient vector (normally the full-data fit).
inline double mse_vs_full(const std::vector<Vector>& betas, const Vector& beta_full) {
  if (betas.empty()) throw_validation("no_records", "no replication records supplied");
  double acc = 0.0;
  for (const auto& beta : betas) {
    detail::check_finite(beta, "record");
    if (beta.size() != beta_full.size()) {
      throw_validation("dimension_mismatch", "coefficient length mismatch");
    }
    acc += (beta_full - beta).squaredNorm() / beta_full.size();
  }
  return acc / betas.size();
}

/// Mean rank (1 = best, average ranks on ties) of each method's
/// per-replication normalized deviation, per scored coefficient.
/// Unscored coefficients (beta0_j = 0) come back as NaN.
inline std::map<std::string, Vector> nad_rank_means(const std::vector<ReplicationRecord>& records,
                                                    const Vector& beta0) {
  auto by_method = detail::group_by_method(records, /*require_matching=*/true);
  const std::size_t n_reps = by_method.begin()->second.size();
  const Eigen::Index p = beta0.size();

  std::map<std::string, Vector> mean_rank;
  for (const auto& [method, betas] : by_method) {
    mean_rank[method] = Vector::Constant(p, std::numeric_limits<double>::quiet_NaN());
  }

  for (Eigen::Index j = 0; j < p; ++j) {
    if (beta0[j] == 0.0) continue;
    for (auto& [method, ranks] : mean_rank) ranks[j] = 0.0;
    for (std::size_t r = 0; r < n_reps; ++r) {
      std::vector<std::pair<double, std::string>> scored;
      for (const auto& [method, betas] : by_method) {
        scored.emplace_back(std::abs(betas[r][j] - beta0[j]) / std::abs(beta0[j]), method);
      }
      std::sort(scored.begin(), scored.end());
      std::size_t k = 0;
      while (k < scored.size()) {
        std::size_t tie_end = k;
        while (tie_end + 1 < scored.size() && scored[tie_end + 1].first == scored[k].first) {
          ++tie_end;
        }
        const double avg_rank = (k + tie_end) / 2.0 + 1.0;
        for (std::size_t t = k; t <= tie_end; ++t) {
          mean_rank[scored[t].second][j] += avg_rank / n_reps;
        }
        k = tie_end + 1;
      }
    }
  }
  return mean_rank;
}

}  // namespace prime
