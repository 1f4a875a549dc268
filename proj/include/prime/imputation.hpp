#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "prime/core.hpp"
#include "prime/projection.hpp"

namespace prime {

enum class ImputeMethod { ProjectiveResampling, PlainKernel };
enum class FallbackPolicy { Relaxed, Strict };

struct ImputeConfig {
  ImputeMethod method = ImputeMethod::ProjectiveResampling;
  ProjectionSpec projection;  // ignored by PlainKernel
  KernelSpec kernel;
  FallbackPolicy fallback = FallbackPolicy::Relaxed;
};

/// Rows eligible to donate a value for missing cell (i, j): every row whose
/// availability set contains the target row's set plus column j. Read as
/// superset-or-equal so that complete rows always qualify.
inline std::vector<int> donor_set(const MaskedDataset& ds, int i, int j) {
  if (ds.mask(i, j)) {
    throw_validation("cell_observed", "cell (" + std::to_string(i) + ", " + std::to_string(j) +
                                          ") is observed; nothing to impute");
  }
  const AvailabilityPattern needed = pattern_of(ds, i).with(j);
  std::vector<int> donors;
  for (int r = 0; r < ds.n(); ++r) {
    if (pattern_of(ds, r).superset_of(needed)) donors.push_back(r);
  }
  return donors;
}

struct CellDiagnostics {
  int donor_count = 0;
  int fallback_level = 0;  // 0 strict donors, 1 relaxed overlap, 2 column mean
};

struct ImputationDiagnostics {
  Eigen::MatrixXi donor_count;     // zero on observed cells
  Eigen::MatrixXi fallback_level;  // zero on observed cells
  int imputed_cells = 0;
  int cells_by_level[3] = {0, 0, 0};

  double strict_fraction() const {
    return imputed_cells == 0 ? 1.0 : static_cast<double>(cells_by_level[0]) / imputed_cells;
  }
};

/// Imputes missing cells as kernel-weighted donor averages and assembles the
/// completed design matrix. Weight computation is shared across the cells of
/// a row pattern, so building the full matrix costs one projection pass per
/// distinct pattern rather than one per cell.
class Imputer {
 public:
  Imputer(const MaskedDataset& ds, const ImputeConfig& cfg, std::uint64_t seed)
      : ds_(ds), cfg_(cfg), h_(cfg.kernel.bandwidth(ds.n())), dirs_(make_cache(cfg, seed)) {
    ds_.validate();
    patterns_.reserve(ds_.n());
    for (int i = 0; i < ds_.n(); ++i) patterns_.push_back(pattern_of(ds_, i));
  }

  double bandwidth() const { return h_; }
  const DirectionCache& directions() const { return dirs_; }

  std::pair<double, CellDiagnostics> impute_cell(int i, int j) {
    if (i < 0 || i >= ds_.n() || j < 0 || j >= ds_.p()) {
      throw_validation("cell_out_of_range", "cell index out of range");
    }
    if (ds_.mask(i, j)) {
      throw_validation("cell_observed", "cell (" + std::to_string(i) + ", " + std::to_string(j) +
                                            ") is observed; nothing to impute");
    }

    const AvailabilityPattern& pattern = patterns_[i];
    const PatternWorkspace& ws = workspace(pattern);

    // Level 0: donors observing the full target pattern plus column j.
    std::vector<int> donors;
    donors.reserve(ws.rows.size());
    for (int r : ws.rows) {
      if (ds_.mask(r, j)) donors.push_back(r);
    }
    if (!donors.empty()) {
      return {weighted_average_strict(ws, donors, i, j), CellDiagnostics{(int)donors.size(), 0}};
    }
    if (cfg_.fallback == FallbackPolicy::Strict) {
      throw_estimator("no_donors", "no donor rows observe the pattern of row " + std::to_string(i) +
                                       " plus column " + std::to_string(j));
    }

    // Level 1: any row observing column j, compared on the overlap of the
    // two availability sets.
    std::vector<int> relaxed;
    for (int r = 0; r < ds_.n(); ++r) {
      if (ds_.mask(r, j)) relaxed.push_back(r);
    }
    if (!relaxed.empty()) {
      return {weighted_average_relaxed(pattern, relaxed, i, j),
              CellDiagnostics{(int)relaxed.size(), 1}};
    }

    // Level 2: unconditional mean of the observed values in column j.
    double sum = 0.0;
    int count = 0;
    for (int r = 0; r < ds_.n(); ++r) {
      if (ds_.mask(r, j)) {
        sum += ds_.x(r, j);
        ++count;
      }
    }
    if (count == 0) {
      throw_estimator("unimputable_cell", "column " + std::to_string(j) +
                                              " has no observed values; cell (" +
                                              std::to_string(i) + ", " + std::to_string(j) +
                                              ") cannot be imputed");
    }
    return {sum / count, CellDiagnostics{count, 2}};
  }

  std::pair<Matrix, ImputationDiagnostics> build_z() {
    const int n = ds_.n(), p = ds_.p();
    Matrix z = Matrix::Zero(n, p);
    ImputationDiagnostics diag;
    diag.donor_count = Eigen::MatrixXi::Zero(n, p);
    diag.fallback_level = Eigen::MatrixXi::Zero(n, p);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) {
        if (ds_.mask(i, j)) {
          z(i, j) = ds_.x(i, j);
        } else {
          auto [value, cell] = impute_cell(i, j);
          z(i, j) = value;
          diag.donor_count(i, j) = cell.donor_count;
          diag.fallback_level(i, j) = cell.fallback_level;
          ++diag.imputed_cells;
          ++diag.cells_by_level[cell.fallback_level];
        }
      }
    }
    return {std::move(z), std::move(diag)};
  }

 private:
  // Rows observing every column of a pattern, with either their projections
  // onto the pattern's directions (projective resampling) or their raw
  // coordinates on the pattern (plain kernel), indexed alongside `rows`.
  struct PatternWorkspace {
    std::vector<int> rows;
    std::map<int, int> row_slot;
    Matrix values;  // rows x B (projections) or rows x |A| (coordinates)
  };

  static DirectionCache make_cache(const ImputeConfig& cfg, std::uint64_t seed) {
    ProjectionSpec spec = cfg.projection;
    spec.seed = seed;
    return DirectionCache(spec);
  }

  Vector observed_slice(int row, const AvailabilityPattern& pattern) const {
    Vector v(pattern.size());
    int k = 0;
    for (int j : pattern.observed()) v[k++] = ds_.x(row, j);
    return v;
  }

  const PatternWorkspace& workspace(const AvailabilityPattern& pattern) {
    auto it = workspaces_.find(pattern);
    if (it != workspaces_.end()) return it->second;

    PatternWorkspace ws;
    for (int r = 0; r < ds_.n(); ++r) {
      if (patterns_[r].superset_of(pattern)) {
        ws.row_slot[r] = static_cast<int>(ws.rows.size());
        ws.rows.push_back(r);
      }
    }
    const int m = static_cast<int>(ws.rows.size());
    if (cfg_.method == ImputeMethod::ProjectiveResampling) {
      const DirectionSet& dirs = dirs_.get(pattern);
      ws.values.resize(m, dirs.b());
      for (int s = 0; s < m; ++s) {
        ws.values.row(s) = (dirs.v * observed_slice(ws.rows[s], pattern)).transpose();
      }
    } else {
      ws.values.resize(m, pattern.size());
      for (int s = 0; s < m; ++s) {
        ws.values.row(s) = observed_slice(ws.rows[s], pattern).transpose();
      }
    }
    return workspaces_.emplace(pattern, std::move(ws)).first->second;
  }

  // Log-weight of a donor at level 0. The target row always belongs to the
  // workspace of its own pattern.
  double strict_log_weight(const PatternWorkspace& ws, int target_slot, int donor_slot) const {
    const double sq = (ws.values.row(donor_slot) - ws.values.row(target_slot)).squaredNorm();
    if (cfg_.method == ImputeMethod::ProjectiveResampling) {
      return -sq / (2.0 * ws.values.cols() * h_ * h_);
    }
    return -sq / (2.0 * h_ * h_);
  }

  double weighted_average_strict(const PatternWorkspace& ws, const std::vector<int>& donors,
                                 int i, int j) {
    const int target_slot = ws.row_slot.at(i);
    std::vector<double> logw(donors.size());
    for (std::size_t k = 0; k < donors.size(); ++k) {
      logw[k] = strict_log_weight(ws, target_slot, ws.row_slot.at(donors[k]));
    }
    return normalized_average(logw, donors, j);
  }

  double weighted_average_relaxed(const AvailabilityPattern& target_pattern,
                                  const std::vector<int>& donors, int i, int j) {
    std::vector<double> logw(donors.size());
    for (std::size_t k = 0; k < donors.size(); ++k) {
      const AvailabilityPattern overlap = target_pattern.intersect(patterns_[donors[k]]);
      if (overlap.empty()) {
        logw[k] = 0.0;  // no shared coordinates: kernel value 1
        continue;
      }
      const Vector diff = observed_slice(donors[k], overlap) - observed_slice(i, overlap);
      if (cfg_.method == ImputeMethod::ProjectiveResampling) {
        const DirectionSet& dirs = dirs_.get(overlap);
        logw[k] = log_geo_kernel(dirs, dirs.v * diff, h_);
      } else {
        logw[k] = log_product_kernel(diff, h_);
      }
    }
    return normalized_average(logw, donors, j);
  }

  // Normalizes in log space (max subtraction) and averages the donor values.
  double normalized_average(const std::vector<double>& logw, const std::vector<int>& donors,
                            int j) const {
    double max_log = logw[0];
    for (double w : logw) max_log = std::max(max_log, w);
    double wsum = 0.0, vsum = 0.0;
    for (std::size_t k = 0; k < donors.size(); ++k) {
      const double w = std::exp(logw[k] - max_log);
      wsum += w;
      vsum += w * ds_.x(donors[k], j);
    }
    return vsum / wsum;
  }

  const MaskedDataset& ds_;
  ImputeConfig cfg_;
  double h_;
  DirectionCache dirs_;
  std::vector<AvailabilityPattern> patterns_;
  std::map<AvailabilityPattern, PatternWorkspace> workspaces_;
};

inline std::pair<double, CellDiagnostics> impute_cell(const MaskedDataset& ds, int i, int j,
                                                      const ImputeConfig& cfg,
                                                      std::uint64_t seed) {
  Imputer imputer(ds, cfg, seed);
  return imputer.impute_cell(i, j);
}

/// Completed design matrix: observed cells copied verbatim, missing cells
/// imputed. Deterministic given (dataset, config, seed).
inline std::pair<Matrix, ImputationDiagnostics> build_z(const MaskedDataset& ds,
                                                        const ImputeConfig& cfg,
                                                        std::uint64_t seed) {
  Imputer imputer(ds, cfg, seed);
  return imputer.build_z();
}

}  // namespace prime
