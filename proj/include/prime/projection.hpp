#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "prime/core.hpp"
#include "prime/rng.hpp"

namespace prime {

enum class DirectionDist { Gaussian, ScaledUniform, Sparse };

/// How random projection directions are drawn. Every supported law has
/// mean 0 and second moment 1:
///   Gaussian       N(0, 1)
///   ScaledUniform  sqrt(3) * U(-1, 1)
///   Sparse(s)      +sqrt(s) w.p. 1/(2s), 0 w.p. 1 - 1/s, -sqrt(s) w.p. 1/(2s)
struct ProjectionSpec {
  int b = 100;
  DirectionDist dist = DirectionDist::Gaussian;
  double sparse_s = 3.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (b < 1) throw_validation("invalid_direction_count", "direction count must be >= 1");
    if (dist == DirectionDist::Sparse && sparse_s < 1.0) {
      throw_validation("invalid_sparse_s", "sparse direction parameter s must be >= 1");
    }
  }
};

/// B directions over one availability pattern, one per matrix row.
struct DirectionSet {
  AvailabilityPattern pattern;
  Matrix v;  // b x |pattern|

  int b() const { return static_cast<int>(v.rows()); }
};

/// Draws the direction set for `pattern`. The stream is keyed by
/// (spec.seed, pattern), so every row sharing a pattern sees identical
/// directions and regeneration is bit-exact.
inline DirectionSet sample_directions(const ProjectionSpec& spec,
                                      const AvailabilityPattern& pattern) {
  spec.validate();
  Rng rng(combine_seed(spec.seed, stream::kDirections, pattern.hash()));
  DirectionSet out;
  out.pattern = pattern;
  out.v.resize(spec.b, pattern.size());
  const double sqrt3 = std::sqrt(3.0);
  const double sqrt_s = std::sqrt(spec.sparse_s);
  for (int b = 0; b < spec.b; ++b) {
    for (int k = 0; k < pattern.size(); ++k) {
      double v;
      switch (spec.dist) {
        case DirectionDist::Gaussian:
          v = rng.normal();
          break;
        case DirectionDist::ScaledUniform:
          v = sqrt3 * rng.uniform(-1.0, 1.0);
          break;
        case DirectionDist::Sparse: {
          const double u = rng.uniform01();
          if (u < 0.5 / spec.sparse_s) {
            v = sqrt_s;
          } else if (u < 1.0 / spec.sparse_s) {
            v = -sqrt_s;
          } else {
            v = 0.0;
          }
          break;
        }
      }
      out.v(b, k) = v;
    }
  }
  return out;
}

/// Log of the geometric mean of B one-dimensional Gaussian kernels evaluated
/// at the projected differences: -(1/(2 B h^2)) * sum_b diff_b^2.
/// The kernel's (h sqrt(2 pi))^-1 normalization is omitted throughout; it
/// cancels in every weight ratio this library forms.
inline double log_geo_kernel(const Vector& projected_diff, double h) {
  if (!(h > 0.0)) throw_validation("invalid_bandwidth", "bandwidth must be positive");
  const int b = static_cast<int>(projected_diff.size());
  if (b < 1) throw_validation("empty_projection", "projected difference vector is empty");
  if (!projected_diff.allFinite()) {
    throw_validation("nonfinite_projection", "projected difference vector has non-finite entries");
  }
  return -projected_diff.squaredNorm() / (2.0 * b * h * h);
}

inline double log_geo_kernel(const DirectionSet& dirs, const Vector& projected_diff, double h) {
  if (projected_diff.size() != dirs.b()) {
    throw_validation("dimension_mismatch",
                     "projected difference length does not match direction count");
  }
  return log_geo_kernel(projected_diff, h);
}

/// Log of the (unnormalized) multivariate Gaussian product kernel over the
/// raw coordinate differences: -(1/(2 h^2)) * ||diff||^2.
inline double log_product_kernel(const Vector& coordinate_diff, double h) {
  if (!(h > 0.0)) throw_validation("invalid_bandwidth", "bandwidth must be positive");
  if (!coordinate_diff.allFinite()) {
    throw_validation("nonfinite_difference", "coordinate difference vector has non-finite entries");
  }
  return -coordinate_diff.squaredNorm() / (2.0 * h * h);
}

/// Lazily built per-pattern direction store. Deterministic: contents depend
/// only on (spec.seed, pattern), never on lookup order.
class DirectionCache {
 public:
  explicit DirectionCache(const ProjectionSpec& spec) : spec_(spec) { spec_.validate(); }

  const ProjectionSpec& spec() const { return spec_; }

  const DirectionSet& get(const AvailabilityPattern& pattern) const {
    auto it = cache_.find(pattern);
    if (it == cache_.end()) {
      it = cache_.emplace(pattern, sample_directions(spec_, pattern)).first;
    }
    return it->second;
  }

  std::size_t size() const { return cache_.size(); }

 private:
  ProjectionSpec spec_;
  mutable std::map<AvailabilityPattern, DirectionSet> cache_;
};

}  // namespace prime
