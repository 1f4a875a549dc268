#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace prime {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class ErrorKind { Validation, Estimator, Io };

/// Library-wide exception. `code` is a stable machine-readable identifier,
/// `kind` selects the CLI exit code family.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind(kind), code(std::move(code)) {}

  ErrorKind kind;
  std::string code;
};

[[noreturn]] inline void throw_validation(const std::string& code, const std::string& msg) {
  throw Error(ErrorKind::Validation, code, msg);
}
[[noreturn]] inline void throw_estimator(const std::string& code, const std::string& msg) {
  throw Error(ErrorKind::Estimator, code, msg);
}
[[noreturn]] inline void throw_io(const std::string& code, const std::string& msg) {
  throw Error(ErrorKind::Io, code, msg);
}

/// Sorted set of observed column indices for one row.
class AvailabilityPattern {
 public:
  AvailabilityPattern() = default;

  explicit AvailabilityPattern(std::vector<int> observed) : observed_(std::move(observed)) {
    std::sort(observed_.begin(), observed_.end());
    observed_.erase(std::unique(observed_.begin(), observed_.end()), observed_.end());
    if (!observed_.empty() && observed_.front() < 0) {
      throw_validation("negative_column_index", "availability pattern contains a negative column index");
    }
  }

  const std::vector<int>& observed() const { return observed_; }
  int size() const { return static_cast<int>(observed_.size()); }
  bool empty() const { return observed_.empty(); }

  bool contains(int j) const {
    return std::binary_search(observed_.begin(), observed_.end(), j);
  }

  /// True when this pattern observes every index of `other`.
  bool superset_of(const AvailabilityPattern& other) const {
    return std::includes(observed_.begin(), observed_.end(),
                         other.observed_.begin(), other.observed_.end());
  }

  AvailabilityPattern intersect(const AvailabilityPattern& other) const {
    std::vector<int> out;
    std::set_intersection(observed_.begin(), observed_.end(),
                          other.observed_.begin(), other.observed_.end(),
                          std::back_inserter(out));
    AvailabilityPattern p;
    p.observed_ = std::move(out);
    return p;
  }

  AvailabilityPattern with(int j) const {
    AvailabilityPattern p = *this;
    auto it = std::lower_bound(p.observed_.begin(), p.observed_.end(), j);
    if (it == p.observed_.end() || *it != j) p.observed_.insert(it, j);
    return p;
  }

  /// FNV-1a over the index sequence; canonical because indices are sorted.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (int j : observed_) {
      std::uint64_t v = static_cast<std::uint64_t>(j);
      for (int byte = 0; byte < 8; ++byte) {
        h ^= (v >> (8 * byte)) & 0xffu;
        h *= 0x100000001b3ull;
      }
    }
    return h;
  }

  friend bool operator==(const AvailabilityPattern& a, const AvailabilityPattern& b) {
    return a.observed_ == b.observed_;
  }
  friend auto operator<=>(const AvailabilityPattern& a, const AvailabilityPattern& b) {
    return a.observed_ <=> b.observed_;
  }

 private:
  std::vector<int> observed_;
};

/// Response vector, covariate matrix, and observation mask (true = observed).
/// Masked-out cells of `x` hold NaN so that any accidental read poisons the
/// result instead of silently using a stale value.
struct MaskedDataset {
  Vector y;
  Matrix x;
  Mask mask;
  std::vector<std::string> covariate_names;
  std::string response_name = "y";

  int n() const { return static_cast<int>(x.rows()); }
  int p() const { return static_cast<int>(x.cols()); }

  bool row_complete(int i) const {
    for (int j = 0; j < p(); ++j) {
      if (!mask(i, j)) return false;
    }
    return true;
  }

  bool fully_observed() const { return mask.all(); }

  void validate() const {
    if (y.size() != x.rows() || x.rows() != mask.rows() || x.cols() != mask.cols()) {
      throw_validation("dimension_mismatch", "y, x, and mask disagree on dimensions");
    }
    if (static_cast<int>(covariate_names.size()) != p()) {
      throw_validation("dimension_mismatch", "covariate name count does not match column count");
    }
    for (int i = 0; i < n(); ++i) {
      bool any = false;
      for (int j = 0; j < p(); ++j) {
        any = any || mask(i, j);
      }
      if (!any) {
        throw_validation("empty_availability",
                         "row " + std::to_string(i) + " has no observed covariates");
      }
    }
  }
};

inline std::vector<std::string> default_covariate_names(int p) {
  std::vector<std::string> names;
  names.reserve(p);
  for (int j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

/// Observed column indices of row i.
inline AvailabilityPattern pattern_of(const MaskedDataset& ds, int i) {
  if (i < 0 || i >= ds.n()) {
    throw_validation("row_out_of_range", "row index " + std::to_string(i) + " out of range");
  }
  std::vector<int> obs;
  for (int j = 0; j < ds.p(); ++j) {
    if (ds.mask(i, j)) obs.push_back(j);
  }
  return AvailabilityPattern(std::move(obs));
}

/// Bandwidth selection: either a fixed h or h = n^exponent.
struct KernelSpec {
  enum class Rule { FixedH, PowerRule };

  Rule rule = Rule::PowerRule;
  double value = -1.0 / 3.0;  // h when FixedH, exponent when PowerRule

  static KernelSpec fixed(double h) { return KernelSpec{Rule::FixedH, h}; }
  static KernelSpec power_rule(double exponent = -1.0 / 3.0) {
    return KernelSpec{Rule::PowerRule, exponent};
  }

  double bandwidth(int n) const {
    if (rule == Rule::FixedH) {
      if (!(value > 0.0)) throw_validation("invalid_bandwidth", "fixed bandwidth must be positive");
      return value;
    }
    if (n <= 0) throw_validation("invalid_bandwidth", "bandwidth rule needs a positive sample size");
    return std::pow(static_cast<double>(n), value);
  }
};

// ---------------------------------------------------------------------------
// Standardization

/// Per-column location/scale removed by `standardize`; supports mapping
/// coefficients fitted on the scaled data back to the raw scale.
struct ScalingRecord {
  double y_mean = 0.0;
  double y_sd = 1.0;
  Vector x_mean;
  Vector x_sd;

  /// Maps coefficients fitted on standardized (y, x) back to the raw scale.
  /// Returns the raw-scale slopes and the implied intercept; on centered data
  /// these agree with an intercept-augmented least-squares fit of the raw data.
  std::pair<Vector, double> unscale_coefficients(const Vector& beta_std) const {
    if (beta_std.size() != x_mean.size()) {
      throw_validation("dimension_mismatch", "coefficient length does not match scaling record");
    }
    Vector slopes(beta_std.size());
    for (Eigen::Index j = 0; j < beta_std.size(); ++j) {
      slopes[j] = beta_std[j] * y_sd / x_sd[j];
    }
    const double intercept = y_mean - slopes.dot(x_mean);
    return {slopes, intercept};
  }
};

/// Centers and scales every covariate column and the response to
/// observed-cell mean 0 and sample standard deviation 1.
inline std::pair<MaskedDataset, ScalingRecord> standardize(const MaskedDataset& ds) {
  const int n = ds.n(), p = ds.p();
  ScalingRecord rec;
  rec.x_mean = Vector::Zero(p);
  rec.x_sd = Vector::Ones(p);

  MaskedDataset out = ds;
  for (int j = 0; j < p; ++j) {
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < n; ++i) {
      if (ds.mask(i, j)) {
        sum += ds.x(i, j);
        ++count;
      }
    }
    if (count < 2) {
      throw_validation("too_few_observed",
                       "column " + ds.covariate_names[j] + " has fewer than 2 observed values");
    }
    const double mean = sum / count;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      if (ds.mask(i, j)) {
        const double d = ds.x(i, j) - mean;
        ss += d * d;
      }
    }
    const double sd = std::sqrt(ss / (count - 1));
    if (!(sd > 0.0)) {
      throw_validation("constant_column",
                       "column " + ds.covariate_names[j] + " is constant on its observed cells");
    }
    rec.x_mean[j] = mean;
    rec.x_sd[j] = sd;
    for (int i = 0; i < n; ++i) {
      if (ds.mask(i, j)) out.x(i, j) = (ds.x(i, j) - mean) / sd;
    }
  }

  const double y_mean = ds.y.mean();
  const double y_ss = (ds.y.array() - y_mean).square().sum();
  const double y_sd = std::sqrt(y_ss / (n - 1));
  if (!(y_sd > 0.0)) {
    throw_validation("constant_column", "response " + ds.response_name + " is constant");
  }
  rec.y_mean = y_mean;
  rec.y_sd = y_sd;
  out.y = (ds.y.array() - y_mean) / y_sd;
  return {out, rec};
}

// ---------------------------------------------------------------------------
// CSV I/O
//
// UTF-8, comma-delimited, header row. One column is the response; every
// other column is a covariate. Missing covariate cells carry `na_token`.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline bool parse_double(const std::string& field, double& out) {
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Loads a masked dataset. Rows whose covariates are all missing and rows
/// with a missing response are rejected rather than dropped.
inline MaskedDataset load_csv(const std::string& path, const std::string& na_token = "NA",
                              const std::string& response_column = "y") {
  std::ifstream in(path);
  if (!in) throw_io("file_not_found", "cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw_io("empty_file", path + " has no header row");
  const auto header = detail::split_csv_line(line);

  int response_idx = -1;
  std::vector<std::string> covariate_names;
  std::vector<int> covariate_cols;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const std::string name = detail::trim(header[c]);
    if (name == response_column) {
      if (response_idx >= 0) throw_io("duplicate_response", "response column named twice in " + path);
      response_idx = c;
    } else {
      covariate_names.push_back(name);
      covariate_cols.push_back(c);
    }
  }
  if (response_idx < 0) {
    throw_io("missing_response_column",
             "no column named '" + response_column + "' in " + path);
  }
  if (covariate_cols.empty()) throw_io("no_covariates", path + " has no covariate columns");

  std::vector<double> ys;
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> masks;
  int row_number = 1;  // header = row 1
  while (std::getline(in, line)) {
    ++row_number;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw_io("malformed_row", path + ": row " + std::to_string(row_number) + " has " +
                                    std::to_string(fields.size()) + " fields, expected " +
                                    std::to_string(header.size()));
    }

    const std::string y_field = detail::trim(fields[response_idx]);
    if (y_field == na_token) {
      throw_validation("missing_response",
                       path + ": row " + std::to_string(row_number) + " has a missing response");
    }
    double y_val;
    if (!detail::parse_double(y_field, y_val)) {
      throw_io("parse_error", path + ": row " + std::to_string(row_number) + ", column '" +
                                  detail::trim(header[response_idx]) + "': cannot parse '" +
                                  y_field + "'");
    }

    std::vector<double> xrow(covariate_cols.size());
    std::vector<bool> mrow(covariate_cols.size());
    bool any_observed = false;
    for (std::size_t k = 0; k < covariate_cols.size(); ++k) {
      const std::string field = detail::trim(fields[covariate_cols[k]]);
      if (field == na_token) {
        xrow[k] = std::numeric_limits<double>::quiet_NaN();
        mrow[k] = false;
      } else {
        double v;
        if (!detail::parse_double(field, v)) {
          throw_io("parse_error", path + ": row " + std::to_string(row_number) + ", column '" +
                                      covariate_names[k] + "': cannot parse '" + field + "'");
        }
        xrow[k] = v;
        mrow[k] = true;
        any_observed = true;
      }
    }
    if (!any_observed) {
      throw_validation("empty_availability", path + ": row " + std::to_string(row_number) +
                                                 " has every covariate missing");
    }
    ys.push_back(y_val);
    rows.push_back(std::move(xrow));
    masks.push_back(std::move(mrow));
  }
  if (rows.empty()) throw_io("empty_file", path + " has no data rows");

  MaskedDataset ds;
  const int n = static_cast<int>(rows.size());
  const int p = static_cast<int>(covariate_cols.size());
  ds.y = Eigen::Map<Vector>(ys.data(), n);
  ds.x.resize(n, p);
  ds.mask.resize(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) {
      ds.x(i, j) = rows[i][j];
      ds.mask(i, j) = masks[i][j];
    }
  }
  ds.covariate_names = std::move(covariate_names);
  ds.response_name = response_column;
  ds.validate();
  return ds;
}

/// Writes a dataset in the format `load_csv` reads. Values use %.17g so a
/// round trip restores every double bit-exactly.
inline void write_csv(const MaskedDataset& ds, const std::string& path,
                      const std::string& na_token = "NA") {
  std::ofstream out(path);
  if (!out) throw_io("cannot_write", "cannot open " + path + " for writing");
  out << ds.response_name;
  for (const auto& name : ds.covariate_names) out << ',' << name;
  out << '\n';
  for (int i = 0; i < ds.n(); ++i) {
    out << detail::format_double(ds.y[i]);
    for (int j = 0; j < ds.p(); ++j) {
      out << ',';
      if (ds.mask(i, j)) {
        out << detail::format_double(ds.x(i, j));
      } else {
        out << na_token;
      }
    }
    out << '\n';
  }
  if (!out) throw_io("write_failed", "error while writing " + path);
}

}  // namespace prime
