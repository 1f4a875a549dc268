#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prime/core.hpp"
#include "prime/estimators.hpp"
#include "prime/metrics.hpp"
#include "prime/simgen.hpp"

namespace prime::cli {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

inline int exit_code(const Error& e) {
  switch (e.kind) {
    case ErrorKind::Validation: return 2;
    case ErrorKind::Estimator: return 3;
    case ErrorKind::Io: return 4;
  }
  return 1;
}

// ---------------------------------------------------------------------------
// Scenario config <-> JSON

namespace detail {

inline json pattern_group_to_json(const std::vector<AvailabilityPattern>& group) {
  json out = json::array();
  for (const auto& pattern : group) out.push_back(pattern.observed());
  return out;
}

inline std::vector<AvailabilityPattern> pattern_group_from_json(const json& arr,
                                                                const std::string& path) {
  if (!arr.is_array() || arr.empty()) {
    throw_validation("config", path + ": expected a non-empty array of index arrays");
  }
  std::vector<AvailabilityPattern> group;
  for (const auto& entry : arr) {
    if (!entry.is_array()) throw_validation("config", path + ": expected an array of column indices");
    group.emplace_back(entry.get<std::vector<int>>());
  }
  return group;
}

template <typename T>
T require_field(const json& doc, const std::string& key, const std::string& what) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw_validation("config", key + ": missing or not a valid " + what);
  }
}

}  // namespace detail

inline json scenario_config_to_json(const ScenarioConfig& cfg) {
  json doc;
  doc["n"] = cfg.n;
  doc["p"] = cfg.p;
  doc["beta0"] = std::vector<double>(cfg.beta0.data(), cfg.beta0.data() + cfg.beta0.size());
  doc["corr"] = cfg.corr == CorrStructure::Exchangeable ? "exchangeable" : "ar1";
  doc["rho"] = cfg.rho;
  doc["r_squared"] = cfg.r_squared;
  doc["missing"] = {{"a", cfg.missing.a},
                    {"b", cfg.missing.b},
                    {"c", cfg.missing.c},
                    {"group1", detail::pattern_group_to_json(cfg.missing.group1)},
                    {"group2", detail::pattern_group_to_json(cfg.missing.group2)}};
  doc["replications"] = cfg.replications;
  doc["seed"] = cfg.seed;
  return doc;
}

/// Builds a scenario from a config document: an optional "scenario" preset
/// name plus field-by-field overrides. Validation failures name the field.
inline ScenarioConfig scenario_config_from_json(const json& doc) {
  if (!doc.is_object()) throw_validation("config", "config root must be a JSON object");

  ScenarioConfig cfg;
  bool have_preset = false;
  if (doc.contains("scenario")) {
    cfg = scenario_preset(detail::require_field<std::string>(doc, "scenario", "string"));
    have_preset = true;
  }

  const json missing_doc = doc.contains("missing") ? doc.at("missing") : json::object();
  if (!missing_doc.is_object()) throw_validation("config", "missing: must be an object");
  const bool explicit_groups = missing_doc.contains("group1") || missing_doc.contains("group2");

  if (doc.contains("n")) cfg.n = detail::require_field<int>(doc, "n", "integer");
  if (doc.contains("p")) {
    cfg.p = detail::require_field<int>(doc, "p", "integer");
    if (have_preset && !doc.contains("beta0")) cfg.beta0 = preset_beta(cfg.p);
  }
  // Default pattern groups track the (possibly overridden) dimension.
  if (!explicit_groups && (cfg.missing.group1.empty() || doc.contains("p"))) {
    cfg.missing = default_missing_config(cfg.p, cfg.missing.a, cfg.missing.b, cfg.missing.c);
  }
  if (doc.contains("beta0")) {
    const auto v = detail::require_field<std::vector<double>>(doc, "beta0", "number array");
    cfg.beta0 = Eigen::Map<const Vector>(v.data(), v.size());
  }
  if (!have_preset && !doc.contains("beta0")) {
    throw_validation("config", "beta0: required when no scenario preset is named");
  }
  if (doc.contains("corr")) {
    const auto corr = detail::require_field<std::string>(doc, "corr", "string");
    if (corr == "exchangeable") {
      cfg.corr = CorrStructure::Exchangeable;
    } else if (corr == "ar1") {
      cfg.corr = CorrStructure::Ar1;
    } else {
      throw_validation("config", "corr: expected 'exchangeable' or 'ar1', got '" + corr + "'");
    }
  }
  if (doc.contains("rho")) cfg.rho = detail::require_field<double>(doc, "rho", "number");
  if (doc.contains("r_squared")) {
    cfg.r_squared = detail::require_field<double>(doc, "r_squared", "number");
  }
  if (missing_doc.contains("a")) cfg.missing.a = detail::require_field<double>(missing_doc, "a", "number");
  if (missing_doc.contains("b")) cfg.missing.b = detail::require_field<double>(missing_doc, "b", "number");
  if (missing_doc.contains("c")) cfg.missing.c = detail::require_field<double>(missing_doc, "c", "number");
  if (missing_doc.contains("group1")) {
    cfg.missing.group1 = detail::pattern_group_from_json(missing_doc.at("group1"), "missing.group1");
  }
  if (missing_doc.contains("group2")) {
    cfg.missing.group2 = detail::pattern_group_from_json(missing_doc.at("group2"), "missing.group2");
  }
  if (doc.contains("replications")) {
    cfg.replications = detail::require_field<int>(doc, "replications", "integer");
  }
  if (doc.contains("seed")) cfg.seed = detail::require_field<std::uint64_t>(doc, "seed", "integer");

  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(e.kind, e.code, std::string(e.what()));
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Small file helpers

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw_io("cannot_write", "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw_io("write_failed", "error while writing " + path.string());
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw_io("file_not_found", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw_io("parse_error", path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

inline std::string hash_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string rep_stem(int replication) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "rep_%04d", replication);
  return buf;
}

/// Runs fn(0..count-1) on `jobs` workers. Work items must be independent;
/// the first exception is rethrown after the pool drains.
inline void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector vector_from_json(const json& arr) {
  const auto v = arr.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), v.size());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Truth sidecars

inline void write_truth(const fs::path& path, const TruthRecord& truth, int replication) {
  json doc;
  doc["replication"] = replication;
  doc["beta0"] = detail::vector_to_json(truth.beta0);
  doc["sigma2"] = truth.sigma2;
  doc["r_squared"] = truth.r_squared;
  doc["epsilon"] = detail::vector_to_json(truth.epsilon);
  json rows = json::array();
  for (Eigen::Index i = 0; i < truth.x_full.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < truth.x_full.cols(); ++j) row.push_back(truth.x_full(i, j));
    rows.push_back(std::move(row));
  }
  doc["x_full"] = std::move(rows);
  detail::write_json(path, doc);
}

inline TruthRecord read_truth(const fs::path& path) {
  const json doc = detail::read_json(path);
  TruthRecord truth;
  truth.beta0 = detail::vector_from_json(doc.at("beta0"));
  truth.sigma2 = doc.at("sigma2").get<double>();
  truth.r_squared = doc.at("r_squared").get<double>();
  truth.epsilon = detail::vector_from_json(doc.at("epsilon"));
  const json& rows = doc.at("x_full");
  const int n = static_cast<int>(rows.size());
  const int p = n > 0 ? static_cast<int>(rows.at(0).size()) : 0;
  truth.x_full.resize(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) truth.x_full(i, j) = rows.at(i).at(j).get<double>();
  }
  return truth;
}

// ---------------------------------------------------------------------------
// Fit configuration

enum class Method { Prime, Sprime, Cc, Scc, Full };

inline Method parse_method(const std::string& name) {
  if (name == "prime") return Method::Prime;
  if (name == "sprime") return Method::Sprime;
  if (name == "cc") return Method::Cc;
  if (name == "scc") return Method::Scc;
  if (name == "full") return Method::Full;
  throw_validation("unknown_method", "unknown method '" + name + "'");
}

inline std::string method_name(Method m) {
  switch (m) {
    case Method::Prime: return "prime";
    case Method::Sprime: return "sprime";
    case Method::Cc: return "cc";
    case Method::Scc: return "scc";
    case Method::Full: return "full";
  }
  return "?";
}

struct FitFlags {
  std::string method = "prime";
  int b = 100;
  std::optional<double> bandwidth;  // fixed h; default is h = n^(-1/3)
  std::optional<double> lambda;     // fixed penalty; default is CV selection
  int folds = 10;
  std::uint64_t seed = 1;
  std::string na_token = "NA";
  bool standardize = false;
  bool dump_z = false;

  json to_json() const {
    json doc;
    doc["method"] = method;
    doc["b"] = b;
    if (bandwidth) doc["bandwidth"] = *bandwidth;
    if (lambda) doc["lambda"] = *lambda;
    doc["folds"] = folds;
    doc["seed"] = seed;
    doc["na_token"] = na_token;
    doc["standardize"] = standardize;
    doc["dump_z"] = dump_z;
    return doc;
  }

  static FitFlags from_json(const json& doc) {
    FitFlags flags;
    flags.method = doc.at("method").get<std::string>();
    flags.b = doc.at("b").get<int>();
    if (doc.contains("bandwidth")) flags.bandwidth = doc.at("bandwidth").get<double>();
    if (doc.contains("lambda")) flags.lambda = doc.at("lambda").get<double>();
    flags.folds = doc.at("folds").get<int>();
    flags.seed = doc.at("seed").get<std::uint64_t>();
    flags.na_token = doc.at("na_token").get<std::string>();
    flags.standardize = doc.value("standardize", false);
    flags.dump_z = doc.value("dump_z", false);
    return flags;
  }

  ImputeConfig impute_config() const {
    ImputeConfig cfg;
    cfg.method = ImputeMethod::ProjectiveResampling;
    cfg.projection.b = b;
    cfg.kernel = bandwidth ? KernelSpec::fixed(*bandwidth) : KernelSpec::power_rule();
    return cfg;
  }

  PenaltySpec penalty() const {
    PenaltySpec pen;
    if (lambda) {
      pen.lambda = FixedLambda{*lambda};
    } else {
      pen.lambda = CvPath{folds, 100};
    }
    return pen;
  }
};

struct FitOutput {
  Vector beta;
  std::vector<std::string> names;
  json diagnostics;
  std::optional<Matrix> z;
  std::optional<ImputationDiagnostics> impute_diag;
};

/// Fits one dataset with the requested method. The full-data baseline uses
/// the truth sidecar when the dataset itself has missing cells.
inline FitOutput fit_dataset(const MaskedDataset& input, Method method, const FitFlags& flags,
                             const TruthRecord* truth = nullptr) {
  MaskedDataset standardized;
  const MaskedDataset* ds = &input;
  json scaling = nullptr;
  if (flags.standardize) {
    auto [scaled, record] = standardize(input);
    standardized = std::move(scaled);
    ds = &standardized;
    scaling = {{"y_mean", record.y_mean},
               {"y_sd", record.y_sd},
               {"x_mean", detail::vector_to_json(record.x_mean)},
               {"x_sd", detail::vector_to_json(record.x_sd)}};
  }

  FitOutput out;
  out.names = ds->covariate_names;
  out.diagnostics["method"] = method_name(method);
  if (!scaling.is_null()) out.diagnostics["scaling"] = scaling;

  switch (method) {
    case Method::Prime: {
      FitResult fit = fit_prime(*ds, flags.impute_config(), flags.seed);
      out.beta = fit.beta;
      out.diagnostics["gram_condition"] = fit.gram_condition;
      out.diagnostics["estimating_residual_inf"] = fit.estimating_residual_inf;
      out.diagnostics["imputation"] = {{"imputed_cells", fit.imputation.imputed_cells},
                                       {"strict_cells", fit.imputation.cells_by_level[0]},
                                       {"relaxed_cells", fit.imputation.cells_by_level[1]},
                                       {"mean_fallback_cells", fit.imputation.cells_by_level[2]}};
      out.z = std::move(fit.z);
      out.impute_diag = std::move(fit.imputation);
      break;
    }
    case Method::Sprime: {
      auto [fit, sparsity] = fit_sprime(*ds, flags.impute_config(), flags.penalty(), flags.seed);
      const KktReport kkt = lasso_kkt(fit.z, ds->y, fit.beta, sparsity.lambda_chosen);
      out.beta = fit.beta;
      out.diagnostics["lambda"] = sparsity.lambda_chosen;
      out.diagnostics["active_set"] = sparsity.active_set;
      out.diagnostics["kkt"] = {{"max_inactive_excess", kkt.max_inactive_excess},
                                {"max_active_mismatch", kkt.max_active_mismatch}};
      out.diagnostics["imputation"] = {{"imputed_cells", fit.imputation.imputed_cells},
                                       {"strict_cells", fit.imputation.cells_by_level[0]},
                                       {"relaxed_cells", fit.imputation.cells_by_level[1]},
                                       {"mean_fallback_cells", fit.imputation.cells_by_level[2]}};
      out.z = std::move(fit.z);
      out.impute_diag = std::move(fit.imputation);
      break;
    }
    case Method::Cc: {
      CcFit fit = fit_cc(*ds);
      out.beta = fit.beta;
      out.diagnostics["complete_rows"] = fit.complete_rows;
      break;
    }
    case Method::Scc: {
      CcFit fit = fit_cc(*ds, flags.penalty(), flags.seed);
      out.beta = fit.beta;
      out.diagnostics["complete_rows"] = fit.complete_rows;
      out.diagnostics["lambda"] = *fit.lambda_chosen;
      break;
    }
    case Method::Full: {
      if (input.fully_observed()) {
        out.beta = fit_full_ols(ds->x, ds->y);
      } else if (truth) {
        // Rebuild the complete dataset from the pre-masking covariates so
        // standardization, when requested, sees consistent scales.
        MaskedDataset full_ds;
        full_ds.y = input.y;
        full_ds.x = truth->x_full;
        full_ds.mask = Mask::Constant(input.n(), input.p(), true);
        full_ds.covariate_names = input.covariate_names;
        if (flags.standardize) {
          auto [scaled_full, record] = standardize(full_ds);
          out.diagnostics["scaling"] = {{"y_mean", record.y_mean},
                                        {"y_sd", record.y_sd},
                                        {"x_mean", detail::vector_to_json(record.x_mean)},
                                        {"x_sd", detail::vector_to_json(record.x_sd)}};
          out.beta = fit_full_ols(scaled_full.x, scaled_full.y);
        } else {
          out.beta = fit_full_ols(full_ds.x, full_ds.y);
        }
      } else {
        throw_estimator("missing_cells",
                        "the full-data baseline needs a dataset without missing cells");
      }
      break;
    }
  }
  return out;
}

inline void write_fit_files(const FitOutput& fit, const fs::path& dir, const std::string& stem) {
  std::string coef_csv = "name,estimate\n";
  for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
    coef_csv += fit.names[j] + "," + prime::detail::format_double(fit.beta[j]) + "\n";
  }
  detail::write_text(dir / (stem + ".coef.csv"), coef_csv);

  json coef;
  coef["names"] = fit.names;
  coef["beta"] = detail::vector_to_json(fit.beta);
  detail::write_json(dir / (stem + ".coef.json"), coef);
  detail::write_json(dir / (stem + ".diag.json"), fit.diagnostics);

  if (fit.z) {
    std::string z_csv;
    for (const auto& name : fit.names) {
      z_csv += (z_csv.empty() ? "" : ",") + name;
    }
    z_csv += "\n";
    for (Eigen::Index i = 0; i < fit.z->rows(); ++i) {
      for (Eigen::Index j = 0; j < fit.z->cols(); ++j) {
        if (j) z_csv += ",";
        z_csv += prime::detail::format_double((*fit.z)(i, j));
      }
      z_csv += "\n";
    }
    detail::write_text(dir / (stem + ".imputed.csv"), z_csv);

    std::string diag_csv = "row,column,donor_count,fallback_level\n";
    const auto& d = *fit.impute_diag;
    for (Eigen::Index i = 0; i < d.donor_count.rows(); ++i) {
      for (Eigen::Index j = 0; j < d.donor_count.cols(); ++j) {
        if (d.donor_count(i, j) > 0 || d.fallback_level(i, j) > 0) {
          diag_csv += std::to_string(i) + "," + std::to_string(j) + "," +
                      std::to_string(d.donor_count(i, j)) + "," +
                      std::to_string(d.fallback_level(i, j)) + "\n";
        }
      }
    }
    detail::write_text(dir / (stem + ".impute_diag.csv"), diag_csv);
  }
}

// ---------------------------------------------------------------------------
// Commands

struct RunManifest {
  json doc;

  static RunManifest load(const fs::path& path) { return RunManifest{detail::read_json(path)}; }

  void save(const fs::path& path) const { detail::write_json(path, doc); }
};

/// Generates every replication dataset plus truth sidecars and the manifest.
inline RunManifest run_simulate(const json& config, const fs::path& out_dir, int jobs = 1) {
  const ScenarioConfig cfg = scenario_config_from_json(config);
  const json resolved = scenario_config_to_json(cfg);

  fs::create_directories(out_dir / "datasets");
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<std::string> outputs(2 * cfg.replications);
  detail::parallel_for(cfg.replications, jobs, [&](int r) {
    auto [ds, truth] = gen_scenario(cfg, r);
    const std::string stem = detail::rep_stem(r);
    const fs::path csv = out_dir / "datasets" / (stem + ".csv");
    const fs::path truth_path = out_dir / "datasets" / (stem + ".truth.json");
    write_csv(ds, csv);
    write_truth(truth_path, truth, r);
    outputs[2 * r] = "datasets/" + stem + ".csv";
    outputs[2 * r + 1] = "datasets/" + stem + ".truth.json";
  });
  const double elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  RunManifest manifest;
  manifest.doc["version"] = kVersion;
  manifest.doc["config"] = resolved;
  manifest.doc["config_hash"] = detail::hash_hex(resolved.dump());
  manifest.doc["seed"] = cfg.seed;
  manifest.doc["steps"] = json::array({json{{"command", "simulate"}, {"outputs", outputs}}});
  manifest.doc["timings_ms"] = {{"simulate", elapsed_ms}};
  manifest.save(out_dir / "manifest.json");
  return manifest;
}

/// Fits one standalone dataset file; writes coefficient and diagnostic files
/// into out_dir.
inline void run_fit_file(const fs::path& data, const FitFlags& flags, const fs::path& out_dir) {
  const Method method = parse_method(flags.method);
  const MaskedDataset ds = load_csv(data.string(), flags.na_token);
  fs::create_directories(out_dir);
  FitOutput fit = fit_dataset(ds, method, flags);
  if (!flags.dump_z) {
    fit.z.reset();
    fit.impute_diag.reset();
  }
  write_fit_files(fit, out_dir, "fit");
}

/// Fits every replication dataset of a simulated run.
inline void run_fit_run(const fs::path& run_dir, const FitFlags& flags, int jobs = 1) {
  const Method method = parse_method(flags.method);
  const fs::path manifest_path = run_dir / "manifest.json";
  RunManifest manifest = RunManifest::load(manifest_path);
  const int reps = manifest.doc.at("config").at("replications").get<int>();

  const fs::path fit_dir = run_dir / "fits" / flags.method;
  fs::create_directories(fit_dir);
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<std::string> outputs(reps);
  detail::parallel_for(reps, jobs, [&](int r) {
    const std::string stem = detail::rep_stem(r);
    const MaskedDataset ds =
        load_csv((run_dir / "datasets" / (stem + ".csv")).string(), flags.na_token);
    const TruthRecord truth = read_truth(run_dir / "datasets" / (stem + ".truth.json"));
    FitOutput fit = fit_dataset(ds, method, flags, &truth);
    if (!flags.dump_z) {
      fit.z.reset();
      fit.impute_diag.reset();
    }
    write_fit_files(fit, fit_dir, stem);
    outputs[r] = "fits/" + flags.method + "/" + stem + ".coef.json";
  });
  const double elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  // Re-read the manifest to append this step; fits of different methods may
  // have landed in between.
  manifest = RunManifest::load(manifest_path);
  manifest.doc["steps"].push_back(
      json{{"command", "fit"}, {"flags", flags.to_json()}, {"outputs", outputs}});
  manifest.doc["timings_ms"]["fit:" + flags.method] = elapsed_ms;
  manifest.save(manifest_path);
}

/// Aggregates fitted coefficients against the truth sidecars and writes the
/// metrics report (JSON and one flat CSV row per method/metric/coefficient).
inline void run_evaluate(const fs::path& run_dir) {
  const fs::path manifest_path = run_dir / "manifest.json";
  RunManifest manifest = RunManifest::load(manifest_path);
  const int reps = manifest.doc.at("config").at("replications").get<int>();

  if (!fs::exists(run_dir / "datasets" / (detail::rep_stem(0) + ".truth.json"))) {
    throw_validation("missing_truth", "run has no truth sidecars; cannot evaluate");
  }

  Vector beta0;
  std::vector<Vector> beta_full_by_rep(reps);
  for (int r = 0; r < reps; ++r) {
    const TruthRecord truth = read_truth(run_dir / "datasets" / (detail::rep_stem(r) + ".truth.json"));
    if (r == 0) {
      beta0 = truth.beta0;
    } else if ((truth.beta0 - beta0).cwiseAbs().maxCoeff() != 0.0) {
      throw_validation("inconsistent_truth", "replications disagree on the true coefficients");
    }
  }

  std::vector<std::string> methods;
  if (fs::exists(run_dir / "fits")) {
    for (const auto& entry : fs::directory_iterator(run_dir / "fits")) {
      if (entry.is_directory()) methods.push_back(entry.path().filename().string());
    }
  }
  std::sort(methods.begin(), methods.end());
  if (methods.empty()) throw_validation("no_fits", "run has no fits to evaluate");

  std::vector<ReplicationRecord> records;
  std::map<std::string, std::vector<Vector>> by_method;
  for (const auto& method : methods) {
    for (int r = 0; r < reps; ++r) {
      const fs::path coef = run_dir / "fits" / method / (detail::rep_stem(r) + ".coef.json");
      if (!fs::exists(coef)) {
        throw_validation("incomplete_fits", "method " + method + " is missing replication " +
                                                std::to_string(r));
      }
      Vector beta = detail::vector_from_json(detail::read_json(coef).at("beta"));
      records.push_back(ReplicationRecord{method, r, beta});
      by_method[method].push_back(std::move(beta));
    }
  }

  const bool any_nonzero_truth = (beta0.array() != 0.0).any();
  const bool have_full = by_method.count("full") > 0;

  json report;
  report["replications"] = reps;
  report["beta0"] = detail::vector_to_json(beta0);

  // The full-data benchmark never competes for the optimal rate.
  std::vector<ReplicationRecord> contenders;
  for (const auto& rec : records) {
    if (rec.method != "full") contenders.push_back(rec);
  }
  std::map<std::string, double> rates;
  if (by_method.size() - (have_full ? 1 : 0) >= 2) rates = optimal_rate(contenders, beta0);
  std::map<std::string, Vector> rank_means;
  if (by_method.size() >= 2 && any_nonzero_truth) rank_means = nad_rank_means(records, beta0);

  std::string csv = "method,metric,coefficient,value\n";
  auto add_row = [&](const std::string& method, const std::string& metric,
                     const std::string& coefficient, double value) {
    csv += method + "," + metric + "," + coefficient + "," +
           prime::detail::format_double(value) + "\n";
  };

  report["methods"] = json::object();
  for (const auto& [method, betas] : by_method) {
    json entry;
    const MseDecomposition mse = mse_decomposed(betas, beta0);
    entry["mse"] = mse.mse;
    entry["variance"] = mse.variance;
    entry["bias_sq"] = mse.bias_sq;
    add_row(method, "mse", "", mse.mse);
    add_row(method, "variance", "", mse.variance);
    add_row(method, "bias_sq", "", mse.bias_sq);

    if (any_nonzero_truth) {
      const Vector nad_values = nad(betas, beta0);
      json nad_json = json::array();
      for (Eigen::Index j = 0; j < nad_values.size(); ++j) {
        if (std::isnan(nad_values[j])) {
          nad_json.push_back(nullptr);
        } else {
          nad_json.push_back(nad_values[j]);
          add_row(method, "nad", "x" + std::to_string(j + 1), nad_values[j]);
        }
      }
      entry["nad"] = std::move(nad_json);
    }
    if (rates.count(method)) {
      entry["optimal_rate"] = rates[method];
      add_row(method, "optimal_rate", "", rates[method]);
    }
    if (rank_means.count(method)) {
      json rank_json = json::array();
      for (Eigen::Index j = 0; j < rank_means[method].size(); ++j) {
        const double v = rank_means[method][j];
        if (std::isnan(v)) {
          rank_json.push_back(nullptr);
        } else {
          rank_json.push_back(v);
          add_row(method, "nad_rank_mean", "x" + std::to_string(j + 1), v);
        }
      }
      entry["nad_rank_mean"] = std::move(rank_json);
    }
    if (have_full && method != "full") {
      double acc = 0.0;
      for (int r = 0; r < reps; ++r) {
        acc += mse_vs_full({betas[r]}, by_method.at("full")[r]);
      }
      entry["mse_vs_full"] = acc / reps;
      add_row(method, "mse_vs_full", "", acc / reps);
    }
    report["methods"][method] = std::move(entry);
  }

  fs::create_directories(run_dir / "metrics");
  detail::write_json(run_dir / "metrics" / "metrics.json", report);
  detail::write_text(run_dir / "metrics" / "metrics.csv", csv);

  manifest = RunManifest::load(manifest_path);
  manifest.doc["steps"].push_back(json{
      {"command", "evaluate"},
      {"outputs", json::array({"metrics/metrics.json", "metrics/metrics.csv"})}});
  manifest.save(manifest_path);
}

/// Replays every step recorded in a manifest into a fresh directory.
inline void run_reproduce(const fs::path& manifest_path, const fs::path& out_dir, int jobs = 1) {
  const RunManifest manifest = RunManifest::load(manifest_path);
  if (!manifest.doc.contains("steps")) {
    throw_validation("bad_manifest", "manifest has no steps to replay");
  }
  for (const json& step : manifest.doc.at("steps")) {
    const std::string command = step.at("command").get<std::string>();
    if (command == "simulate") {
      run_simulate(manifest.doc.at("config"), out_dir, jobs);
    } else if (command == "fit") {
      run_fit_run(out_dir, FitFlags::from_json(step.at("flags")), jobs);
    } else if (command == "evaluate") {
      run_evaluate(out_dir);
    } else {
      throw_validation("bad_manifest", "manifest step has unknown command '" + command + "'");
    }
  }
}

}  // namespace prime::cli
