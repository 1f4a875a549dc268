// Acceptance suite: one check per release criterion, one PASS/FAIL line each.
// Exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "prime/cli.hpp"
#include "prime/prime.hpp"

using namespace prime;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double replication_mse(const Vector& beta_hat, const Vector& beta0) {
  return (beta_hat - beta0).squaredNorm() / beta0.size();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// --- criterion 1 -----------------------------------------------------------
// On fully observed data the imputing estimator, the complete-case fit, and
// plain least squares coincide; the penalized fit at lambda = 0 joins them.

Outcome reduction_suite() {
  Rng rng(1001);
  const int n = 80, p = 6;
  MaskedDataset ds;
  ds.x.resize(n, p);
  ds.y.resize(n);
  ds.mask = Mask::Constant(n, p, true);
  ds.covariate_names = default_covariate_names(p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) ds.x(i, j) = rng.normal();
    ds.y[i] = 0.5 * ds.x(i, 0) - 1.5 * ds.x(i, 3) + rng.normal();
  }

  ImputeConfig impute;
  impute.projection.b = 100;
  const Vector ols = fit_full_ols(ds.x, ds.y);
  const FitResult prime_fit = fit_prime(ds, impute, 1);
  const CcFit cc = fit_cc(ds);
  PenaltySpec pen;
  pen.lambda = FixedLambda{0.0};
  const auto [sprime_fit, report] = fit_sprime(ds, impute, pen, 1);

  double worst_exact = 0.0, worst_lasso = 0.0;
  for (int j = 0; j < p; ++j) {
    worst_exact = std::max(worst_exact, std::abs(prime_fit.beta[j] - ols[j]));
    worst_exact = std::max(worst_exact, std::abs(cc.beta[j] - ols[j]));
    worst_lasso = std::max(worst_lasso, std::abs(sprime_fit.beta[j] - ols[j]));
  }
  const bool pass = worst_exact < 1e-10 && worst_lasso < 1e-8;
  return {pass, "max |closed-form - ols| = " + fmt(worst_exact) +
                    " (tol 1e-10), max |lasso(0) - ols| = " + fmt(worst_lasso) + " (tol 1e-8)"};
}

// --- criterion 2 -----------------------------------------------------------
// The geometric-mean projected kernel approaches the multivariate Gaussian
// kernel as the direction count grows.

Outcome kernel_identity() {
  const double h = 2.0;
  const int triples = 200;
  const std::vector<int> direction_counts = {10, 100, 2000};
  Rng rng(2002);

  std::vector<std::vector<double>> rel_err(direction_counts.size());
  for (int t = 0; t < triples; ++t) {
    const int dim = 1 + static_cast<int>(rng.uniform_index(8));
    std::vector<int> cols(dim);
    std::iota(cols.begin(), cols.end(), 0);
    const AvailabilityPattern pattern(cols);

    Vector diff(dim);
    for (int k = 0; k < dim; ++k) diff[k] = rng.normal() - rng.normal();
    const double plain_log = log_product_kernel(diff, h);

    for (std::size_t bi = 0; bi < direction_counts.size(); ++bi) {
      ProjectionSpec spec;
      spec.b = direction_counts[bi];
      spec.seed = combine_seed(555, static_cast<std::uint64_t>(t),
                               static_cast<std::uint64_t>(direction_counts[bi]));
      const DirectionSet dirs = sample_directions(spec, pattern);
      const double projected_log = log_geo_kernel(dirs, dirs.v * diff, h);
      rel_err[bi].push_back(std::abs(std::expm1(projected_log - plain_log)));
    }
  }

  std::vector<double> medians;
  for (auto& errs : rel_err) medians.push_back(median(errs));
  const bool decreasing = medians[0] > medians[1] && medians[1] > medians[2];
  const bool small = medians[2] < 0.05;
  return {decreasing && small,
          "median relative weight error: B=10 -> " + fmt(medians[0]) + ", B=100 -> " +
              fmt(medians[1]) + ", B=2000 -> " + fmt(medians[2]) + " (tol 0.05, decreasing)"};
}

// --- criterion 3 -----------------------------------------------------------
// Every penalized fit carries a stationarity certificate.

Outcome lasso_certification() {
  Rng rng(3003);
  double worst_inactive = 0.0, worst_active = 0.0;
  for (int instance = 0; instance < 100; ++instance) {
    ScenarioConfig cfg = scenario1();
    cfg.n = 60 + static_cast<int>(rng.uniform_index(60));
    cfg.p = 12;
    cfg.beta0 = preset_beta(12);
    cfg.r_squared = 0.1 + 0.1 * static_cast<double>(rng.uniform_index(9));
    const auto abc = missing_rate_params(60, cfg.r_squared);
    cfg.missing = default_missing_config(12, abc[0], abc[1], abc[2]);
    cfg.seed = 40000 + instance;
    auto [ds, truth] = gen_scenario(cfg, 0);

    ImputeConfig impute;
    impute.projection.b = 32;
    PenaltySpec pen;
    if (instance % 5 == 0) {
      pen.lambda = CvPath{5, 30};
    } else {
      pen.lambda = FixedLambda{rng.uniform(0.005, 2.0)};
    }
    const auto [fit, report] = fit_sprime(ds, impute, pen, cfg.seed);
    const KktReport kkt = lasso_kkt(fit.z, ds.y, fit.beta, report.lambda_chosen);
    worst_inactive = std::max(worst_inactive, kkt.max_inactive_excess);
    worst_active = std::max(worst_active, kkt.max_active_mismatch);
  }
  const bool pass = worst_inactive <= 1e-8 && worst_active <= 1e-8;
  return {pass, "worst zero-coefficient excess = " + fmt(worst_inactive) +
                    ", worst active mismatch = " + fmt(worst_active) + " (tol 1e-8, 100 fits)"};
}

// --- criterion 4 -----------------------------------------------------------
// Generator calibration at scale.

Outcome generator_calibration() {
  ScenarioConfig cfg = scenario1();
  cfg.n = 100000;
  cfg.r_squared = 0.5;
  const auto abc = missing_rate_params(90, 0.5);
  cfg.missing = default_missing_config(cfg.p, abc[0], abc[1], abc[2]);
  cfg.seed = 4004;
  auto [ds, truth] = gen_scenario(cfg, 0);

  int incomplete = 0;
  for (int i = 0; i < cfg.n; ++i) incomplete += ds.row_complete(i) ? 0 : 1;
  const double rate = static_cast<double>(incomplete) / cfg.n;

  const Vector signal = truth.x_full * truth.beta0;
  const double mean_s = signal.mean();
  const double var_s = (signal.array() - mean_s).square().sum() / (cfg.n - 1);
  const double mean_e = truth.epsilon.mean();
  const double var_e = (truth.epsilon.array() - mean_e).square().sum() / (cfg.n - 1);
  const double r2 = var_s / (var_s + var_e);

  const bool pass = std::abs(rate - 0.90) <= 0.03 && std::abs(r2 - 0.5) <= 0.01;
  return {pass, "incomplete-row fraction = " + fmt(rate) + " (target 0.90 +/- 0.03), empirical R^2 = " +
                    fmt(r2) + " (target 0.5 +/- 0.01)"};
}

// --- criterion 5 -----------------------------------------------------------
// Imputation beats complete-case analysis across noise levels.

Outcome scenario1_direction() {
  const int reps = 50;
  std::string detail;
  bool pass = true;
  for (double r2 : {0.2, 0.5, 0.8}) {
    ScenarioConfig cfg = scenario1();
    cfg.n = 200;
    cfg.r_squared = r2;
    const auto abc = missing_rate_params(60, r2);
    cfg.missing = default_missing_config(cfg.p, abc[0], abc[1], abc[2]);
    cfg.seed = 5005;
    cfg.replications = reps;

    ImputeConfig impute;
    impute.projection.b = 100;

    double mse_prime = 0.0, mse_cc = 0.0;
    std::vector<ReplicationRecord> records;
    for (int r = 0; r < reps; ++r) {
      auto [ds, truth] = gen_scenario(cfg, r);
      const FitResult prime_fit = fit_prime(ds, impute, cfg.seed + r);
      const CcFit cc = fit_cc(ds);
      mse_prime += replication_mse(prime_fit.beta, truth.beta0) / reps;
      mse_cc += replication_mse(cc.beta, truth.beta0) / reps;
      records.push_back({"prime", r, prime_fit.beta});
      records.push_back({"cc", r, cc.beta});
    }
    const auto rates = optimal_rate(records, cfg.beta0);
    const bool ordered = mse_prime < mse_cc;
    const bool mostly_best = rates.at("prime") > 0.5;
    pass = pass && ordered && mostly_best;
    detail += "R^2=" + fmt(r2) + ": mse " + fmt(mse_prime) + " vs cc " + fmt(mse_cc) +
              ", win rate " + fmt(rates.at("prime")) + "; ";
  }
  return {pass, detail + "(need mse(prime) < mse(cc) and win rate > 0.5 at every R^2)"};
}

// --- criterion 6 -----------------------------------------------------------
// The sparse variant beats the penalized complete-case fit rep by rep.

Outcome scenario3_direction() {
  const int reps = 50;
  ScenarioConfig cfg = scenario3();
  cfg.replications = reps;
  cfg.seed = 6006;

  ImputeConfig impute;
  impute.projection.b = 100;
  PenaltySpec pen;  // cross-validated path, 10 folds

  int sprime_wins = 0;
  double mse_sprime = 0.0, mse_scc = 0.0;
  for (int r = 0; r < reps; ++r) {
    auto [ds, truth] = gen_scenario(cfg, r);
    const auto [fit, report] = fit_sprime(ds, impute, pen, cfg.seed + r);
    const CcFit scc = fit_cc(ds, pen, cfg.seed + r);
    const double a = replication_mse(fit.beta, truth.beta0);
    const double b = replication_mse(scc.beta, truth.beta0);
    mse_sprime += a / reps;
    mse_scc += b / reps;
    if (a < b) ++sprime_wins;
  }
  const double win_rate = static_cast<double>(sprime_wins) / reps;
  return {win_rate >= 0.6, "sparse-fit wins " + fmt(win_rate) +
                               " of replications (need >= 0.6); mean mse " + fmt(mse_sprime) +
                               " vs penalized complete-case " + fmt(mse_scc)};
}

// --- criterion 7 -----------------------------------------------------------
// Median error does not grow with the sample size.

Outcome consistency_trend() {
  const int reps = 50;
  std::vector<double> medians;
  for (int n : {100, 200, 400}) {
    ScenarioConfig cfg = scenario1();
    cfg.n = n;
    cfg.r_squared = 0.5;
    const auto abc = missing_rate_params(60, 0.5);
    cfg.missing = default_missing_config(cfg.p, abc[0], abc[1], abc[2]);
    cfg.seed = 7007;
    cfg.replications = reps;

    ImputeConfig impute;
    impute.projection.b = 100;

    std::vector<double> mses;
    for (int r = 0; r < reps; ++r) {
      auto [ds, truth] = gen_scenario(cfg, r);
      const FitResult fit = fit_prime(ds, impute, cfg.seed + r);
      mses.push_back(replication_mse(fit.beta, truth.beta0));
    }
    medians.push_back(median(mses));
  }

  int violations = 0;
  double worst_step = 0.0;
  for (std::size_t k = 1; k < medians.size(); ++k) {
    if (medians[k] > medians[k - 1]) {
      ++violations;
      worst_step = std::max(worst_step, (medians[k] - medians[k - 1]) / medians[k - 1]);
    }
  }
  const bool pass = violations <= 1 && worst_step <= 0.05;
  return {pass, "median mse by n: " + fmt(medians[0]) + " (100), " + fmt(medians[1]) + " (200), " +
                    fmt(medians[2]) + " (400); violations = " + std::to_string(violations) +
                    ", worst step +" + fmt(worst_step * 100.0) + "% (allow <= 1 step of <= 5%)"};
}

// --- criterion 8 -----------------------------------------------------------
// Metric identities on fuzzed inputs.

Outcome metric_identities() {
  Rng rng(8008);
  double worst_identity = 0.0, worst_rate_sum = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int p = 1 + static_cast<int>(rng.uniform_index(10));
    const int n_reps = 2 + static_cast<int>(rng.uniform_index(10));
    const int n_methods = 2 + static_cast<int>(rng.uniform_index(3));
    Vector beta0(p);
    for (int j = 0; j < p; ++j) beta0[j] = 4.0 * rng.normal();

    std::vector<ReplicationRecord> records;
    for (int m = 0; m < n_methods; ++m) {
      for (int r = 0; r < n_reps; ++r) {
        Vector b(p);
        for (int j = 0; j < p; ++j) b[j] = 4.0 * rng.normal();
        records.push_back({"m" + std::to_string(m), r, std::move(b)});
      }
    }

    std::map<std::string, std::vector<Vector>> grouped;
    for (const auto& rec : records) grouped[rec.method].push_back(rec.beta_hat);
    for (const auto& [name, betas] : grouped) {
      const MseDecomposition d = mse_decomposed(betas, beta0);
      worst_identity = std::max(worst_identity, std::abs(d.mse - d.variance - d.bias_sq));
    }
    double total = 0.0;
    for (const auto& [name, rate] : optimal_rate(records, beta0)) total += rate;
    worst_rate_sum = std::max(worst_rate_sum, std::abs(total - 1.0));
  }
  const bool pass = worst_identity <= 1e-10 && worst_rate_sum <= 1e-12;
  return {pass, "worst |mse - variance - bias^2| = " + fmt(worst_identity) +
                    " (tol 1e-10), worst |sum(rates) - 1| = " + fmt(worst_rate_sum) +
                    " (tol 1e-12), 1000 fuzz cases"};
}

// --- criterion 9 -----------------------------------------------------------
// Replaying a manifest reproduces every numeric output byte for byte.

Outcome determinism() {
  const fs::path base = fs::temp_directory_path() / "prime_acceptance_determinism";
  fs::remove_all(base);
  const fs::path original = base / "run";
  const fs::path replay = base / "replay";

  nlohmann::json config;
  config["scenario"] = "scenario1";
  config["n"] = 60;
  config["replications"] = 3;
  config["seed"] = 909;
  cli::run_simulate(config, original, /*jobs=*/2);
  cli::FitFlags flags;
  flags.b = 50;
  flags.seed = 11;
  for (const char* method : {"prime", "cc", "full"}) {
    flags.method = method;
    cli::run_fit_run(original, flags, /*jobs=*/2);
  }
  cli::run_evaluate(original);

  cli::run_reproduce(original / "manifest.json", replay, /*jobs=*/1);

  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(original)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), original);
    if (rel == "manifest.json") continue;  // carries wall-clock timings
    std::ifstream a(entry.path(), std::ios::binary), b(replay / rel, std::ios::binary);
    if (!b) return {false, "missing replayed file " + rel.string()};
    std::ostringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    if (sa.str() != sb.str()) return {false, "replayed bytes differ in " + rel.string()};
    ++compared;
  }
  return {true, "replayed run matches byte-for-byte across " + std::to_string(compared) +
                    " files (manifest timings excluded)"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "reduction suite", reduction_suite},
      {2, "projected-kernel identity", kernel_identity},
      {3, "lasso stationarity certification", lasso_certification},
      {4, "generator calibration", generator_calibration},
      {5, "scenario 1 ordering", scenario1_direction},
      {6, "scenario 3 ordering", scenario3_direction},
      {7, "consistency trend", consistency_trend},
      {8, "metric identities", metric_identities},
      {9, "manifest determinism", determinism},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criterion.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d (%s): %s [%.1fs] — %s\n", criterion.id, criterion.name,
                outcome.pass ? "PASS" : "FAIL", seconds, outcome.detail.c_str());
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  }
  if (failures > 0) {
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return 1;
  }
  std::printf("all %zu criteria passed\n", criteria.size());
  return 0;
}
