// Command-line front end: simulate | fit | evaluate | reproduce.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "prime/cli.hpp"
#include "prime/prime.hpp"

namespace {

using nlohmann::json;

void report_error(const prime::Error& e) {
  json err;
  err["error"] = {{"kind", e.kind == prime::ErrorKind::Validation ? "validation"
                           : e.kind == prime::ErrorKind::Estimator ? "estimator"
                                                                   : "io"},
                  {"code", e.code},
                  {"message", e.what()}};
  std::cerr << err.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Projective-resampling kernel imputation for regression with missing covariates"};
  app.require_subcommand(1);
  app.set_version_flag("--version", prime::cli::kVersion);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate replication datasets for a scenario");
  std::string sim_config_path;
  std::string sim_scenario;
  std::string sim_out;
  std::optional<std::uint64_t> sim_seed;
  std::optional<int> sim_reps;
  int sim_jobs = 1;
  simulate->add_option("--config", sim_config_path, "scenario config JSON file");
  simulate->add_option("--scenario", sim_scenario, "scenario preset name (scenario1|scenario2|scenario3)");
  simulate->add_option("--out", sim_out, "output run directory")->required();
  simulate->add_option("--seed", sim_seed, "override the config seed");
  simulate->add_option("--reps", sim_reps, "override the replication count");
  simulate->add_option("--jobs", sim_jobs, "worker threads");

  // fit
  auto* fit = app.add_subcommand("fit", "fit one dataset or every replication of a run");
  std::string fit_data, fit_run, fit_out;
  prime::cli::FitFlags flags;
  std::optional<double> fit_bandwidth, fit_lambda;
  int fit_jobs = 1;
  fit->add_option("--data", fit_data, "dataset CSV (single-file mode)");
  fit->add_option("--run", fit_run, "run directory (batch mode)");
  fit->add_option("--out", fit_out, "output directory for single-file mode");
  fit->add_option("--method", flags.method, "prime|sprime|cc|scc|full")->required();
  fit->add_option("--b", flags.b, "projection direction count");
  fit->add_option("--bandwidth", fit_bandwidth, "fixed kernel bandwidth (default n^(-1/3))");
  fit->add_option("--lambda", fit_lambda, "fixed penalty level (default: cross-validated)");
  fit->add_option("--folds", flags.folds, "cross-validation folds");
  fit->add_option("--seed", flags.seed, "seed for directions and fold assignment");
  fit->add_option("--na-token", flags.na_token, "missing-value token");
  fit->add_flag("--standardize", flags.standardize, "standardize response and covariates first");
  fit->add_flag("--dump-z", flags.dump_z, "write the imputed design and per-cell diagnostics");
  fit->add_option("--jobs", fit_jobs, "worker threads (batch mode)");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "aggregate fits of a run into a metrics report");
  std::string eval_run;
  evaluate->add_option("--run", eval_run, "run directory")->required();

  // reproduce
  auto* reproduce = app.add_subcommand("reproduce", "replay a recorded manifest");
  std::string repro_manifest, repro_out;
  int repro_jobs = 1;
  reproduce->add_option("--manifest", repro_manifest, "manifest.json of a previous run")->required();
  reproduce->add_option("--out", repro_out, "directory for the replayed run")->required();
  reproduce->add_option("--jobs", repro_jobs, "worker threads");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      json config = json::object();
      if (!sim_config_path.empty()) config = prime::cli::detail::read_json(sim_config_path);
      if (!sim_scenario.empty()) config["scenario"] = sim_scenario;
      if (!config.contains("scenario") && !config.contains("beta0")) {
        prime::throw_validation("config", "scenario: name a preset or supply a full config");
      }
      if (sim_seed) config["seed"] = *sim_seed;
      if (sim_reps) config["replications"] = *sim_reps;
      prime::cli::run_simulate(config, sim_out, sim_jobs);
    } else if (fit->parsed()) {
      flags.bandwidth = fit_bandwidth;
      flags.lambda = fit_lambda;
      if (fit_data.empty() == fit_run.empty()) {
        prime::throw_validation("config", "fit needs exactly one of --data or --run");
      }
      if (!fit_data.empty()) {
        if (fit_out.empty()) prime::throw_validation("config", "--out is required with --data");
        prime::cli::run_fit_file(fit_data, flags, fit_out);
      } else {
        prime::cli::run_fit_run(fit_run, flags, fit_jobs);
      }
    } else if (evaluate->parsed()) {
      prime::cli::run_evaluate(eval_run);
    } else if (reproduce->parsed()) {
      prime::cli::run_reproduce(repro_manifest, repro_out, repro_jobs);
    }
  } catch (const prime::Error& e) {
    report_error(e);
    return prime::cli::exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << R"({"error":{"kind":"internal","message":")" << e.what() << "\"}}\n";
    return 1;
  }
  return 0;
}
