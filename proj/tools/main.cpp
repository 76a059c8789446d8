// cvarmdp command-line front end.
//
// Subcommands: validate, evaluate, solve, global, sweep-beta, maximize.
// Models and portfolio configurations are JSON documents; results are
// written as JSON/CSV artifacts plus a run manifest into --out. Exit
// codes: 0 success, 2 input errors (missing/unparseable files or flags),
// 3 model errors (validation, dimension, ergodicity), 4 solver errors.

#include "cvarmdp/cvarmdp.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr const char* kToolVersion = "0.1.0";

using namespace cvarmdp;
using nlohmann::json;

struct CommonOptions {
  std::string model_path;
  std::string scenario;
  std::string config_path;
  double alpha = 0.66;
  bool alpha_set = false;
  std::string out_dir;
};

struct LoadedModel {
  MdpModel model;
  double alpha;
  std::optional<PortfolioMdp> portfolio;
  std::vector<std::string> inputs;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool out_required) {
  auto* model = cmd->add_option("--model", opts.model_path,
                                "Path to an MDP model JSON document");
  auto* scenario = cmd->add_option("--scenario", opts.scenario,
                                   "Built-in scenario (portfolio)");
  cmd->add_option("--config", opts.config_path,
                  "Portfolio configuration JSON (with --scenario)");
  cmd->add_option("--alpha", opts.alpha, "CVaR probability level in (0,1)")
      ->check(CLI::Range(1e-12, 1.0 - 1e-12))
      ->each([&opts](const std::string&) { opts.alpha_set = true; });
  auto* out = cmd->add_option("--out", opts.out_dir, "Output directory");
  if (out_required) out->required();
  model->excludes(scenario);
}

LoadedModel load_input(const CommonOptions& opts) {
  if (!opts.scenario.empty()) {
    if (opts.scenario != "portfolio") {
      throw IoError("unknown scenario: " + opts.scenario);
    }
    PortfolioConfig config = opts.config_path.empty()
                                 ? default_config()
                                 : io::load_config(opts.config_path);
    if (opts.alpha_set) config.alpha = opts.alpha;
    PortfolioMdp built = build_mdp(config);
    LoadedModel loaded{built.model, config.alpha, std::move(built), {}};
    if (!opts.config_path.empty()) loaded.inputs.push_back(opts.config_path);
    return loaded;
  }
  if (opts.model_path.empty()) {
    throw IoError("either --model or --scenario is required");
  }
  MdpModel model = io::load_model(opts.model_path);
  return LoadedModel{std::move(model), opts.alpha, std::nullopt,
                     {opts.model_path}};
}

class ManifestWriter {
 public:
  ManifestWriter(std::string command, const LoadedModel& loaded,
                 const CommonOptions& opts)
      : start_(std::chrono::steady_clock::now()), out_dir_(opts.out_dir) {
    manifest_["command"] = std::move(command);
    manifest_["inputs"] = loaded.inputs;
    manifest_["tool_version"] = kToolVersion;
    manifest_["output_dir"] = out_dir_;
    manifest_["parameters"]["alpha"] = loaded.alpha;
    if (!opts.scenario.empty()) manifest_["scenario"] = opts.scenario;
  }

  json& parameters() { return manifest_["parameters"]; }

  void write() {
    if (out_dir_.empty()) return;
    const auto elapsed = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start_)
                             .count();
    manifest_["duration_seconds"] = elapsed;
    std::filesystem::create_directories(out_dir_);
    io::write_text_file(out_dir_ + "/manifest.json", manifest_.dump(2) + "\n");
  }

 private:
  std::chrono::steady_clock::time_point start_;
  std::string out_dir_;
  json manifest_;
};

void write_artifact(const std::string& out_dir, const std::string& name,
                    const std::string& body) {
  std::filesystem::create_directories(out_dir);
  io::write_text_file(out_dir + "/" + name, body);
}

// Distinct converged objective values, clustered at a relative tolerance.
std::vector<double> distinct_values(std::vector<double> values, double rel_tol) {
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  for (double v : values) {
    if (out.empty() ||
        std::abs(v - out.back()) >
            rel_tol * std::max({1.0, std::abs(v), std::abs(out.back())})) {
      out.push_back(v);
    }
  }
  return out;
}

int ergodicity_spot_check(const MdpModel& model) {
  SeededPolicySampler sampler(0);
  int rejected = 0;
  for (int k = 0; k < 16; ++k) {
    const auto policy =
        sampler.random_policy(model.n_states(), model.n_actions());
    const auto cs = chain_structure(induced_matrix(model, Policy{policy}));
    if (!cs.ergodic_unichain()) ++rejected;
  }
  return rejected;
}

int cmd_validate(const CommonOptions& opts) {
  LoadedModel loaded = load_input(opts);
  ManifestWriter manifest("validate", loaded, opts);
  const ValidationReport report = validate_model(loaded.model);
  for (const auto& violation : report.violations) {
    std::cout << "violation: " << violation.message << "\n";
  }
  const int rejected = report.ok() ? ergodicity_spot_check(loaded.model) : 0;
  if (rejected > 0) {
    std::cout << "warning: " << rejected
              << "/16 sampled policies induce a non-unichain or periodic "
                 "chain\n";
  }
  manifest.write();
  if (!report.ok()) {
    std::cout << report.violations.size() << " violation(s)\n";
    return 3;
  }
  std::cout << "model ok: " << loaded.model.n_states() << " states, "
            << loaded.model.n_actions() << " actions\n";
  return 0;
}

int cmd_evaluate(const CommonOptions& opts, const std::string& policy_path) {
  LoadedModel loaded = load_input(opts);
  DeterministicPolicy policy = io::load_policy(policy_path);
  ManifestWriter manifest("evaluate", loaded, opts);
  manifest.parameters()["policy"] = policy_path;
  const RiskParams params(loaded.alpha);
  const EvaluationReport report = evaluate(loaded.model, Policy{policy}, params);
  std::cout << "eta " << io::format_double(report.mean_cost) << "\n"
            << "sigma " << io::format_double(report.std_dev) << "\n"
            << "var " << io::format_double(report.var) << "\n"
            << "cvar " << io::format_double(report.cvar) << "\n";
  if (!opts.out_dir.empty()) {
    write_artifact(opts.out_dir, "report.json",
                   io::report_to_json(report).dump(2) + "\n");
  }
  manifest.write();
  return 0;
}

void write_policy_matrix(const LoadedModel& loaded, const std::string& out_dir,
                         const DeterministicPolicy& policy) {
  if (!loaded.portfolio) return;
  const Matrix table = describe_policy(policy, loaded.portfolio->labeling,
                                       loaded.portfolio->config);
  write_artifact(out_dir, "policy_matrix.csv", io::policy_matrix_to_csv(table));
}

void write_solve_artifacts(const std::string& out_dir, const SolveResult& run,
                           const LoadedModel& loaded) {
  write_artifact(out_dir, "policy.txt", io::policy_to_text(run.policy));
  write_artifact(out_dir, "trace.csv", io::trace_to_csv(run.trace));
  write_policy_matrix(loaded, out_dir, run.policy);
  json summary;
  summary["objective"] = run.objective;
  summary["iterations"] = run.iterations;
  summary["descent_milestones"] = run.trace.size();
  summary["beta"] = run.beta;
  summary["local_opt_certificate"] = run.local_opt_certificate;
  write_artifact(out_dir, "result.json", summary.dump(2) + "\n");
}

int cmd_solve(const CommonOptions& opts, double beta,
              const std::string& initial_path, std::uint64_t seed, int starts) {
  LoadedModel loaded = load_input(opts);
  ManifestWriter manifest("solve", loaded, opts);
  manifest.parameters()["beta"] = beta;
  const RiskParams params(loaded.alpha, beta);

  if (!initial_path.empty()) {
    manifest.parameters()["initial"] = initial_path;
    const DeterministicPolicy initial = io::load_policy(initial_path);
    const SolveResult run = solve_mean_cvar(loaded.model, params, initial);
    std::cout << "objective " << io::format_double(run.objective)
              << " after " << run.iterations << " iteration(s), certificate "
              << (run.local_opt_certificate ? "ok" : "FAILED") << "\n";
    write_solve_artifacts(opts.out_dir, run, loaded);
    manifest.write();
    return 0;
  }

  manifest.parameters()["seed"] = seed;
  manifest.parameters()["starts"] = starts;
  const MultiStartResult result =
      multi_start(loaded.model, params, starts, seed);
  std::vector<double> values;
  for (const auto& opt : result.distinct_local_optima) values.push_back(opt.value);
  const auto clusters = distinct_values(values, 1e-6);
  std::cout << "best objective " << io::format_double(result.best.objective)
            << "; " << clusters.size() << " distinct local optimum value(s):";
  for (double v : clusters) std::cout << " " << io::format_double(v);
  std::cout << "\n";
  for (const auto& outcome : result.outcomes) {
    if (!outcome.error.empty()) {
      std::cout << "start " << outcome.start_index << " failed: "
                << outcome.error << "\n";
    }
  }
  write_solve_artifacts(opts.out_dir, result.best, loaded);
  std::ostringstream optima;
  optima << "value,n_starts,policy\n";
  for (const auto& opt : result.distinct_local_optima) {
    int hits = 0;
    for (const auto& outcome : result.outcomes) {
      if (outcome.objective &&
          std::abs(*outcome.objective - opt.value) <=
              1e-6 * std::max(1.0, std::abs(opt.value))) {
        ++hits;
      }
    }
    optima << io::format_double(opt.value) << "," << hits << ",";
    for (std::size_t i = 0; i < opt.policy.action.size(); ++i) {
      if (i) optima << ";";
      optima << opt.policy.action[i];
    }
    optima << "\n";
  }
  write_artifact(opts.out_dir, "optima.csv", optima.str());
  manifest.write();
  return 0;
}

int cmd_global(const CommonOptions& opts) {
  LoadedModel loaded = load_input(opts);
  ManifestWriter manifest("global", loaded, opts);
  const RiskParams params(loaded.alpha);
  const GlobalSolveResult result = solve_global_bruteforce(loaded.model, params);
  std::cout << "global cvar " << io::format_double(result.best_cvar)
            << " at y " << io::format_double(result.argmin_y) << "\n";
  write_artifact(opts.out_dir, "global.csv", io::global_table_to_csv(result));
  write_artifact(opts.out_dir, "policy.txt",
                 io::policy_to_text(result.best_policy));
  write_policy_matrix(loaded, opts.out_dir, result.best_policy);
  json summary;
  summary["best_cvar"] = result.best_cvar;
  summary["argmin_y"] = result.argmin_y;
  write_artifact(opts.out_dir, "result.json", summary.dump(2) + "\n");
  manifest.write();
  return 0;
}

int cmd_sweep_beta(const CommonOptions& opts, const std::vector<double>& betas,
                   std::uint64_t seed, int starts) {
  LoadedModel loaded = load_input(opts);
  ManifestWriter manifest("sweep-beta", loaded, opts);
  manifest.parameters()["betas"] = betas;
  manifest.parameters()["seed"] = seed;
  manifest.parameters()["starts"] = starts;

  std::ostringstream csv;
  csv << "beta,cvar,eta,combined,n_distinct_optima\n";
  std::ostringstream errors;
  for (double beta : betas) {
    try {
      const RiskParams params(loaded.alpha, beta);
      const MultiStartResult result =
          multi_start(loaded.model, params, starts, seed);
      const EvaluationReport report =
          evaluate(loaded.model, Policy{result.best.policy},
                   RiskParams(loaded.alpha));
      std::vector<double> values;
      for (const auto& opt : result.distinct_local_optima) {
        values.push_back(opt.value);
      }
      const auto clusters = distinct_values(values, 1e-6);
      csv << io::format_double(beta) << "," << io::format_double(report.cvar)
          << "," << io::format_double(report.mean_cost) << ","
          << io::format_double(result.best.objective) << "," << clusters.size()
          << "\n";
      std::cout << "beta " << io::format_double(beta) << ": cvar "
                << io::format_double(report.cvar) << " eta "
                << io::format_double(report.mean_cost) << " combined "
                << io::format_double(result.best.objective) << " ("
                << clusters.size() << " optimum value(s))\n";
    } catch (const std::exception& e) {
      errors << io::format_double(beta) << "," << e.what() << "\n";
      std::cout << "beta " << io::format_double(beta) << " failed: " << e.what()
                << "\n";
    }
  }
  write_artifact(opts.out_dir, "sweep.csv", csv.str());
  if (!errors.str().empty()) {
    write_artifact(opts.out_dir, "errors.csv", "beta,error\n" + errors.str());
  }
  manifest.write();
  return 0;
}

int cmd_maximize(const CommonOptions& opts, double tol) {
  LoadedModel loaded = load_input(opts);
  ManifestWriter manifest("maximize", loaded, opts);
  manifest.parameters()["tol"] = tol;
  const RiskParams params(loaded.alpha);
  const MaxSolveResult result = maximize_cvar(loaded.model, params, tol);
  std::cout << "max cvar " << io::format_double(result.max_cvar) << " at y "
            << io::format_double(result.outer_y) << "\n";
  write_artifact(opts.out_dir, "search.csv", io::search_trace_to_csv(result));
  write_artifact(opts.out_dir, "policy.txt",
                 io::policy_to_text(result.inner_policy));
  json summary;
  summary["max_cvar"] = result.max_cvar;
  summary["outer_y"] = result.outer_y;
  write_artifact(opts.out_dir, "result.json", summary.dump(2) + "\n");
  manifest.write();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-run CVaR optimization for finite ergodic MDPs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  CommonOptions validate_opts;
  auto* validate = app.add_subcommand("validate", "Check a model document");
  add_common(validate, validate_opts, /*out_required=*/false);

  CommonOptions evaluate_opts;
  std::string evaluate_policy;
  auto* eval_cmd =
      app.add_subcommand("evaluate", "Evaluate a policy's steady-state risk");
  add_common(eval_cmd, evaluate_opts, /*out_required=*/false);
  eval_cmd->add_option("--policy", evaluate_policy,
                       "Policy file, one action index per state")
      ->required();

  CommonOptions solve_opts;
  double solve_beta = 0.0;
  std::string solve_initial;
  std::uint64_t solve_seed = 42;
  int solve_starts = 20;
  auto* solve = app.add_subcommand("solve", "Run the CVaR local-optimum solver");
  add_common(solve, solve_opts, /*out_required=*/true);
  solve->add_option("--beta", solve_beta, "Mean-CVaR weight (0 = pure CVaR)")
      ->check(CLI::NonNegativeNumber);
  solve->add_option("--initial", solve_initial, "Initial policy file");
  solve->add_option("--seed", solve_seed, "Seed for random initial policies");
  solve->add_option("--starts", solve_starts, "Number of random starts")
      ->check(CLI::PositiveNumber);

  CommonOptions global_opts;
  auto* global =
      app.add_subcommand("global", "Brute-force bilevel global optimum");
  add_common(global, global_opts, /*out_required=*/true);

  CommonOptions sweep_opts;
  std::vector<double> sweep_betas;
  std::uint64_t sweep_seed = 42;
  int sweep_starts = 20;
  auto* sweep = app.add_subcommand("sweep-beta", "Mean-CVaR beta sweep");
  add_common(sweep, sweep_opts, /*out_required=*/true);
  sweep->add_option("--betas", sweep_betas, "Beta values")
      ->required()
      ->delimiter(',');
  sweep->add_option("--seed", sweep_seed, "Seed for random initial policies");
  sweep->add_option("--starts", sweep_starts, "Random starts per beta")
      ->check(CLI::PositiveNumber);

  CommonOptions max_opts;
  double max_tol = 1e-6;
  auto* maximize = app.add_subcommand("maximize", "Maximize long-run CVaR");
  add_common(maximize, max_opts, /*out_required=*/true);
  maximize->add_option("--tol", max_tol, "Relative width tolerance")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*validate) return cmd_validate(validate_opts);
    if (*eval_cmd) return cmd_evaluate(evaluate_opts, evaluate_policy);
    if (*solve) {
      return cmd_solve(solve_opts, solve_beta, solve_initial, solve_seed,
                       solve_starts);
    }
    if (*global) return cmd_global(global_opts);
    if (*sweep) return cmd_sweep_beta(sweep_opts, sweep_betas, sweep_seed,
                                      sweep_starts);
    if (*maximize) return cmd_maximize(max_opts, max_tol);
  } catch (const IoError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const NonConvergenceError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 4;
  } catch (const NotErgodicError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 3;
  } catch (const SingularSystemError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
