#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "alice/harness.hpp"
#include "alice/oracles.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

std::string default_out_dir() {
  const char* env = std::getenv("ALICE_OUT_DIR");
  return env && *env ? env : "out";
}

std::ofstream open_report(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + (dir / name).string() + "'");
  return out;
}

alice::ExperimentConfig load(const std::string& path, const std::optional<std::string>& out,
                             const std::optional<std::uint64_t>& seed) {
  alice::ExperimentConfig cfg = alice::load_config(path);
  if (out) cfg.output_dir = *out;
  if (seed) cfg.seeds = {*seed};
  return cfg;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& out) {
  const alice::SuiteReport report = alice::run_suite(suite, seed);
  alice::print_table(std::cout, report);
  auto csv = open_report(out, "verify_" + suite + ".csv");
  alice::write_csv(csv, report);
  return report.pass() ? kExitPass : kExitFail;
}

int cmd_probe(const alice::ExperimentConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  for (std::uint64_t seed : cfg.seeds) {
    const alice::PowerLawExperiment probe = alice::run_probe(cfg, seed);
    const std::string tag = std::to_string(seed);
    auto out = open_report(cfg.output_dir, "powerlaw_" + tag + ".csv");
    alice::write_csv(out, probe.report);
    for (const auto& row : probe.report.rows)
      std::cout << "seed " << tag << ' ' << row.partition << " p="
                << (row.defined ? std::to_string(row.p) : "undefined") << '\n';
  }
  auto manifest = open_report(cfg.output_dir, "manifest.txt");
  manifest << alice::make_manifest(cfg);
  return kExitPass;
}

int cmd_train(const alice::ExperimentConfig& cfg) {
  const alice::RunSummary summary = alice::run_experiment(cfg);
  for (const auto& s : summary.seeds)
    std::cout << "seed " << s.seed << " final_metric=" << s.final_metric
              << (s.ok ? "" : " FAILED: " + s.error) << '\n';
  std::cout << "min=" << summary.metric.min << " median=" << summary.metric.median
            << " max=" << summary.metric.max << '\n';
  return summary.all_ok ? kExitPass : kExitFail;
}

struct SimulateArgs {
  std::string scenario;
  double rho = 1.0;
  double lambda = 1.0;
  int n = 1000;
  long long trials = 100000;
  std::uint64_t seed = 1;
  std::string kicks = "gaussian";
  std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
  std::vector<alice::OracleRow> rows;
  bool ok = true;
  if (a.scenario == "glass-walk") {
    alice::SyntheticGlass1D sim;
    sim.rho = a.rho;
    sim.lambda = a.lambda;
    sim.n = a.n;
    sim.trials = a.trials;
    sim.seed = a.seed;
    sim.kicks = a.kicks == "rademacher" ? alice::KickDistribution::Rademacher
                                        : alice::KickDistribution::Gaussian;
    sim.validate();
    const alice::GlassWalkResult w = alice::glass_walk_expectation(sim);
    rows.push_back({"mean_abs_delta", w.mean_abs, w.predicted_mean_abs, w.mean_abs_se, w.trials});
    rows.push_back({"variance_delta", w.variance, w.predicted_variance, w.variance_se, w.trials});
  } else {
    const alice::LeastSquaresScenario s = alice::underdetermined_ls(a.seed);
    rows.push_back({"loss_initial", s.loss_initial, s.loss_initial, 0.0, 1});
    rows.push_back({"loss_full_step", s.loss_full_step, s.loss_initial, 0.0, 1});
    rows.push_back({"loss_damped_step", s.loss_damped_step, s.loss_initial, 0.0, 1});
    rows.push_back({"norm_full_step", s.norm_full_step, s.min_norm_solution, 0.0, 1});
    rows.push_back({"norm_damped_step", s.norm_damped_step, s.min_norm_solution, 0.0, 1});
    rows.push_back({"min_norm_solution", s.min_norm_solution, s.min_norm_solution, 0.0, 1});
    ok = s.loss_full_step > s.loss_initial && s.loss_damped_step < s.loss_initial;
  }
  auto out = open_report(a.out, "simulate_" + a.scenario + ".csv");
  alice::write_csv(out, rows);
  alice::write_csv(std::cout, rows);
  return ok ? kExitPass : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Glass-density diagnostics and the Alice optimizer"};
  app.require_subcommand(1);

  std::string suite = "all";
  std::uint64_t verify_seed = 1;
  std::string verify_out = default_out_dir();
  auto* verify = app.add_subcommand("verify", "Run an oracle suite and write a CSV report");
  verify->add_option("--suite", suite, "kernel, glass, naq, step, walk or all")
      ->check(CLI::IsMember({"kernel", "glass", "naq", "step", "walk", "all"}))
      ->capture_default_str();
  verify->add_option("--seed", verify_seed, "Random seed")->capture_default_str();
  verify->add_option("--out", verify_out, "Output directory")->capture_default_str();

  std::string config_path;
  std::optional<std::string> out_override;
  std::optional<std::uint64_t> seed_override;
  auto* probe = app.add_subcommand("probe", "Measure gradient variations and power-law exponents");
  auto* train = app.add_subcommand("train", "Run a multi-seed experiment from a config file");
  for (auto* sub : {probe, train}) {
    sub->add_option("--config", config_path, "Config file")->required();
    sub->add_option("--out", out_override, "Output directory (overrides the config)");
    sub->add_option("--seed", seed_override, "Run this seed only");
  }

  SimulateArgs sim;
  sim.out = default_out_dir();
  auto* simulate = app.add_subcommand("simulate", "Run an oracle scenario");
  simulate->add_option("--scenario", sim.scenario, "glass-walk or underdetermined-ls")
      ->required()
      ->check(CLI::IsMember({"glass-walk", "underdetermined-ls"}));
  simulate->add_option("--rho", sim.rho, "Glass density")->capture_default_str();
  simulate->add_option("--lambda", sim.lambda, "Path length")->capture_default_str();
  simulate->add_option("--n", sim.n, "Discontinuities along the path")->capture_default_str();
  simulate->add_option("--trials", sim.trials, "Monte-Carlo trials")->capture_default_str();
  simulate->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  simulate->add_option("--kicks", sim.kicks, "gaussian or rademacher")
      ->check(CLI::IsMember({"gaussian", "rademacher"}))
      ->capture_default_str();
  simulate->add_option("--out", sim.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (*verify) return cmd_verify(suite, verify_seed, verify_out);
    if (*simulate) return cmd_simulate(sim);
    const auto cfg = load(config_path, out_override, seed_override);
    if (*probe) return cmd_probe(cfg);
    return cmd_train(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}
