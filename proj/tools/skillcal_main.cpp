#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "skillcal/data_model.hpp"
#include "skillcal/error.hpp"
#include "skillcal/pipeline.hpp"
#include "skillcal/simulator.hpp"

namespace fs = std::filesystem;
using namespace skillcal;

namespace {

struct Overrides {
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicates;
  std::optional<int> workers;
  bool freeze_lambda = false;
  bool dump_draws = false;
  std::optional<fs::path> output;
};

void add_run_flags(CLI::App* cmd, Overrides& o, bool bootstrap) {
  cmd->add_option("--config", o.config, "run configuration file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--output", o.output, "output directory");
  if (bootstrap) {
    cmd->add_option("--replicates", o.replicates, "bootstrap replicates B");
    cmd->add_option("--workers", o.workers, "worker threads");
    cmd->add_flag("--freeze-lambda", o.freeze_lambda, "reuse the full-sample LASSO penalties in every replicate");
    cmd->add_flag("--dump-draws", o.dump_draws, "write every replicate estimate to draws.csv");
  }
}

int run(const Overrides& o, RunMode mode) {
  RunConfig cfg = RunConfig::load(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.replicates) cfg.replicates = *o.replicates;
  if (o.workers) cfg.workers = *o.workers;
  if (o.freeze_lambda) cfg.freeze_lambda = true;
  if (o.dump_draws) cfg.dump_draws = true;
  if (o.output) cfg.output = *o.output;
  if (mode == RunMode::bootstrap) std::cout << "workers: " << cfg.workers << "\n";
  const PipelineResult r = run_pipeline(cfg, mode);
  for (const auto& f : r.files) std::cout << "wrote " << f.string() << "\n";
  for (const auto& e : r.errors) std::cerr << "error: " << e << "\n";
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skillcal: calibrated prevalence estimates from non-probability samples"};
  app.require_subcommand(1);

  fs::path design_path, sim_output;
  std::uint64_t sim_seed = 1;
  bool noisy = false;
  auto* sim = app.add_subcommand("simulate", "generate a synthetic sample, totals and ground truth");
  sim->add_option("--design", design_path, "design file")->required()->check(CLI::ExistingFile);
  sim->add_option("--seed", sim_seed, "seed");
  sim->add_option("--output", sim_output, "output directory")->required();
  sim->add_flag("--noisy-totals", noisy, "emit one noisy draw of the totals instead of exact totals");

  Overrides est_o, boot_o;
  auto* est = app.add_subcommand("estimate", "point estimates only");
  add_run_flags(est, est_o, false);
  auto* boot = app.add_subcommand("bootstrap", "point estimates and bootstrap variance");
  add_run_flags(boot, boot_o, true);

  fs::path report_dir;
  auto* report = app.add_subcommand("report", "print the tables of a finished run");
  report->add_option("dir", report_dir, "output directory of a run")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      const SyntheticDesign design = SyntheticDesign::load(design_path);
      SimulateOptions options;
      options.noisy_totals = noisy;
      const SimulationOutput out = generate(design, sim_seed, options);
      fs::create_directories(sim_output);
      save_ads(sim_output / "ads.csv", out.sample);
      save_totals(sim_output / "totals.csv", out.totals);
      save_truth(sim_output / "truth.csv", out.truth);
      std::cout << "wrote " << out.sample.records.size() << " ads to " << (sim_output / "ads.csv").string() << "\n";
      return 0;
    }
    if (*est) return run(est_o, RunMode::estimate);
    if (*boot) return run(boot_o, RunMode::bootstrap);
    if (*report) {
      std::cout << render_report(report_dir);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
