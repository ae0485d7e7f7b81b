#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "easecore/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  int workers = 1;
  std::uint64_t seed = 0;
  bool no_cache = false;
  CLI::Option* out_opt = nullptr;
  CLI::Option* workers_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

CommonArgs* attach_common(CLI::App* cmd, const char* config_help) {
  auto* args = new CommonArgs();  // lives until exit; CLI11 keeps raw pointers
  cmd->add_option("config", args->config, config_help)
      ->required()
      ->check(CLI::ExistingFile);
  args->out_opt = cmd->add_option("--out", args->out, "Output directory (overrides the config)");
  args->workers_opt =
      cmd->add_option("--workers", args->workers, "Worker threads for independent trials")
          ->check(CLI::PositiveNumber);
  args->seed_opt = cmd->add_option("--seed", args->seed, "Override the master seed");
  cmd->add_flag("--no-cache", args->no_cache,
                "Skip the on-disk trial cache (trials are still shared in memory within one run)");
  return args;
}

easecore::CommandOverrides to_overrides(const CommonArgs& args) {
  easecore::CommandOverrides ov;
  if (args.out_opt->count() > 0) ov.out_dir = args.out;
  if (args.workers_opt->count() > 0) ov.workers = args.workers;
  if (args.seed_opt->count() > 0) ov.seed = args.seed;
  ov.no_cache = args.no_cache;
  return ov;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"easecore: example-easiness scoring, subset analysis and dataset compression"};
  app.require_subcommand(1);

  CLI::App* easiness = app.add_subcommand("easiness", "Compute per-example easiness tables");
  CLI::App* analyze =
      app.add_subcommand("analyze", "Matching-rate reports, mean images and plots");
  CLI::App* compress = app.add_subcommand("compress", "Ablation grid with retrain accuracies");
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset directory");

  CommonArgs* ez_args = attach_common(easiness, "Experiment config JSON");
  CommonArgs* an_args = attach_common(analyze, "Experiment config JSON");
  CommonArgs* co_args = attach_common(compress, "Experiment config JSON");
  CommonArgs* sy_args = attach_common(synth, "Dataset spec JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (easiness->parsed()) {
      const auto cfg = easecore::load_experiment_config(ez_args->config, to_overrides(*ez_args));
      easecore::cmd_easiness(cfg, std::cout);
    } else if (analyze->parsed()) {
      const auto cfg = easecore::load_experiment_config(an_args->config, to_overrides(*an_args));
      easecore::cmd_analyze(cfg, std::cout);
    } else if (compress->parsed()) {
      const auto cfg = easecore::load_experiment_config(co_args->config, to_overrides(*co_args));
      easecore::cmd_compress(cfg, std::cout);
    } else if (synth->parsed()) {
      easecore::cmd_synth(easecore::fs::path(sy_args->config), to_overrides(*sy_args), std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
