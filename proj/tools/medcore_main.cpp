// medcore: command-line entry point for the pruning pipeline and analyses.

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "medcore/error.hpp"
#include "medcore_harness/config.hpp"
#include "medcore_harness/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kIo = 3, kNumeric = 4, kInfeasible = 5 };

int exit_code(medcore::ErrorKind kind) {
  switch (kind) {
    case medcore::ErrorKind::config: return kConfig;
    case medcore::ErrorKind::io: return kIo;
    case medcore::ErrorKind::numeric: return kNumeric;
    case medcore::ErrorKind::infeasible_plan: return kInfeasible;
    default: return kOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  using namespace medcore::harness;
  CLI::App app{"medcore: structured pruning of a prompt-conditioned ViT segmenter"};
  app.require_subcommand(1, 1);

  std::string config_path, out_dir, scorer, grid;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  for (const auto& name : command_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " stage");
    sub->add_option("--config", config_path, "experiment config (JSON); defaults apply when omitted");
    sub->add_option("--out", out_dir, "run directory (default: <output_dir>/<run_id>)");
    sub->add_option("--seed", seed, "global seed, overriding the config");
    sub->add_option("--scorer", scorer, "scorer, overriding prune.scorer");
    sub->add_option("--grid", grid, "sweep grid, e.g. \"h=0.3,0.5;m=0.5,0.7\"");
    sub->add_flag("--quiet", quiet, "suppress progress output");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    RunContext ctx;
    ctx.config = config_path.empty() ? default_config() : load_config(config_path);
    if (seed) ctx.config.seed = *seed;
    if (!scorer.empty()) {
      try {
        ctx.config.prune.scorer = medcore::parse_scorer(scorer);
      } catch (const medcore::Error& e) {
        throw medcore::ConfigError(std::string("--scorer: ") + e.what());
      }
    }
    if (!grid.empty()) apply_grid(ctx.config.sweep, grid);
    ctx.config.validate();
    if (!out_dir.empty()) {
      ctx.run_dir = out_dir;
    } else {
      // A seed override is a different run, so it gets its own directory.
      std::string name = ctx.config.run_id;
      if (seed) name += "-seed" + std::to_string(*seed);
      ctx.run_dir = std::filesystem::path(ctx.config.output_dir) / name;
    }
    if (!quiet) ctx.log = &std::cerr;
    run_command(command, ctx);
  } catch (const medcore::Error& e) {
    std::cerr << "medcore " << command << ": error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "medcore " << command << ": error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "medcore " << command << ": error: " << e.what() << '\n';
    return kOther;
  }
  return kOk;
}
