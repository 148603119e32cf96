// hopperlab <command> --config <path> [--out <dir>] [--seeds a,b,c] [--jobs N] [--resume]

#include <CLI11.hpp>

#include <cstdio>
#include <exception>

#include "hopperlab/config.hpp"
#include "hopperlab/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hopper-on-granular-media simulation and terrain identification"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;
  bool resume = false;

  for (const char* name : {"simulate", "intrude", "estimate", "identify", "sweep", "report"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "INI experiment config")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides HOPPERLAB_OUT and [output] dir)");
    sub->add_option("--seeds", seeds, "comma-separated seeds")->delimiter(',');
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--resume", resume, "skip trials the manifest records as done");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? hopperlab::kExitOk : hopperlab::kExitConfig;
  }

  try {
    const auto command = hopperlab::parse_command(app.get_subcommands().front()->get_name());
    const auto config = hopperlab::load_config(config_path);
    hopperlab::RunOptions options;
    if (!out.empty()) options.out = out;
    if (!seeds.empty()) options.seeds = seeds;
    options.jobs = jobs;
    options.resume = resume;
    hopperlab::run_command(config, command, options);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "hopperlab: %s\n", e.what());
    return hopperlab::exit_code_for(e);
  }
  return hopperlab::kExitOk;
}
