// Command-line entry point: generate | corrupt | train | evaluate | report.
// Exit codes: 0 success, 1 invalid input, 2 runtime or numeric failure.

#include <malloc.h>

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "stugn/error.hpp"
#include "stugn/pipeline.hpp"
#include "stugn/run_config.hpp"

namespace {

struct Flags {
  std::string config_path;
  std::optional<double> rate;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::string> out;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_path, "run configuration file (defaults apply when omitted)");
  cmd->add_option("--rate", f.rate, "restrict to one missing rate");
  cmd->add_option("--seed", f.seed, "data seed (generate, corrupt) or training seed (train, evaluate)");
  cmd->add_option("--jobs", f.jobs, "concurrent training cells")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  // Keep large tensor buffers in the heap instead of fresh mappings per op.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  CLI::App app{"Spatio-temporal wind forecasting experiments"};
  app.require_subcommand(1);
  Flags flags;
  using Command = std::vector<std::filesystem::path> (*)(const stugn::config::RunConfig&,
                                                        const stugn::pipeline::CommandOptions&);
  const std::vector<std::tuple<const char*, const char*, Command>> commands = {
      {"generate", "write data/truth.csv from the configured input or synthetic generator", stugn::pipeline::generate},
      {"corrupt", "write corrupted series and removal logs per missing rate", stugn::pipeline::corrupt},
      {"train", "train the model matrix and write checkpoints", stugn::pipeline::train},
      {"evaluate", "score checkpoints on the test split", stugn::pipeline::evaluate},
      {"report", "write accuracy and energy tables", stugn::pipeline::report},
  };
  std::vector<std::pair<CLI::App*, Command>> subs;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_flags(sub, flags);
    subs.emplace_back(sub, fn);
  }
  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = flags.config_path.empty() ? stugn::config::RunConfig{}
                                                  : stugn::config::load_run_config(flags.config_path);
    stugn::pipeline::CommandOptions options;
    options.rate = flags.rate;
    options.seed = flags.seed;
    options.jobs = flags.jobs;
    options.out = flags.out;
    options.progress = &std::cerr;
    for (const auto& [sub, fn] : subs) {
      if (!sub->parsed()) continue;
      for (const auto& path : fn(config, options)) std::cout << path.string() << '\n';
    }
    return 0;
  } catch (const stugn::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
}
