#include <iostream>
#include <utility>

#include "CLI11.hpp"
#include "netpod/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Network dynamics prediction with POD and sparse regression"};
  app.set_version_flag("--version", netpod::kVersion);
  app.require_subcommand(1);

  netpod::CliArgs args;
  std::string config, out;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", out, "Output directory (overrides outputs.directory)");
    sub->add_option("--format", args.options.format, "Trajectory or table format")
        ->check(CLI::IsMember({"csv", "json"}));
    sub->add_flag("--timings", args.options.record_timings, "Record wall-clock timings in the manifest");
  };
  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "Simulate network dynamics and write the trajectory"},
      {"predict", "Fit a POD + sparse regression model and forecast the held-out window"},
      {"cluster", "Spectral clustering from the adjacency or from snapshots"},
      {"surrogate", "Fit a nonnegative surrogate network to SIS data"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "Experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "Seed for every random stage (overrides the config)");
    add_common(sub);
  }
  CLI::App* report = app.add_subcommand("report", "Summarize metrics.json files from run directories");
  std::vector<std::string> inputs;
  report->add_option("inputs", inputs, "Run directories or metrics files")->required();
  add_common(report);
  report->get_option("--out")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  args.command = chosen->get_name();
  if (!config.empty()) args.config = config;
  if (!out.empty()) args.out = out;
  if (chosen->get_option_no_throw("--seed") != nullptr && chosen->count("--seed") > 0) args.seed = seed;
  for (const auto& in : inputs) args.inputs.emplace_back(in);
  return netpod::run_cli(args, std::cerr);
}
