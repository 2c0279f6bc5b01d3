// qvelab: experiment driver for the quadratic vector equation lab.
#include <CLI11.hpp>

#include <iostream>

#include "qvelab/cli_runner.hpp"

int main(int argc, char** argv) {
  using namespace qvelab::cli;
  CLI::App app{"qvelab: QVE solver, density of states and random-matrix checks"};
  app.require_subcommand(1);

  RunOptions opts;
  std::string out;
  std::uint64_t seed = 0;
  for (const auto& name : command_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " pipeline");
    sub->add_option("--config", opts.config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->add_option("--workers", opts.workers, "maximum worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "base seed (overrides the config)");
    sub->add_flag("--strict", opts.strict, "stop at the first failing check");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_ok : exit_config_error;
  }

  auto* sub = app.get_subcommands().front();
  if (!out.empty()) opts.out_dir = out;
  if (sub->count("--seed")) opts.seed = seed;
  const auto result = run(command_from_string(sub->get_name()), opts, std::cerr);
  if (!result.message.empty()) std::cerr << "qvelab: " << result.message << '\n';
  for (const auto& f : result.outputs) std::cout << f << '\n';
  return result.exit_code;
}
