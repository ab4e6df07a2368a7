#include <iostream>

#include "CLI11.hpp"
#include "rlflow/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Regular Lagrangian flows and transport equations with integral source terms"};
  app.require_subcommand(1);
  rlflow::CliOptions opts;

  const std::pair<const char*, const char*> commands[] = {
      {"flow", "integrate the flow of the configured field over the grid"},
      {"solve", "solve the transport equation by Picard iteration and continuation"},
      {"stability", "stability of solutions under mollification of the coefficient"},
      {"counterexample", "weak but not strong convergence of oscillating densities"},
      {"verify", "run the invariant suite"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config_path, "JSON configuration (schema 1); defaults when omitted")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out_dir, "output directory");
    sub->add_option("--workers", opts.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->callback([&opts, n = std::string(name)] { opts.subcommand = n; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : rlflow::kExitConfigError;
  }
  return rlflow::run(opts, std::cout, std::cerr);
}
