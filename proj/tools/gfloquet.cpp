// gfloquet analyze|stability|bands --config <path> --out <dir> [--grid N] [--tol T] [--jobs J]

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "gfloquet/gfloquet.h"

int main(int argc, char** argv) {
  CLI::App app{"Floquet spectra of periodic systems with memory"};
  app.set_version_flag("--version", std::string(gfq_version()));
  app.require_subcommand(1);

  std::string config;
  std::string out;
  int grid = 0;
  double tol = 0.0;
  int jobs = 1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON config file")->required();
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_option("--grid", grid, "samples per period (overrides the config)")->check(CLI::PositiveNumber);
    cmd->add_option("--tol", tol, "tolerance override (see docs/config.md)")->check(CLI::PositiveNumber);
    cmd->add_option("--jobs", jobs, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
  };
  auto* analyze = app.add_subcommand("analyze", "monodromy spectrum, modes and verification of a linear system");
  auto* stability = app.add_subcommand("stability", "stability verdict for a limit cycle");
  auto* bands = app.add_subcommand("bands", "Bloch band scan of a 1D potential");
  add_common(analyze);
  add_common(stability);
  add_common(bands);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  gfq_run_options options{config.c_str(), out.c_str(), grid, tol, jobs};
  int exit_code = 0;
  gfq_status status = GFQ_OK;
  if (analyze->parsed()) {
    status = gfq_run_analyze(&options, &exit_code);
  } else if (stability->parsed()) {
    status = gfq_run_stability(&options, &exit_code);
  } else {
    status = gfq_run_bands(&options, &exit_code);
  }
  const std::string warnings = gfq_last_warnings();
  if (!warnings.empty()) std::fprintf(stderr, "warning: %s", warnings.c_str());
  if (status != GFQ_OK) {
    std::fprintf(stderr, "gfloquet: %s: %s\n", gfq_status_name(status), gfq_last_error());
    return exit_code != 0 ? exit_code : 1;
  }
  std::printf("%s\n", gfq_last_message());
  return exit_code;
}
