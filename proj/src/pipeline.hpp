#pragma once

// File-driven analyses behind the CLI: config parsing, report writing and
// exit-code policy (0 ok, 2 invalid input, 3 convergence failure).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gfloquet/builtins.hpp"
#include "gfloquet/monodromy.hpp"

namespace gfloquet::pipeline {

struct Overrides {
  std::optional<int> grid;
  std::optional<double> tol;
  int jobs = 1;
};

struct Outcome {
  int exit_code = 0;
  /// Set whenever exit_code is non-zero.
  std::optional<ErrorCode> error;
  std::string message;
  std::vector<std::string> warnings;
};

Outcome run_analyze(const std::string& config_path, const std::string& out_dir, const Overrides& overrides);
Outcome run_stability(const std::string& config_path, const std::string& out_dir, const Overrides& overrides);
Outcome run_bands(const std::string& config_path, const std::string& out_dir, const Overrides& overrides);

struct SystemConfig {
  LinearModel model;
  int samples_per_period = 256;
  SpectrumOptions options;
};

/// Parses an analyze config document (JSON text). Throws Error(InvalidArgument)
/// with a line or field diagnostic.
SystemConfig parse_system_config(const std::string& text, const Overrides& overrides = {});

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t seed = 1469598103934665603ULL);

int exit_code_for(ErrorCode code);

}  // namespace gfloquet::pipeline
