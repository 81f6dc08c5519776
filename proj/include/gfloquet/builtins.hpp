#pragma once

// Named model generators used by the CLI configs and the test suite.

#include <map>
#include <string>
#include <vector>

#include "gfloquet/bloch.hpp"
#include "gfloquet/core.hpp"
#include "gfloquet/perturbation.hpp"

namespace gfloquet {

using BuiltinParams = std::map<std::string, double>;

struct LinearModel {
  LinearMemorySystem system;
  double period = 1.0;
  double memory_depth = 0.0;
};

struct NonlinearModel {
  NonlinearMemorySystem system;
  bool autonomous = false;
};

/// scalar_cosine, delay_pi_over_2, exp_kernel, mathieu, constant_matrix.
/// `samples_per_period` only matters for exp_kernel, whose truncated depth is grid aligned.
LinearModel linear_builtin(const std::string& name, const BuiltinParams& params, int samples_per_period = 256);

/// van_der_pol, linear_stable, cubic_forced.
NonlinearModel nonlinear_builtin(const std::string& name, const BuiltinParams& params);

/// free_particle, kronig_penney, separable_nonlocal.
NonlocalPotential1D potential_builtin(const std::string& name, const BuiltinParams& params);

std::vector<std::string> linear_builtin_names();
std::vector<std::string> nonlinear_builtin_names();
std::vector<std::string> potential_builtin_names();

}  // namespace gfloquet
