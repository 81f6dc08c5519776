#pragma once

#include <functional>
#include <vector>

#include "gfloquet/core.hpp"

namespace gfloquet {

struct SpectrumOptions {
  /// Relative distance for matching an eigenvalue with its refined-grid partner.
  double match_tolerance = 1e-4;
  /// Eigenvalues below this fraction of the spectral radius are never retained.
  double magnitude_floor = 1e-10;
  int refinement_factor = 2;
  int max_modes = 8;
  /// Worker threads for column integration (0 = hardware concurrency).
  int jobs = 1;
};

/// Integrates the system (including forcing) from `initial` over [0, span].
Trajectory step_integrate(const LinearMemorySystem& system, const PeriodicGrid& grid,
                          const StateSegment& initial, double span);

/// Discretised period-shift operator: column j is the history segment at time
/// `period` reached from the j-th canonical unit history segment.
MonodromyOperator build_monodromy(const LinearMemorySystem& system, const PeriodicGrid& grid,
                                  int jobs = 1);

/// Unsorted eigenvalues of U (real-matrix eigensolver, exact conjugate pairs).
std::vector<Complex> monodromy_eigenvalues(const MonodromyOperator& op);

FloquetDecomposition floquet_spectrum(const LinearMemorySystem& system, const PeriodicGrid& grid,
                                      const SpectrumOptions& options = {});

/// Propagates the eigenvector of U for `multiplier` over one period and strips
/// the exponential factor. Throws Error(Eigensolver) when `multiplier` is not
/// an eigenvalue of U to relative tolerance `tolerance`.
PeriodicMode extract_mode(const MonodromyOperator& op, Complex multiplier,
                          const LinearMemorySystem& system, const PeriodicGrid& grid,
                          double tolerance = 1e-6);

struct ModeResidual {
  Complex multiplier;
  double periodicity = 0.0;
  double lambda_equation = 0.0;
};

struct VerificationReport {
  /// max_s ||X(s+period) - X(s) U|| / max ||X||, over s in [0, period].
  double shift_representation = 0.0;
  std::vector<ModeResidual> modes;
  double max_periodicity = 0.0;
  double max_lambda_equation = 0.0;
  /// |multiplier(N) - multiplier(N/2)| for the dominant retained multiplier.
  double integration_error_estimate = 0.0;
};

/// Residual of dr/ds + lambda r - exp(-lambda s) L{exp(lambda s) r}, with r
/// extended periodically into the history window. Relative to the largest of
/// the three terms so fast modes are not penalised for their frequency.
double lambda_equation_residual(const LinearMemorySystem& system, const PeriodicGrid& grid,
                                const PeriodicMode& mode);

VerificationReport verify_floquet_form(const LinearMemorySystem& system, const PeriodicGrid& grid,
                                       const FloquetDecomposition& decomposition);

struct TruncationResult {
  double memory_depth = 0.0;
  double tail = 0.0;
};

/// Smallest multiple of `step` for which sup_s int_{-inf}^{s-r} ||K(s,t)|| bound(t) dt < epsilon.
/// Throws Error(NotTruncatable) when the tail does not decay.
TruncationResult truncate_infinite_kernel(const KernelFn& kernel, const std::function<double(double)>& bound,
                                          double epsilon, const PeriodicGrid& grid);

/// Tail integral used by truncate_infinite_kernel for one depth.
double kernel_tail(const KernelFn& kernel, const std::function<double(double)>& bound, double depth,
                   const PeriodicGrid& grid);

}  // namespace gfloquet
