#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gfloquet/core.hpp"
#include "gfloquet/monodromy.hpp"

namespace gfloquet {

using VectorField = std::function<Vector(const Vector& y, double t)>;

/// dy/dt = f(y,t) + L'{g(y,t)}, where L' is built from delay taps and a
/// convolution kernel acting on g. The memory depth covers every tap and the
/// kernel window.
struct NonlinearMemorySystem {
  int dimension = 0;
  double period = 0.0;
  double memory_depth = 0.0;
  VectorField field;
  VectorField memory_field;
  std::vector<DelayTap> delay_taps;
  KernelFn kernel;
};

enum class CycleProvenance { UserSupplied, ExternallyComputed };

struct LimitCycle {
  double period = 0.0;
  /// n x (N+1) samples on the nodes of [0, period]; the last column repeats the first.
  Matrix samples;
  CycleProvenance provenance = CycleProvenance::UserSupplied;

  int samples_per_period() const { return static_cast<int>(samples.cols()) - 1; }
  double wrap_residual() const;
  /// Periodic cubic interpolant of the samples.
  Vector at(double t) const;
};

struct LinearizationResult {
  LinearMemorySystem system;
  PeriodicGrid grid;
  /// Max over nodes of |y_S' - f - L'{g}|, with y_S' from the trigonometric interpolant.
  double cycle_residual = 0.0;
  std::vector<std::string> warnings;
};

/// Builds A(t) = df/dy and B(t) = dg/dy along the cycle by central differences
/// with per-component step fd_step*(1+|y_i|). Throws InvalidArgument for a bad
/// fd_step or a cycle that does not wrap, InvalidSystem for non-finite Jacobians.
LinearizationResult linearize(const NonlinearMemorySystem& nl, const LimitCycle& cycle, double fd_step);

/// Central-difference Jacobian of `field` at (y, t).
Matrix jacobian(const VectorField& field, const Vector& y, double t, double fd_step);

enum class Verdict { Stable, Unstable, Marginal };

const char* to_string(Verdict v);

struct ExponentClass {
  Complex multiplier;
  /// Principal representative; the class is exponent + i*2*pi*k/period.
  Complex exponent;
  double class_spacing = 0.0;
  bool trivial = false;
};

struct StabilityReport {
  Verdict verdict = Verdict::Marginal;
  bool autonomous = false;
  bool has_trivial = false;
  Complex trivial_multiplier;
  double trivial_error = 0.0;
  double max_nontrivial_magnitude = 0.0;
  std::vector<ExponentClass> classes;
};

StabilityReport stability_verdict(const FloquetDecomposition& dec, bool autonomous, double unit_tol = 1e-3);

/// Direct integration of the forced system over [0, span].
Trajectory forced_response(const LinearMemorySystem& system, const PeriodicGrid& grid,
                           const StateSegment& initial, double span);

/// Variation-of-constants evaluation z = X(s) z0 + int_0^s X(s) X(e)^{-1} b(e) de for
/// a memoryless system (Simpson quadrature on the grid nodes). Throws
/// InvalidArgument when the system has memory.
Trajectory variation_of_constants(const LinearMemorySystem& system, const PeriodicGrid& grid,
                                  const Vector& initial, double span);

/// Max node discrepancy between forced_response and variation_of_constants.
double forced_response_crosscheck(const LinearMemorySystem& system, const PeriodicGrid& grid,
                                  const Vector& initial, double span);

/// Re-expresses a mode with exponent lambda + i*2*pi*k/period; z = r exp(lambda s) is unchanged.
PeriodicMode shift_exponent_class(const PeriodicMode& mode, int k, double period);

}  // namespace gfloquet
