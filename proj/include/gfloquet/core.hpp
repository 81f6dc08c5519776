#pragma once

// Domain types shared by every analysis: the periodic sampling grid, linear
// periodic systems with memory, history segments, and the spectral records
// produced from the discretized period-shift operator.

#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gfloquet/error.hpp"

namespace gfloquet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

using MatrixFn = std::function<Matrix(double)>;
using KernelFn = std::function<Matrix(double, double)>;
using VectorFn = std::function<Vector(double)>;

/// Uniform grid over one period plus the history window [-r, 0].
///
/// Nodes sit at integer multiples of the step h = period / N. Node index i
/// (possibly negative) maps to time i*h; the history window spans node
/// indices -N_h .. 0.
class PeriodicGrid {
 public:
  static constexpr int kMinSamples = 8;

  /// Throws Error(InvalidArgument) when period <= 0, N < 8 or r < 0.
  PeriodicGrid(double period, int samples_per_period, double memory_depth = 0.0);

  double period() const { return period_; }
  int samples_per_period() const { return samples_; }
  double memory_depth() const { return memory_depth_; }
  double step() const { return period_ / samples_; }
  int history_points() const { return history_; }
  double node(int index) const { return index * step(); }

  /// Same period and memory depth with a different sample count.
  PeriodicGrid refined(int factor) const;

 private:
  double period_;
  int samples_;
  double memory_depth_;
  int history_;
};

struct DelayTap {
  double delay = 0.0;
  MatrixFn coefficient;
};

/// dz/ds = A(s) z(s) + sum_i B_i(s) z(s - d_i) + int_{s-r}^{s} K(s,t) z(t) dt + b(s)
///
/// The memory depth r is carried by the PeriodicGrid the system is analysed on.
/// Empty kernel / forcing callables mean "absent".
struct LinearMemorySystem {
  int dimension = 0;
  MatrixFn coefficient;
  std::vector<DelayTap> delay_taps;
  KernelFn kernel;
  VectorFn forcing;

  bool has_memory() const { return !delay_taps.empty() || static_cast<bool>(kernel); }
  double max_delay() const;
  LinearMemorySystem homogeneous() const;
};

/// Samples of z on the history nodes of [-r, 0]; column c holds time (c - N_h)*h.
struct StateSegment {
  Matrix samples;

  static StateSegment constant(const PeriodicGrid& grid, const Vector& value);
  static StateSegment from_flat(const PeriodicGrid& grid, int dimension, const Vector& flat);
  Vector flat() const;
  void check(const PeriodicGrid& grid, int dimension) const;
};

/// Solution samples on the nodes of [-r, span]; column c holds time (c - N_h)*h.
struct Trajectory {
  double step = 0.0;
  int history_points = 0;
  Matrix samples;

  /// Value at node index i (i = 0 is the start of integration).
  Vector at_node(int index) const { return samples.col(index + history_points); }
  int last_node() const { return static_cast<int>(samples.cols()) - 1 - history_points; }
};

struct MonodromyOperator {
  Matrix matrix;
  PeriodicGrid grid;
  int dimension = 0;
  std::uint64_t fingerprint = 0;
};

struct FloquetMultiplier {
  Complex multiplier;
  Complex exponent;
  bool converged = false;
  /// Relative distance to the nearest eigenvalue on the refined grid.
  double partner_distance = 0.0;
};

/// r(s) sampled on the N+1 nodes of [0, period]; column j holds s = j*h.
struct PeriodicMode {
  Complex multiplier;
  Complex exponent;
  ComplexMatrix samples;
  double periodicity_residual = 0.0;
};

struct FloquetDecomposition {
  double period = 0.0;
  /// Sorted by descending magnitude, ties by ascending phase in (-pi, pi].
  std::vector<FloquetMultiplier> multipliers;
  std::vector<PeriodicMode> modes;
  int p_retained = 0;

  std::vector<Complex> retained() const;
};

struct ValidationReport {
  double coefficient_residual = 0.0;
  double tap_residual = 0.0;
  double kernel_residual = 0.0;
  double kernel_integral_bound = 0.0;
  double worst_time = 0.0;
  std::string worst_component;
  bool passed = false;
};

constexpr double kValidationTolerance = 1e-10;

/// Principal-branch exponent: Im(lambda) in (-pi/period, pi/period].
Complex principal_exponent(Complex multiplier, double period);

/// Strict ordering used for every multiplier list: |mu| descending, then phase ascending.
bool multiplier_order(Complex a, Complex b);

/// Infinity norm (max row sum) used for kernel bounds.
double matrix_norm(const Matrix& m);

ValidationReport validate_system(const LinearMemorySystem& system, const PeriodicGrid& grid);

/// ||L{T z} - T{L z}||_inf over the nodes of one period, with z the probe
/// history extended by integrating the homogeneous system over [0, 2*period].
double shift_commutation_residual(const LinearMemorySystem& system, const PeriodicGrid& grid,
                                  const StateSegment& probe);

/// Evaluates L{z}(s) for a function known through `value_at`.
Vector apply_operator(const LinearMemorySystem& system, double memory_depth, double step, double s,
                      const std::function<Vector(double)>& value_at);

/// Periodic cubic interpolant through `samples` taken at k*period/samples.size().
MatrixFn periodic_table(std::vector<Matrix> samples, double period);

/// Hash of the system's coefficients sampled on the grid nodes.
std::uint64_t fingerprint(const LinearMemorySystem& system, const PeriodicGrid& grid);

}  // namespace gfloquet
