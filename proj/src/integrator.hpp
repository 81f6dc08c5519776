#pragma once

// Fixed-step RK4 method-of-steps integrator shared by every time-domain
// routine. Several independent solutions (columns) are advanced together so
// coefficient evaluations are amortised when building monodromy matrices.

#include <functional>
#include <vector>

#include "gfloquet/core.hpp"

namespace gfloquet::detail {

/// Weights (in units of the step) for integrating over `intervals` uniform
/// intervals. Exact for cubics once intervals >= 3.
std::vector<double> window_weights(int intervals);

/// Lagrange weights for evaluating at `x` through nodes `first .. first+count-1`
/// (unit spacing).
void lagrange_weights(double x, int first, int count, double* weights);

class ColumnIntegrator {
 public:
  using ColumnForcing = std::function<Matrix(double)>;

  /// `history` holds N_h+1 node values (each n x columns) on [-r, 0].
  ColumnIntegrator(const LinearMemorySystem& system, const PeriodicGrid& grid,
                   std::vector<Matrix> history, ColumnForcing forcing = {});

  /// Advances `steps` nodes.
  void advance(int steps);

  /// Node value for index i in [-N_h, current].
  const Matrix& node(int index) const { return nodes_[index + offset_]; }
  int current() const { return static_cast<int>(nodes_.size()) - 1 - offset_; }
  int history_points() const { return offset_; }
  double step() const { return step_; }

  /// Cubic interpolation from all known nodes at time s (s <= current time).
  Matrix value_at(double s) const { return interpolate(s, -offset_, current()); }

  Trajectory column_trajectory(int column) const;

 private:
  Matrix rhs(double t, const Matrix& stage, int base, int stage_kind) const;
  /// Interpolates with a stencil restricted to nodes lo..hi. Restricting to
  /// the state window [k-N_h, k] makes one step a map of the segment alone.
  Matrix interpolate(double s, int lo, int hi) const;
  Matrix midpoint(int interval, int base) const;
  void push_node(Matrix value);

  const LinearMemorySystem& system_;
  double step_;
  double memory_depth_;
  int offset_;
  int window_intervals_;
  std::vector<double> window_weights_;
  double window_partial_;
  ColumnForcing forcing_;
  std::vector<Matrix> nodes_;
  // midpoints_[i + offset_] holds the centred interpolant of [i, i+1] once
  // nodes i-1 .. i+2 exist (empty otherwise).
  std::vector<Matrix> midpoints_;
};

}  // namespace gfloquet::detail
