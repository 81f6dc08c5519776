#include "integrator.hpp"

#include <cmath>
#include <sstream>

namespace gfloquet::detail {

std::vector<double> window_weights(int intervals) {
  switch (intervals) {
    case 0:
      return {};
    case 1:
      return {0.5, 0.5};
    case 2:
      return {1.0 / 3, 4.0 / 3, 1.0 / 3};
    case 3:
      return {3.0 / 8, 9.0 / 8, 9.0 / 8, 3.0 / 8};
    case 4:
      return {1.0 / 3, 4.0 / 3, 2.0 / 3, 4.0 / 3, 1.0 / 3};
    default:
      break;
  }
  // End-corrected trapezoid, fourth order.
  std::vector<double> w(intervals + 1, 1.0);
  const double ends[3] = {3.0 / 8, 7.0 / 6, 23.0 / 24};
  for (int i = 0; i < 3; ++i) {
    w[i] = ends[i];
    w[intervals - i] = ends[i];
  }
  return w;
}

void lagrange_weights(double x, int first, int count, double* weights) {
  for (int a = 0; a < count; ++a) {
    double num = 1.0;
    double den = 1.0;
    const double xa = first + a;
    for (int b = 0; b < count; ++b) {
      if (b == a) continue;
      const double xb = first + b;
      num *= x - xb;
      den *= xa - xb;
    }
    weights[a] = num / den;
  }
}

namespace {

constexpr double kNodeSnap = 1e-9;

}  // namespace

ColumnIntegrator::ColumnIntegrator(const LinearMemorySystem& system, const PeriodicGrid& grid,
                                   std::vector<Matrix> history, ColumnForcing forcing)
    : system_(system),
      step_(grid.step()),
      memory_depth_(grid.memory_depth()),
      offset_(grid.history_points()),
      forcing_(std::move(forcing)),
      nodes_(std::move(history)) {
  if (static_cast<int>(nodes_.size()) != offset_ + 1) {
    throw Error(ErrorCode::InvalidArgument, "history must hold N_h+1 node values");
  }
  for (const auto& tap : system_.delay_taps) {
    if (tap.delay < step_ * (1.0 - kNodeSnap)) {
      std::ostringstream msg;
      msg << "delay " << tap.delay << " is not resolved by grid step " << step_;
      throw Error(ErrorCode::Resolution, msg.str());
    }
    if (tap.delay > memory_depth_ * (1.0 + kNodeSnap) + 1e-14) {
      std::ostringstream msg;
      msg << "delay " << tap.delay << " exceeds memory depth " << memory_depth_;
      throw Error(ErrorCode::InvalidArgument, msg.str());
    }
  }
  window_intervals_ = static_cast<int>(std::floor(memory_depth_ / step_ + kNodeSnap));
  window_partial_ = memory_depth_ - window_intervals_ * step_;
  if (window_partial_ < kNodeSnap * step_) window_partial_ = 0.0;
  window_weights_ = window_weights(window_intervals_);

  midpoints_.resize(nodes_.size());
  for (int i = -offset_ + 1; i + 2 <= 0; ++i) {
    midpoints_[i + offset_] = interpolate((i + 0.5) * step_, i - 1, i + 2);
  }
}

Matrix ColumnIntegrator::interpolate(double s, int lo, int hi) const {
  const double idx = s / step_;
  const double nearest = std::round(idx);
  if (std::abs(idx - nearest) < kNodeSnap) return node(static_cast<int>(nearest));
  int first = static_cast<int>(std::floor(idx)) - 1;
  if (first + 3 > hi) first = hi - 3;
  if (first < lo) first = lo;
  const int count = std::min(4, hi - first + 1);
  double w[4];
  lagrange_weights(idx, first, count, w);
  Matrix out = w[0] * node(first);
  for (int a = 1; a < count; ++a) out += w[a] * node(first + a);
  return out;
}

Matrix ColumnIntegrator::midpoint(int interval, int base) const {
  const int lo = base - offset_;
  if (interval - 1 >= std::max(lo, -offset_) && interval + 2 <= base) {
    const Matrix& cached = midpoints_[interval + offset_];
    if (cached.size() != 0) return cached;
  }
  return interpolate((interval + 0.5) * step_, lo, base);
}

void ColumnIntegrator::push_node(Matrix value) {
  if (!value.allFinite()) {
    std::ostringstream msg;
    msg << "non-finite state at t=" << current() * step_ + step_;
    throw Error(ErrorCode::InvalidSystem, msg.str());
  }
  nodes_.push_back(std::move(value));
  midpoints_.emplace_back();
  const int k = current();
  const int interval = k - 2;
  if (interval - 1 >= -offset_) {
    midpoints_[interval + offset_] = interpolate((interval + 0.5) * step_, interval - 1, k);
  }
}

Matrix ColumnIntegrator::rhs(double t, const Matrix& stage, int base, int stage_kind) const {
  Matrix out = system_.coefficient ? Matrix(system_.coefficient(t) * stage)
                                   : Matrix::Zero(stage.rows(), stage.cols());
  for (const auto& tap : system_.delay_taps) {
    out.noalias() += tap.coefficient(t) * interpolate(t - tap.delay, base - offset_, base);
  }
  if (system_.kernel && memory_depth_ > 0.0) {
    const int J = window_intervals_;
    Matrix midpoint_scratch;
    auto window_value = [&](int j) -> const Matrix& {
      if (j == 0) return stage;
      if (stage_kind == 1) midpoint_scratch = midpoint(base - j, base);
      switch (stage_kind) {
        case 0:
          return node(base - j);
        case 1:
          return midpoint_scratch;
        default:
          return node(base + 1 - j);
      }
    };
    for (int j = 0; j <= J && J > 0; ++j) {
      out.noalias() += (window_weights_[j] * step_) * system_.kernel(t, t - j * step_) * window_value(j);
    }
    if (window_partial_ > 0.0) {
      const double far = t - memory_depth_;
      out.noalias() += (0.5 * window_partial_) * system_.kernel(t, t - J * step_) * window_value(J);
      out.noalias() += (0.5 * window_partial_) * system_.kernel(t, far) * interpolate(far, base - offset_, base);
    }
  }
  if (forcing_) out += forcing_(t);
  return out;
}

void ColumnIntegrator::advance(int steps) {
  const double h = step_;
  nodes_.reserve(nodes_.size() + steps);
  midpoints_.reserve(midpoints_.size() + steps);
  for (int s = 0; s < steps; ++s) {
    const int k = current();
    const double t = k * h;
    const Matrix z = node(k);
    const Matrix k1 = rhs(t, z, k, 0);
    const Matrix k2 = rhs(t + 0.5 * h, z + (0.5 * h) * k1, k, 1);
    const Matrix k3 = rhs(t + 0.5 * h, z + (0.5 * h) * k2, k, 1);
    const Matrix k4 = rhs(t + h, z + h * k3, k, 2);
    push_node(z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  }
}

Trajectory ColumnIntegrator::column_trajectory(int column) const {
  Trajectory traj;
  traj.step = step_;
  traj.history_points = offset_;
  const auto rows = nodes_.front().rows();
  traj.samples.resize(rows, static_cast<Eigen::Index>(nodes_.size()));
  for (std::size_t i = 0; i < nodes_.size(); ++i) traj.samples.col(i) = nodes_[i].col(column);
  return traj;
}

}  // namespace gfloquet::detail
