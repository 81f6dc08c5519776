#include "gfloquet/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "integrator.hpp"

namespace gfloquet {

PeriodicGrid::PeriodicGrid(double period, int samples_per_period, double memory_depth)
    : period_(period), samples_(samples_per_period), memory_depth_(memory_depth) {
  if (!(period > 0.0) || !std::isfinite(period)) {
    throw Error(ErrorCode::InvalidArgument, "period must be positive and finite");
  }
  if (samples_per_period < kMinSamples) {
    throw Error(ErrorCode::InvalidArgument, "samples_per_period must be at least 8");
  }
  if (!(memory_depth >= 0.0) || !std::isfinite(memory_depth)) {
    throw Error(ErrorCode::InvalidArgument, "memory depth must be non-negative and finite");
  }
  // Snap so that grid-aligned depths do not pick up an extra node from roundoff.
  history_ = static_cast<int>(std::ceil(memory_depth * samples_per_period / period - 1e-9));
  if (history_ < 0) history_ = 0;
}

PeriodicGrid PeriodicGrid::refined(int factor) const {
  return PeriodicGrid(period_, samples_ * factor, memory_depth_);
}

double LinearMemorySystem::max_delay() const {
  double d = 0.0;
  for (const auto& tap : delay_taps) d = std::max(d, tap.delay);
  return d;
}

LinearMemorySystem LinearMemorySystem::homogeneous() const {
  LinearMemorySystem out = *this;
  out.forcing = nullptr;
  return out;
}

StateSegment StateSegment::constant(const PeriodicGrid& grid, const Vector& value) {
  StateSegment seg;
  seg.samples = value.replicate(1, grid.history_points() + 1);
  return seg;
}

StateSegment StateSegment::from_flat(const PeriodicGrid& grid, int dimension, const Vector& flat) {
  const int nodes = grid.history_points() + 1;
  if (flat.size() != static_cast<Eigen::Index>(dimension) * nodes) {
    throw Error(ErrorCode::InvalidArgument, "flat segment has wrong length");
  }
  StateSegment seg;
  seg.samples = Eigen::Map<const Matrix>(flat.data(), dimension, nodes);
  return seg;
}

Vector StateSegment::flat() const {
  return Eigen::Map<const Vector>(samples.data(), samples.size());
}

void StateSegment::check(const PeriodicGrid& grid, int dimension) const {
  if (samples.rows() != dimension || samples.cols() != grid.history_points() + 1) {
    std::ostringstream msg;
    msg << "state segment must be " << dimension << " x " << grid.history_points() + 1
        << ", got " << samples.rows() << " x " << samples.cols();
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
  if (!samples.allFinite()) throw Error(ErrorCode::InvalidArgument, "state segment has non-finite entries");
}

std::vector<Complex> FloquetDecomposition::retained() const {
  std::vector<Complex> out;
  for (const auto& m : multipliers) {
    if (m.converged) out.push_back(m.multiplier);
  }
  return out;
}

Complex principal_exponent(Complex multiplier, double period) {
  const double mag = std::abs(multiplier);
  double phase = std::arg(multiplier);
  if (phase <= -std::numbers::pi) phase += 2.0 * std::numbers::pi;
  return Complex(std::log(mag), phase) / period;
}

bool multiplier_order(Complex a, Complex b) {
  const double ma = std::abs(a);
  const double mb = std::abs(b);
  if (ma != mb) return ma > mb;
  double pa = std::arg(a);
  double pb = std::arg(b);
  if (pa <= -std::numbers::pi) pa += 2.0 * std::numbers::pi;
  if (pb <= -std::numbers::pi) pb += 2.0 * std::numbers::pi;
  return pa < pb;
}

double matrix_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

namespace {

void require_finite(const Matrix& m, const char* what, double s) {
  if (!m.allFinite()) {
    std::ostringstream msg;
    msg << "non-finite " << what << " at node s=" << s;
    throw Error(ErrorCode::InvalidSystem, msg.str());
  }
}

void require_shape(const Matrix& m, int n, const char* what) {
  if (m.rows() != n || m.cols() != n) {
    std::ostringstream msg;
    msg << what << " must be " << n << "x" << n;
    throw Error(ErrorCode::InvalidSystem, msg.str());
  }
}

void track(double residual, double s, const char* what, double& slot, ValidationReport& rep,
           double& worst) {
  if (residual > slot) slot = residual;
  if (residual > worst) {
    worst = residual;
    rep.worst_time = s;
    rep.worst_component = what;
  }
}

}  // namespace

ValidationReport validate_system(const LinearMemorySystem& system, const PeriodicGrid& grid) {
  const int n = system.dimension;
  if (n <= 0) throw Error(ErrorCode::InvalidSystem, "dimension must be positive");
  if (!system.coefficient) throw Error(ErrorCode::InvalidSystem, "coefficient evaluator missing");
  if (system.max_delay() > grid.memory_depth() + 1e-12) {
    throw Error(ErrorCode::InvalidSystem, "delay exceeds memory depth");
  }
  for (const auto& tap : system.delay_taps) {
    if (!(tap.delay > 0.0)) throw Error(ErrorCode::InvalidSystem, "delays must be positive");
    if (!tap.coefficient) throw Error(ErrorCode::InvalidSystem, "delay tap evaluator missing");
  }

  ValidationReport rep;
  double worst = -1.0;
  const double period = grid.period();
  const int first = -grid.history_points();
  const int last = grid.samples_per_period();
  for (int i = first; i <= last; ++i) {
    const double s = grid.node(i);
    const Matrix a0 = system.coefficient(s);
    const Matrix a1 = system.coefficient(s + period);
    require_shape(a0, n, "coefficient");
    require_finite(a0, "coefficient", s);
    require_finite(a1, "coefficient", s + period);
    track((a1 - a0).cwiseAbs().maxCoeff(), s, "coefficient", rep.coefficient_residual, rep, worst);
    for (const auto& tap : system.delay_taps) {
      const Matrix b0 = tap.coefficient(s);
      const Matrix b1 = tap.coefficient(s + period);
      require_shape(b0, n, "delay coefficient");
      require_finite(b0, "delay coefficient", s);
      require_finite(b1, "delay coefficient", s + period);
      track((b1 - b0).cwiseAbs().maxCoeff(), s, "delay tap", rep.tap_residual, rep, worst);
    }
  }

  if (system.kernel && grid.memory_depth() > 0.0) {
    const double h = grid.step();
    const int window = static_cast<int>(std::floor(grid.memory_depth() / h + 1e-9));
    const auto weights = detail::window_weights(window);
    for (int i = 0; i <= last; ++i) {
      const double s = grid.node(i);
      double integral = 0.0;
      for (int j = 0; j <= window; ++j) {
        const double tau = s - j * h;
        const Matrix k0 = system.kernel(s, tau);
        const Matrix k1 = system.kernel(s + period, tau + period);
        require_shape(k0, n, "kernel");
        require_finite(k0, "kernel", s);
        require_finite(k1, "kernel", s + period);
        track((k1 - k0).cwiseAbs().maxCoeff(), s, "kernel", rep.kernel_residual, rep, worst);
        if (window > 0) integral += weights[j] * h * matrix_norm(k0);
      }
      const double partial = grid.memory_depth() - window * h;
      if (partial > 1e-9 * h) {
        const double far = s - grid.memory_depth();
        const Matrix kf = system.kernel(s, far);
        require_finite(kf, "kernel", s);
        integral += 0.5 * partial * (matrix_norm(system.kernel(s, s - window * h)) + matrix_norm(kf));
      }
      rep.kernel_integral_bound = std::max(rep.kernel_integral_bound, integral);
    }
  }

  rep.passed = rep.coefficient_residual <= kValidationTolerance &&
               rep.tap_residual <= kValidationTolerance &&
               rep.kernel_residual <= kValidationTolerance && std::isfinite(rep.kernel_integral_bound);
  return rep;
}

Vector apply_operator(const LinearMemorySystem& system, double memory_depth, double step, double s,
                      const std::function<Vector(double)>& value_at) {
  Vector out = system.coefficient(s) * value_at(s);
  for (const auto& tap : system.delay_taps) out += tap.coefficient(s) * value_at(s - tap.delay);
  if (system.kernel && memory_depth > 0.0) {
    const int window = static_cast<int>(std::floor(memory_depth / step + 1e-9));
    const auto weights = detail::window_weights(window);
    for (int j = 0; j <= window && window > 0; ++j) {
      out += (weights[j] * step) * system.kernel(s, s - j * step) * value_at(s - j * step);
    }
    const double partial = memory_depth - window * step;
    if (partial > 1e-9 * step) {
      const double far = s - memory_depth;
      out += (0.5 * partial) * (system.kernel(s, s - window * step) * value_at(s - window * step) +
                                system.kernel(s, far) * value_at(far));
    }
  }
  return out;
}

double shift_commutation_residual(const LinearMemorySystem& system, const PeriodicGrid& grid,
                                  const StateSegment& probe) {
  const int n = system.dimension;
  probe.check(grid, n);
  const LinearMemorySystem hom = system.homogeneous();
  std::vector<Matrix> history;
  for (int c = 0; c < probe.samples.cols(); ++c) history.emplace_back(probe.samples.col(c));
  detail::ColumnIntegrator integ(hom, grid, std::move(history));
  const int N = grid.samples_per_period();
  integ.advance(2 * N);

  const double period = grid.period();
  auto z = [&](double s) -> Vector { return integ.value_at(s); };
  auto shifted = [&](double s) -> Vector { return integ.value_at(s + period); };
  double residual = 0.0;
  for (int i = 0; i <= N; ++i) {
    const double s = grid.node(i);
    const Vector l_of_shift = apply_operator(hom, grid.memory_depth(), grid.step(), s, shifted);
    const Vector shift_of_l = apply_operator(hom, grid.memory_depth(), grid.step(), s + period, z);
    residual = std::max(residual, (l_of_shift - shift_of_l).cwiseAbs().maxCoeff());
  }
  return residual;
}

MatrixFn periodic_table(std::vector<Matrix> samples, double period) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "empty coefficient table");
  if (!(period > 0.0)) throw Error(ErrorCode::InvalidArgument, "table period must be positive");
  const auto rows = samples.front().rows();
  const auto cols = samples.front().cols();
  for (const auto& m : samples) {
    if (m.rows() != rows || m.cols() != cols) {
      throw Error(ErrorCode::InvalidArgument, "coefficient table entries differ in shape");
    }
  }
  return [samples = std::move(samples), period](double s) -> Matrix {
    const int count = static_cast<int>(samples.size());
    if (count == 1) return samples.front();
    double x = s / period * count;
    x -= std::floor(x / count) * count;
    const double nearest = std::round(x);
    if (std::abs(x - nearest) < 1e-12) return samples[static_cast<int>(nearest) % count];
    const int below = static_cast<int>(std::floor(x));
    const int stencil = std::min(4, count);
    const int first = stencil == 4 ? below - 1 : below;
    double w[4];
    detail::lagrange_weights(x, first, stencil, w);
    Matrix out = Matrix::Zero(samples.front().rows(), samples.front().cols());
    for (int a = 0; a < stencil; ++a) {
      int idx = (first + a) % count;
      if (idx < 0) idx += count;
      out += w[a] * samples[idx];
    }
    return out;
  };
}

std::uint64_t fingerprint(const LinearMemorySystem& system, const PeriodicGrid& grid) {
  std::uint64_t hash = 1469598103934665603ull;
  auto mix = [&](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) {
      hash ^= b;
      hash *= 1099511628211ull;
    }
  };
  auto mix_matrix = [&](const Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) mix(m.data()[i]);
  };
  mix(grid.period());
  mix(grid.samples_per_period());
  mix(grid.memory_depth());
  for (int i = 0; i <= grid.samples_per_period(); ++i) {
    const double s = grid.node(i);
    if (system.coefficient) mix_matrix(system.coefficient(s));
    for (const auto& tap : system.delay_taps) {
      mix(tap.delay);
      mix_matrix(tap.coefficient(s));
    }
    if (system.kernel && grid.memory_depth() > 0.0) {
      mix_matrix(system.kernel(s, s));
      mix_matrix(system.kernel(s, s - grid.memory_depth()));
    }
  }
  return hash;
}

}  // namespace gfloquet
