#include "gfloquet/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "integrator.hpp"

namespace gfloquet {

namespace {

constexpr double kWrapTolerance = 1e-8;

/// Trigonometric-interpolant derivative of periodic samples (columns 0..N-1).
Matrix spectral_derivative(const Matrix& samples, int N, double period) {
  std::vector<Complex> twiddle(N);
  for (int m = 0; m < N; ++m) twiddle[m] = std::polar(1.0, -2.0 * std::numbers::pi * m / N);
  Matrix out(samples.rows(), N);
  std::vector<Complex> coeff(N);
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    for (int k = 0; k < N; ++k) {
      Complex acc = 0.0;
      for (int j = 0; j < N; ++j) acc += samples(r, j) * twiddle[(static_cast<long>(j) * k) % N];
      const int freq = k <= N / 2 ? k : k - N;
      coeff[k] = (2 * freq == N) ? Complex(0.0) : acc * Complex(0.0, 2.0 * std::numbers::pi * freq / period);
    }
    for (int j = 0; j < N; ++j) {
      Complex acc = 0.0;
      for (int k = 0; k < N; ++k) acc += coeff[k] * std::conj(twiddle[(static_cast<long>(j) * k) % N]);
      out(r, j) = acc.real() / N;
    }
  }
  return out;
}

}  // namespace

double LimitCycle::wrap_residual() const {
  if (samples.cols() < 2) return 0.0;
  return (samples.col(samples.cols() - 1) - samples.col(0)).cwiseAbs().maxCoeff();
}

Vector LimitCycle::at(double t) const {
  const int N = samples_per_period();
  double x = t / period * N;
  x -= std::floor(x / N) * N;
  const double nearest = std::round(x);
  if (std::abs(x - nearest) < 1e-12) return samples.col(static_cast<int>(nearest) % N);
  const int below = static_cast<int>(std::floor(x));
  double w[4];
  detail::lagrange_weights(x, below - 1, 4, w);
  Vector out = Vector::Zero(samples.rows());
  for (int a = 0; a < 4; ++a) {
    int idx = (below - 1 + a) % N;
    if (idx < 0) idx += N;
    out += w[a] * samples.col(idx);
  }
  return out;
}

Matrix jacobian(const VectorField& field, const Vector& y, double t, double fd_step) {
  const auto n = y.size();
  Matrix jac(n, n);
  Vector probe = y;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double delta = fd_step * (1.0 + std::abs(y(j)));
    probe(j) = y(j) + delta;
    const Vector up = field(probe, t);
    probe(j) = y(j) - delta;
    const Vector down = field(probe, t);
    probe(j) = y(j);
    if (up.size() != n || down.size() != n) {
      throw Error(ErrorCode::InvalidSystem, "vector field returned a vector of the wrong size");
    }
    jac.col(j) = (up - down) / (2.0 * delta);
  }
  if (!jac.allFinite()) {
    std::ostringstream msg;
    msg << "non-finite Jacobian entry at t=" << t;
    throw Error(ErrorCode::InvalidSystem, msg.str());
  }
  return jac;
}

LinearizationResult linearize(const NonlinearMemorySystem& nl, const LimitCycle& cycle, double fd_step) {
  const int n = nl.dimension;
  if (!nl.field) throw Error(ErrorCode::InvalidSystem, "vector field missing");
  if (cycle.samples.rows() != n) {
    std::ostringstream msg;
    msg << "limit cycle has dimension " << cycle.samples.rows() << ", system has " << n;
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
  const int N = cycle.samples_per_period();
  if (N < PeriodicGrid::kMinSamples) throw Error(ErrorCode::InvalidArgument, "limit cycle needs at least 9 samples");
  if (!(cycle.period > 0.0)) throw Error(ErrorCode::InvalidArgument, "limit cycle period must be positive");
  if (!cycle.samples.allFinite()) throw Error(ErrorCode::InvalidArgument, "limit cycle has non-finite samples");
  const double wrap = cycle.wrap_residual();
  if (wrap > kWrapTolerance) {
    std::ostringstream msg;
    msg << "limit cycle does not wrap: |y(T) - y(0)| = " << wrap;
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
  if (nl.period > 0.0 && std::abs(nl.period - cycle.period) > 1e-9 * nl.period) {
    throw Error(ErrorCode::InvalidArgument, "limit cycle period differs from the forcing period");
  }
  const double scale = std::max(1.0, cycle.samples.cwiseAbs().maxCoeff());
  if (!(fd_step > 0.0) || fd_step > 1e-2 * scale) {
    throw Error(ErrorCode::InvalidArgument, "fd_step must lie in (0, 1e-2 * max(1, |y_S|_inf)]");
  }

  LinearizationResult out{LinearMemorySystem{}, PeriodicGrid(cycle.period, N, nl.memory_depth), 0.0, {}};
  LinearMemorySystem& sys = out.system;
  sys.dimension = n;
  const auto field = nl.field;
  sys.coefficient = [field, cycle, fd_step](double t) { return jacobian(field, cycle.at(t), t, fd_step); };

  MatrixFn memory_jacobian;
  if (nl.memory_field) {
    const auto g = nl.memory_field;
    memory_jacobian = [g, cycle, fd_step](double t) { return jacobian(g, cycle.at(t), t, fd_step); };
  } else {
    memory_jacobian = [n](double) -> Matrix { return Matrix::Identity(n, n); };
  }
  for (const auto& tap : nl.delay_taps) {
    const auto coeff = tap.coefficient;
    const double d = tap.delay;
    sys.delay_taps.push_back({d, [coeff, memory_jacobian, d](double t) -> Matrix {
                                return coeff(t) * memory_jacobian(t - d);
                              }});
  }
  if (nl.kernel) {
    const auto kernel = nl.kernel;
    sys.kernel = [kernel, memory_jacobian](double t, double tau) -> Matrix {
      return kernel(t, tau) * memory_jacobian(tau);
    };
  }

  // Residual of the nonlinear equation along the supplied cycle.
  LinearMemorySystem memory_part;
  memory_part.dimension = n;
  memory_part.coefficient = [n](double) -> Matrix { return Matrix::Zero(n, n); };
  memory_part.delay_taps = nl.delay_taps;
  memory_part.kernel = nl.kernel;
  const auto g = nl.memory_field;
  auto g_along = [&](double s) -> Vector {
    const Vector y = cycle.at(s);
    return g ? g(y, s) : y;
  };
  const double h = cycle.period / N;
  const Matrix derivative = spectral_derivative(cycle.samples, N, cycle.period);
  for (int i = 0; i < N; ++i) {
    const double t = i * h;
    const Vector dy = derivative.col(i);
    Vector rhs = nl.field(cycle.samples.col(i), t);
    if (memory_part.has_memory()) rhs += apply_operator(memory_part, nl.memory_depth, h, t, g_along);
    out.cycle_residual = std::max(out.cycle_residual, (dy - rhs).cwiseAbs().maxCoeff());
  }
  if (out.cycle_residual > 1e-6 * scale) {
    std::ostringstream msg;
    msg << "limit cycle residual " << out.cycle_residual << " exceeds 1e-6 * scale";
    out.warnings.push_back(msg.str());
  }

  const ValidationReport rep = validate_system(sys, out.grid);
  if (!rep.passed) {
    std::ostringstream msg;
    msg << "linearised system is not periodic: " << rep.worst_component << " residual at t=" << rep.worst_time;
    throw Error(ErrorCode::InvalidSystem, msg.str());
  }
  return out;
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Stable:
      return "STABLE";
    case Verdict::Unstable:
      return "UNSTABLE";
    case Verdict::Marginal:
      return "MARGINAL";
  }
  return "MARGINAL";
}

StabilityReport stability_verdict(const FloquetDecomposition& dec, bool autonomous, double unit_tol) {
  const std::vector<Complex> retained = dec.retained();
  if (retained.empty()) throw Error(ErrorCode::InvalidArgument, "empty retained spectrum");
  StabilityReport rep;
  rep.autonomous = autonomous;
  std::size_t trivial = retained.size();
  if (autonomous) {
    trivial = 0;
    for (std::size_t i = 1; i < retained.size(); ++i) {
      if (std::abs(retained[i] - 1.0) < std::abs(retained[trivial] - 1.0)) trivial = i;
    }
    rep.has_trivial = true;
    rep.trivial_multiplier = retained[trivial];
    rep.trivial_error = std::abs(retained[trivial] - 1.0);
  }
  bool any_above = false;
  bool all_below = true;
  for (std::size_t i = 0; i < retained.size(); ++i) {
    ExponentClass cls;
    cls.multiplier = retained[i];
    cls.exponent = principal_exponent(retained[i], dec.period);
    cls.class_spacing = 2.0 * std::numbers::pi / dec.period;
    cls.trivial = i == trivial;
    rep.classes.push_back(cls);
    if (cls.trivial) continue;
    const double mag = std::abs(retained[i]);
    rep.max_nontrivial_magnitude = std::max(rep.max_nontrivial_magnitude, mag);
    if (mag > 1.0 + unit_tol) any_above = true;
    if (!(mag < 1.0 - unit_tol)) all_below = false;
  }
  rep.verdict = any_above ? Verdict::Unstable : (all_below ? Verdict::Stable : Verdict::Marginal);
  return rep;
}

Trajectory forced_response(const LinearMemorySystem& system, const PeriodicGrid& grid, const StateSegment& initial,
                           double span) {
  return step_integrate(system, grid, initial, span);
}

Trajectory variation_of_constants(const LinearMemorySystem& system, const PeriodicGrid& grid, const Vector& initial,
                                  double span) {
  if (system.has_memory()) {
    throw Error(ErrorCode::InvalidArgument, "variation of constants needs a square (memoryless) transition matrix");
  }
  const int n = system.dimension;
  const int steps = static_cast<int>(std::round(span / grid.step()));
  if (steps <= 0 || std::abs(steps * grid.step() - span) > 1e-9 * std::max(1.0, span)) {
    throw Error(ErrorCode::InvalidArgument, "span must be a positive multiple of the step");
  }
  const PeriodicGrid fine(grid.period(), 2 * grid.samples_per_period(), 0.0);
  const LinearMemorySystem hom = system.homogeneous();
  detail::ColumnIntegrator fundamental(hom, fine, {Matrix::Identity(n, n)});
  fundamental.advance(2 * steps);

  auto integrand = [&](int j) -> Vector {
    const Vector b = system.forcing ? system.forcing(fine.node(j)) : Vector::Zero(n);
    return fundamental.node(j).partialPivLu().solve(b);
  };
  Trajectory out;
  out.step = grid.step();
  out.history_points = 0;
  out.samples.resize(n, steps + 1);
  Vector accumulated = Vector::Zero(n);
  Vector left = integrand(0);
  out.samples.col(0) = initial;
  const double h = grid.step();
  for (int k = 0; k < steps; ++k) {
    const Vector mid = integrand(2 * k + 1);
    const Vector right = integrand(2 * k + 2);
    accumulated += (h / 6.0) * (left + 4.0 * mid + right);
    out.samples.col(k + 1) = fundamental.node(2 * k + 2) * (initial + accumulated);
    left = right;
  }
  return out;
}

double forced_response_crosscheck(const LinearMemorySystem& system, const PeriodicGrid& grid, const Vector& initial,
                                  double span) {
  StateSegment seg;
  seg.samples = initial;
  const Trajectory direct = forced_response(system, grid, seg, span);
  const Trajectory voc = variation_of_constants(system, grid, initial, span);
  double worst = 0.0;
  for (int k = 0; k <= voc.last_node(); ++k) {
    worst = std::max(worst, (direct.at_node(k) - voc.at_node(k)).cwiseAbs().maxCoeff());
  }
  return worst;
}

PeriodicMode shift_exponent_class(const PeriodicMode& mode, int k, double period) {
  PeriodicMode out = mode;
  const double omega = 2.0 * std::numbers::pi * k / period;
  out.exponent = mode.exponent + Complex(0.0, omega);
  const auto N = mode.samples.cols() - 1;
  for (Eigen::Index j = 0; j <= N; ++j) {
    const double s = period * static_cast<double>(j) / static_cast<double>(N);
    out.samples.col(j) *= std::exp(Complex(0.0, -omega * s));
  }
  return out;
}

}  // namespace gfloquet
