#include "gfloquet/monodromy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

#include "integrator.hpp"

namespace gfloquet {

namespace {

std::vector<Matrix> canonical_history(int n, int nodes, int first_column, int columns) {
  std::vector<Matrix> history(nodes, Matrix::Zero(n, columns));
  for (int c = 0; c < columns; ++c) {
    const int flat = first_column + c;
    history[flat / n](flat % n, c) = 1.0;
  }
  return history;
}

int resolve_jobs(int jobs) {
  if (jobs > 0) return jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs `body(first, count)` over column chunks, possibly on several threads.
template <class Body>
void for_column_chunks(int columns, int jobs, Body body) {
  jobs = std::clamp(resolve_jobs(jobs), 1, std::max(1, columns));
  if (jobs == 1) {
    body(0, columns);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  const int chunk = (columns + jobs - 1) / jobs;
  for (int w = 0; w < jobs; ++w) {
    const int first = w * chunk;
    const int count = std::min(chunk, columns - first);
    if (count <= 0) break;
    workers.emplace_back([&, w, first, count] {
      try {
        body(first, count);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Flattened history segment ending at node `end` (n x columns per node).
Matrix segment_block(const detail::ColumnIntegrator& integ, int end, int n, int history) {
  const auto cols = integ.node(end).cols();
  Matrix out(static_cast<Eigen::Index>(n) * (history + 1), cols);
  for (int c = 0; c <= history; ++c) out.middleRows(static_cast<Eigen::Index>(c) * n, n) = integ.node(end - history + c);
  return out;
}

ComplexVector periodic_interpolate(const ComplexMatrix& samples, int period_nodes, double x) {
  x -= std::floor(x / period_nodes) * period_nodes;
  const double nearest = std::round(x);
  if (std::abs(x - nearest) < 1e-9) return samples.col(static_cast<int>(nearest) % period_nodes);
  const int below = static_cast<int>(std::floor(x));
  double w[4];
  detail::lagrange_weights(x, below - 1, 4, w);
  ComplexVector out = ComplexVector::Zero(samples.rows());
  for (int a = 0; a < 4; ++a) {
    int idx = (below - 1 + a) % period_nodes;
    if (idx < 0) idx += period_nodes;
    out += w[a] * samples.col(idx);
  }
  return out;
}

/// Propagates a complex history segment over one period and builds r(s).
PeriodicMode propagate_mode(const LinearMemorySystem& system, const PeriodicGrid& grid,
                            Complex multiplier, const ComplexVector& eigenvector) {
  const int n = system.dimension;
  const int nodes = grid.history_points() + 1;
  const int N = grid.samples_per_period();
  std::vector<Matrix> history(nodes, Matrix(n, 2));
  for (int c = 0; c < nodes; ++c) {
    for (int i = 0; i < n; ++i) {
      history[c](i, 0) = eigenvector(c * n + i).real();
      history[c](i, 1) = eigenvector(c * n + i).imag();
    }
  }
  const LinearMemorySystem hom = system.homogeneous();
  detail::ColumnIntegrator integ(hom, grid, std::move(history));
  integ.advance(N);

  PeriodicMode mode;
  mode.multiplier = multiplier;
  mode.exponent = principal_exponent(multiplier, grid.period());
  mode.samples.resize(n, N + 1);
  for (int j = 0; j <= N; ++j) {
    const Matrix& z = integ.node(j);
    const Complex decay = std::exp(-mode.exponent * grid.node(j));
    for (int i = 0; i < n; ++i) mode.samples(i, j) = Complex(z(i, 0), z(i, 1)) * decay;
  }

  double peak = 0.0;
  for (int j = 0; j <= N; ++j) peak = std::max(peak, mode.samples.col(j).norm());
  if (!(peak > 0.0) || !std::isfinite(peak)) {
    throw Error(ErrorCode::Eigensolver, "degenerate mode: zero or non-finite propagation");
  }
  int anchor = 0;
  for (int j = 0; j <= N; ++j) {
    if (mode.samples.col(j).norm() >= peak * (1.0 - 1e-9)) {
      anchor = j;
      break;
    }
  }
  Eigen::Index comp = 0;
  mode.samples.col(anchor).cwiseAbs().maxCoeff(&comp);
  const Complex pivot = mode.samples(comp, anchor);
  const Complex rotation = std::conj(pivot) / std::abs(pivot) / peak;
  mode.samples *= rotation;
  mode.periodicity_residual = (mode.samples.col(N) - mode.samples.col(0)).norm();
  return mode;
}

}  // namespace

Trajectory step_integrate(const LinearMemorySystem& system, const PeriodicGrid& grid,
                          const StateSegment& initial, double span) {
  initial.check(grid, system.dimension);
  const double steps_real = span / grid.step();
  const double steps_round = std::round(steps_real);
  if (!(span > 0.0) || std::abs(steps_real - steps_round) > 1e-9 * std::max(1.0, steps_real)) {
    std::ostringstream msg;
    msg << "span " << span << " is not a positive multiple of the step " << grid.step();
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
  std::vector<Matrix> history;
  for (int c = 0; c < initial.samples.cols(); ++c) history.emplace_back(initial.samples.col(c));
  detail::ColumnIntegrator::ColumnForcing forcing;
  if (system.forcing) forcing = [&](double t) -> Matrix { return system.forcing(t); };
  detail::ColumnIntegrator integ(system, grid, std::move(history), forcing);
  integ.advance(static_cast<int>(steps_round));
  return integ.column_trajectory(0);
}

MonodromyOperator build_monodromy(const LinearMemorySystem& system, const PeriodicGrid& grid, int jobs) {
  const int n = system.dimension;
  if (n <= 0) throw Error(ErrorCode::InvalidSystem, "dimension must be positive");
  const int history = grid.history_points();
  const int m = n * (history + 1);
  const int N = grid.samples_per_period();
  const LinearMemorySystem hom = system.homogeneous();

  MonodromyOperator op{Matrix(m, m), grid, n, fingerprint(hom, grid)};
  for_column_chunks(m, jobs, [&](int first, int count) {
    detail::ColumnIntegrator integ(hom, grid, canonical_history(n, history + 1, first, count));
    integ.advance(N);
    op.matrix.middleCols(first, count) = segment_block(integ, N, n, history);
  });
  if (!op.matrix.allFinite()) throw Error(ErrorCode::InvalidSystem, "monodromy has non-finite entries");
  return op;
}

std::vector<Complex> monodromy_eigenvalues(const MonodromyOperator& op) {
  Eigen::EigenSolver<Matrix> solver(op.matrix, false);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::Eigensolver, "eigensolver failed");
  const auto& ev = solver.eigenvalues();
  return std::vector<Complex>(ev.data(), ev.data() + ev.size());
}

FloquetDecomposition floquet_spectrum(const LinearMemorySystem& system, const PeriodicGrid& grid,
                                      const SpectrumOptions& options) {
  const ValidationReport rep = validate_system(system, grid);
  if (!rep.passed) {
    std::ostringstream msg;
    msg << "system fails validation: " << rep.worst_component << " residual at s=" << rep.worst_time;
    throw Error(ErrorCode::InvalidSystem, msg.str());
  }
  const MonodromyOperator coarse = build_monodromy(system, grid, options.jobs);
  const MonodromyOperator fine = build_monodromy(system, grid.refined(options.refinement_factor), options.jobs);

  Eigen::EigenSolver<Matrix> solver(coarse.matrix, true);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::Eigensolver, "eigensolver failed");
  const std::vector<Complex> partners = monodromy_eigenvalues(fine);

  const auto& ev = solver.eigenvalues();
  double radius = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) radius = std::max(radius, std::abs(ev(i)));

  FloquetDecomposition dec;
  dec.period = grid.period();
  std::vector<Eigen::Index> order(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return multiplier_order(ev(a), ev(b)); });

  std::vector<Eigen::Index> kept_index;
  for (Eigen::Index idx : order) {
    const Complex mu = ev(idx);
    FloquetMultiplier fm;
    fm.multiplier = mu;
    fm.exponent = principal_exponent(mu, grid.period());
    double best = std::numeric_limits<double>::infinity();
    for (const Complex& nu : partners) best = std::min(best, std::abs(mu - nu));
    const double scale = std::abs(mu);
    fm.partner_distance = scale > 0.0 ? best / scale : std::numeric_limits<double>::infinity();
    fm.converged = scale > options.magnitude_floor * radius && fm.partner_distance <= options.match_tolerance;
    if (fm.converged) {
      ++dec.p_retained;
      kept_index.push_back(idx);
    }
    dec.multipliers.push_back(fm);
  }
  if (dec.p_retained == 0) {
    throw Error(ErrorCode::Convergence,
                "no multiplier agrees between grid resolutions; try a finer grid (larger N)");
  }
  const int modes = std::min<int>(options.max_modes, static_cast<int>(kept_index.size()));
  for (int k = 0; k < modes; ++k) {
    const Eigen::Index idx = kept_index[k];
    dec.modes.push_back(propagate_mode(system, grid, ev(idx), solver.eigenvectors().col(idx)));
  }
  return dec;
}

PeriodicMode extract_mode(const MonodromyOperator& op, Complex multiplier, const LinearMemorySystem& system,
                          const PeriodicGrid& grid, double tolerance) {
  const auto m = op.matrix.rows();
  const ComplexMatrix U = op.matrix.cast<Complex>();
  // Inverse iteration with a slightly perturbed shift so the factorisation stays regular.
  const Complex shift = multiplier * (1.0 + 1e-12) + Complex(1e-14, 0.0);
  Eigen::PartialPivLU<ComplexMatrix> lu(U - shift * ComplexMatrix::Identity(m, m));
  ComplexVector x = ComplexVector::Ones(m);
  for (Eigen::Index i = 0; i < m; ++i) x(i) += Complex(0.01 * ((i * 7919) % 13), 0.003 * (i % 5));
  for (int it = 0; it < 3; ++it) {
    x = lu.solve(x);
    const double norm = x.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw Error(ErrorCode::Eigensolver, "inverse iteration failed");
    x /= norm;
  }
  const double scale = std::max(1.0, op.matrix.cwiseAbs().maxCoeff());
  const double residual = (U * x - multiplier * x).norm();
  if (residual > tolerance * scale) {
    std::ostringstream msg;
    msg << "value " << multiplier << " is not an eigenvalue of the monodromy (residual " << residual << ")";
    throw Error(ErrorCode::Eigensolver, msg.str());
  }
  return propagate_mode(system, grid, multiplier, x);
}

double lambda_equation_residual(const LinearMemorySystem& system, const PeriodicGrid& grid,
                                const PeriodicMode& mode) {
  const int N = grid.samples_per_period();
  const int n = system.dimension;
  const double h = grid.step();
  const Complex lambda = mode.exponent;
  const ComplexMatrix& r = mode.samples;
  auto wrap = [N](int i) { return ((i % N) + N) % N; };
  if (!(r.cwiseAbs().maxCoeff() > 0.0)) return 0.0;

  const LinearMemorySystem hom = system.homogeneous();
  double worst = 0.0;
  double scale = 0.0;
  for (int i = 0; i < N; ++i) {
    const double si = grid.node(i);
    const ComplexVector dr = (-r.col(wrap(i + 2)) + 8.0 * r.col(wrap(i + 1)) - 8.0 * r.col(wrap(i - 1)) +
                              r.col(wrap(i - 2))) / (12.0 * h);
    auto value = [&](double s) -> ComplexVector {
      return std::exp(lambda * (s - si)) * periodic_interpolate(r, N, s / h);
    };
    const Vector re = apply_operator(hom, grid.memory_depth(), h, si, [&](double s) -> Vector { return value(s).real(); });
    const Vector im = apply_operator(hom, grid.memory_depth(), h, si, [&](double s) -> Vector { return value(s).imag(); });
    ComplexVector lz(n);
    for (int k = 0; k < n; ++k) lz(k) = Complex(re(k), im(k));
    const ComplexVector res = dr + lambda * r.col(i) - lz;
    worst = std::max(worst, res.norm());
    scale = std::max({scale, dr.norm(), std::abs(lambda) * r.col(i).norm(), lz.norm()});
  }
  return scale > 0.0 ? worst / scale : worst;
}

VerificationReport verify_floquet_form(const LinearMemorySystem& system, const PeriodicGrid& grid,
                                       const FloquetDecomposition& decomposition) {
  VerificationReport rep;
  const int n = system.dimension;
  const int history = grid.history_points();
  const int m = n * (history + 1);
  const int N = grid.samples_per_period();
  const LinearMemorySystem hom = system.homogeneous();

  detail::ColumnIntegrator integ(hom, grid, canonical_history(n, history + 1, 0, m));
  integ.advance(2 * N);
  const Matrix U = segment_block(integ, N, n, history);
  double peak = 0.0;
  double worst = 0.0;
  for (int i = 0; i <= N; ++i) {
    peak = std::max(peak, integ.node(i).cwiseAbs().maxCoeff());
    worst = std::max(worst, (integ.node(i + N) - integ.node(i) * U).cwiseAbs().maxCoeff());
  }
  rep.shift_representation = peak > 0.0 ? worst / peak : worst;

  for (const auto& mode : decomposition.modes) {
    ModeResidual mr;
    mr.multiplier = mode.multiplier;
    mr.periodicity = mode.periodicity_residual;
    mr.lambda_equation = lambda_equation_residual(system, grid, mode);
    rep.max_periodicity = std::max(rep.max_periodicity, mr.periodicity);
    rep.max_lambda_equation = std::max(rep.max_lambda_equation, mr.lambda_equation);
    rep.modes.push_back(mr);
  }
  for (const auto& fm : decomposition.multipliers) {
    if (fm.converged) {
      rep.integration_error_estimate = fm.partner_distance * std::abs(fm.multiplier);
      break;
    }
  }
  return rep;
}

namespace {

struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};

const GaussLegendre& gauss_legendre_16() {
  static const GaussLegendre rule = [] {
    constexpr int n = 16;
    GaussLegendre gl;
    for (int i = 1; i <= n; ++i) {
      double x = std::cos(std::numbers::pi * (i - 0.25) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0;
        double p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-15) break;
      }
      gl.nodes.push_back(x);
      gl.weights.push_back(2.0 / ((1.0 - x * x) * dp * dp));
    }
    return gl;
  }();
  return rule;
}

constexpr int kMaxBlocks = 60;

}  // namespace

double kernel_tail(const KernelFn& kernel, const std::function<double(double)>& bound, double depth,
                   const PeriodicGrid& grid) {
  const auto& gl = gauss_legendre_16();
  const double width = grid.step();
  double sup = 0.0;
  for (int i = 0; i < grid.samples_per_period(); ++i) {
    const double s = grid.node(i);
    double total = 0.0;
    bool settled = false;
    for (int k = 0; k < kMaxBlocks; ++k) {
      const double lo = depth + (std::ldexp(1.0, k) - 1.0) * width;
      const double hi = depth + (std::ldexp(1.0, k + 1) - 1.0) * width;
      const double mid = 0.5 * (lo + hi);
      const double half = 0.5 * (hi - lo);
      double block = 0.0;
      for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
        const double u = mid + half * gl.nodes[q];
        const double tau = s - u;
        block += gl.weights[q] * matrix_norm(kernel(s, tau)) * std::abs(bound(tau));
      }
      block *= half;
      if (!std::isfinite(block)) return std::numeric_limits<double>::infinity();
      total += block;
      if (k >= 4 && block <= 1e-12 * total) {
        settled = true;
        break;
      }
      if (total == 0.0 && k >= 8) {
        settled = true;
        break;
      }
    }
    if (!settled) return std::numeric_limits<double>::infinity();
    sup = std::max(sup, total);
  }
  return sup;
}

TruncationResult truncate_infinite_kernel(const KernelFn& kernel, const std::function<double(double)>& bound,
                                          double epsilon, const PeriodicGrid& grid) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
  const double h = grid.step();
  const double tail0 = kernel_tail(kernel, bound, 0.0, grid);
  if (!std::isfinite(tail0)) throw Error(ErrorCode::NotTruncatable, "kernel tail integral does not converge");
  if (tail0 < epsilon) return {0.0, tail0};

  long long hi = 1;
  double previous = tail0;
  double tail_hi = kernel_tail(kernel, bound, h, grid);
  int doublings = 0;
  while (!(tail_hi < epsilon)) {
    if (!std::isfinite(tail_hi) || ++doublings > kMaxBlocks || !(tail_hi < previous)) {
      throw Error(ErrorCode::NotTruncatable, "kernel tail does not decay with memory depth");
    }
    previous = tail_hi;
    hi *= 2;
    tail_hi = kernel_tail(kernel, bound, hi * h, grid);
  }
  long long lo = hi / 2;  // tail(lo*h) >= epsilon (lo = 0 covered by tail0)
  while (hi - lo > 1) {
    const long long mid = lo + (hi - lo) / 2;
    const double t = kernel_tail(kernel, bound, mid * h, grid);
    if (t < epsilon) {
      hi = mid;
      tail_hi = t;
    } else {
      lo = mid;
    }
  }
  return {hi * h, tail_hi};
}

}  // namespace gfloquet
