#include "gfloquet/bloch.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "gfloquet/monodromy.hpp"
#include "integrator.hpp"

namespace gfloquet {

namespace {

double bump(double y, double half_width) {
  if (std::abs(y) >= half_width) return 0.0;
  const double c = std::cos(std::numbers::pi * y / (2.0 * half_width));
  return c * c / half_width;
}

Matrix comb_jump(double strength) {
  Matrix j = Matrix::Identity(2, 2);
  j(1, 0) = strength;
  return j;
}

}  // namespace

void set_separable_kernel(NonlocalPotential1D& pot, const SeparableKernel& params) {
  const double a = pot.lattice_constant;
  if (!(params.half_width > 0.0) || params.half_width >= 0.5 * a) {
    throw Error(ErrorCode::InvalidArgument, "projector half width must lie in (0, a/2)");
  }
  const double w = params.half_width;
  const double c = params.center;
  const double g0 = params.gamma_onsite;
  const double g1 = params.gamma_neighbor;
  pot.kernel = [a, w, c, g0, g1](double x, double xp) {
    const double n = std::round((x - c) / a);
    const double bx = bump(x - c - n * a, w);
    if (bx == 0.0) return 0.0;
    double value = g0 * bump(xp - c - n * a, w);
    value += g1 * (bump(xp - c - (n + 1.0) * a, w) + bump(xp - c - (n - 1.0) * a, w));
    return bx * value;
  };
  pot.kernel_range = g1 != 0.0 ? a + 2.0 * w : 2.0 * w;
}

NonlocalPotential1D kronig_penney_potential(double strength_p, double lattice_constant) {
  NonlocalPotential1D pot;
  pot.lattice_constant = lattice_constant;
  pot.comb_strength = 2.0 * strength_p / lattice_constant;
  return pot;
}

PotentialValidation validate_potential(const NonlocalPotential1D& pot, int samples) {
  PotentialValidation rep;
  const double a = pot.lattice_constant;
  if (!(a > 0.0)) throw Error(ErrorCode::InvalidArgument, "lattice constant must be positive");
  const double h = a / samples;
  for (int i = 0; i <= samples; ++i) {
    const double x = i * h;
    const double v0 = pot.local_at(x);
    const double v1 = pot.local_at(x + a);
    if (!std::isfinite(v0) || !std::isfinite(v1)) {
      std::ostringstream msg;
      msg << "non-finite local potential at node x=" << x;
      throw Error(ErrorCode::InvalidSystem, msg.str());
    }
    rep.local_residual = std::max(rep.local_residual, std::abs(v1 - v0));
  }
  if (pot.kernel) {
    const int reach = static_cast<int>(std::ceil(pot.kernel_range / h));
    for (int i = 0; i < samples; ++i) {
      const double x = i * h;
      for (int j = i - reach; j <= i + reach; ++j) {
        const double xp = j * h;
        const double w = pot.kernel(x, xp);
        if (!std::isfinite(w)) {
          std::ostringstream msg;
          msg << "non-finite kernel at node x=" << x;
          throw Error(ErrorCode::InvalidSystem, msg.str());
        }
        rep.kernel_residual = std::max(rep.kernel_residual, std::abs(pot.kernel(x + a, xp + a) - w));
        rep.symmetry_residual = std::max(rep.symmetry_residual, std::abs(pot.kernel(xp, x) - w));
      }
    }
  }
  rep.passed = rep.local_residual <= kValidationTolerance && rep.kernel_residual <= kValidationTolerance &&
               rep.symmetry_residual <= kValidationTolerance;
  return rep;
}

LinearMemorySystem schrodinger_system(const NonlocalPotential1D& pot, double energy) {
  LinearMemorySystem sys;
  sys.dimension = 2;
  const auto local = pot.local;
  sys.coefficient = [local, energy](double x) {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 1) = 1.0;
    a(1, 0) = (local ? local(x) : 0.0) - energy;
    return a;
  };
  if (pot.kernel) {
    const auto kernel = pot.kernel;
    sys.kernel = [kernel](double x, double xp) {
      Matrix k = Matrix::Zero(2, 2);
      k(1, 0) = kernel(x, xp);
      return k;
    };
  }
  return sys;
}

namespace {

/// Bloch extension of node samples Y_0..Y_{N-1} (columns): Y_{j + lN} = mu^l Y_j.
class BlochExtension {
 public:
  BlochExtension(const ComplexMatrix& samples, int period_nodes, Complex multiplier, double step)
      : samples_(samples), period_(period_nodes), multiplier_(multiplier), step_(step) {}

  ComplexVector node(int j) const {
    const int l = static_cast<int>(std::floor(static_cast<double>(j) / period_));
    return std::pow(multiplier_, l) * samples_.col(j - l * period_);
  }

  ComplexVector at(double x) const {
    const double idx = x / step_;
    const double nearest = std::round(idx);
    if (std::abs(idx - nearest) < 1e-9) return node(static_cast<int>(nearest));
    const int below = static_cast<int>(std::floor(idx));
    double w[4];
    detail::lagrange_weights(idx, below - 1, 4, w);
    ComplexVector out = w[0] * node(below - 1);
    for (int a = 1; a < 4; ++a) out += w[a] * node(below - 1 + a);
    return out;
  }

 private:
  const ComplexMatrix& samples_;
  int period_;
  Complex multiplier_;
  double step_;
};

Matrix split_complex(const ComplexVector& v) {
  Matrix m(v.size(), 2);
  m.col(0) = v.real();
  m.col(1) = v.imag();
  return m;
}

ComplexMatrix integrate_cell(const LinearMemorySystem& sys, const PeriodicGrid& grid, const ComplexVector& start,
                             const BlochExtension* previous, const std::function<double(double, double)>& kernel,
                             double range) {
  const int N = grid.samples_per_period();
  const int history = grid.history_points();
  std::vector<Matrix> nodes;
  nodes.reserve(history + 1);
  for (int c = -history; c < 0; ++c) {
    nodes.push_back(previous ? split_complex(previous->node(c)) : Matrix::Zero(2, 2));
  }
  nodes.push_back(split_complex(start));

  detail::ColumnIntegrator::ColumnForcing forcing;
  if (previous && kernel) {
    const double h = grid.step();
    const int window = static_cast<int>(std::floor(range / h + 1e-9));
    const double partial = range - window * h;
    const auto weights = detail::window_weights(window);
    forcing = [=](double x) -> Matrix {
      Complex acc = 0.0;
      for (int j = 0; j <= window && window > 0; ++j) {
        acc += weights[j] * h * kernel(x, x + j * h) * previous->at(x + j * h)(0);
      }
      if (partial > 1e-9 * h) {
        acc += 0.5 * partial *
               (kernel(x, x + window * h) * previous->at(x + window * h)(0) +
                kernel(x, x + range) * previous->at(x + range)(0));
      }
      Matrix b = Matrix::Zero(2, 2);
      b(1, 0) = acc.real();
      b(1, 1) = acc.imag();
      return b;
    };
  }
  detail::ColumnIntegrator integ(sys, grid, std::move(nodes), forcing);
  integ.advance(N);
  ComplexMatrix out(2, N + 1);
  for (int j = 0; j <= N; ++j) {
    const Matrix& z = integ.node(j);
    out(0, j) = Complex(z(0, 0), z(0, 1));
    out(1, j) = Complex(z(1, 0), z(1, 1));
  }
  return out;
}

}  // namespace

SelfConsistentCell solve_cell_self_consistent(const NonlocalPotential1D& pot, double energy, Complex multiplier,
                                              const ComplexVector& initial, int samples,
                                              const FixedPointOptions& options) {
  if (initial.size() != 2) throw Error(ErrorCode::InvalidArgument, "initial state must have two components");
  const double a = pot.lattice_constant;
  if (pot.kernel && pot.kernel_range >= a * samples) {
    throw Error(ErrorCode::InvalidArgument, "kernel range exceeds the representable history");
  }
  const PeriodicGrid grid(a, samples, pot.kernel ? pot.kernel_range : 0.0);
  const LinearMemorySystem full = schrodinger_system(pot, energy);
  LinearMemorySystem local = full;
  local.kernel = nullptr;
  const ComplexVector start = comb_jump(pot.comb_strength).cast<Complex>() * initial;

  SelfConsistentCell out;
  const PeriodicGrid local_grid(a, samples, 0.0);
  ComplexMatrix current = integrate_cell(local, local_grid, start, nullptr, {}, 0.0);
  if (pot.kernel) {
    double last_update = 0.0;
    bool settled = false;
    for (int it = 1; it <= options.max_iterations; ++it) {
      const ComplexMatrix base = current.leftCols(samples);
      const BlochExtension ext(base, samples, multiplier, grid.step());
      const ComplexMatrix next = integrate_cell(full, grid, start, &ext, pot.kernel, pot.kernel_range);
      const double scale = std::max(current.cwiseAbs().maxCoeff(), 1e-300);
      const double update = (next - current).cwiseAbs().maxCoeff() / scale;
      current += options.relaxation * (next - current);
      out.iterations = it;
      if (last_update > 0.0) out.contraction = update / last_update;
      last_update = update;
      if (!std::isfinite(update) || update > 1e8) break;
      if (update < options.tolerance) {
        settled = true;
        break;
      }
    }
    if (!settled) {
      std::ostringstream msg;
      msg << "nonlocal self-consistency did not converge (contraction estimate " << out.contraction << ")";
      throw Error(ErrorCode::Convergence, msg.str());
    }
  } else {
    out.iterations = 1;
  }
  out.state = current;
  const double norm0 = std::max(initial.norm(), 1e-300);
  out.bloch_residual = (current.col(samples) - multiplier * initial).norm() / norm0;
  return out;
}

CollocationProblem assemble_collocation(const NonlocalPotential1D& pot, double energy, int samples) {
  if (samples < PeriodicGrid::kMinSamples) throw Error(ErrorCode::InvalidArgument, "need at least 8 samples per cell");
  const double a = pot.lattice_constant;
  const double h = a / samples;
  const int N = samples;
  std::map<int, Matrix> blocks;
  auto entry = [&](int row, int global, double value) {
    const int l = static_cast<int>(std::floor(static_cast<double>(global) / N));
    auto it = blocks.find(l);
    if (it == blocks.end()) it = blocks.emplace(l, Matrix::Zero(N, N)).first;
    it->second(row, global - l * N) += value;
  };
  const double inv_h2 = 1.0 / (h * h);
  const int reach = pot.kernel ? static_cast<int>(std::ceil(pot.kernel_range / h)) : 0;
  for (int j = 0; j < N; ++j) {
    const double x = j * h;
    double diag = 2.0 * inv_h2 + pot.local_at(x) - energy;
    if (j == 0) diag += pot.comb_strength / h;
    entry(j, j, diag);
    entry(j, j + 1, -inv_h2);
    entry(j, j - 1, -inv_h2);
    for (int g = j - reach; g <= j + reach && pot.kernel; ++g) {
      const double w = pot.kernel(x, g * h);
      if (w != 0.0) entry(j, g, h * w);
    }
  }
  CollocationProblem prob;
  prob.samples = N;
  for (const auto& [l, m] : blocks) {
    if (m.cwiseAbs().maxCoeff() > 0.0) prob.max_offset = std::max(prob.max_offset, std::abs(l));
  }
  const int L = prob.max_offset;
  prob.blocks.assign(2 * L + 1, Matrix::Zero(N, N));
  for (const auto& [l, m] : blocks) {
    if (std::abs(l) <= L) prob.blocks[l + L] = m;
  }
  return prob;
}

namespace {

// Companion pencil A x = mu B x of sum_i mu^i coeffs[i].
void companion_pencil(const std::vector<Matrix>& coeffs, Matrix& A, Matrix& B) {
  const int d = static_cast<int>(coeffs.size()) - 1;
  const auto R = coeffs.front().rows();
  const auto size = d * R;
  A = Matrix::Zero(size, size);
  B = Matrix::Identity(size, size);
  for (int i = 0; i + 1 < d; ++i) A.block(i * R, (i + 1) * R, R, R) = Matrix::Identity(R, R);
  for (int i = 0; i < d; ++i) A.block((d - 1) * R, i * R, R, R) = -coeffs[i];
  B.block((d - 1) * R, (d - 1) * R, R, R) = coeffs[d];
}

void keep_finite(std::vector<Complex>& out, Complex mu) {
  if (!std::isfinite(mu.real()) || !std::isfinite(mu.imag()) || mu == Complex(0.0)) return;
  out.push_back(mu);
}

}  // namespace

std::vector<Complex> polynomial_eigenvalues(const std::vector<Matrix>& coeffs) {
  if (coeffs.size() < 2) return {};
  Matrix A, B;
  companion_pencil(coeffs, A, B);
  // Shift and invert: theta = 1/(mu - sigma) are the eigenvalues of (A - sigma B)^{-1} B.
  // Eigen's QZ draws exceptional shifts from std::rand, so it is not reproducible.
  Eigen::PartialPivLU<Matrix> lu;
  double sigma = 0.0;
  double best = -1.0;
  for (double candidate : {0.3141, -0.4472, 1.7321, -2.2361, 0.0517}) {
    Eigen::PartialPivLU<Matrix> trial(A - candidate * B);
    const double rc = trial.rcond();
    if (rc > best) {
      best = rc;
      sigma = candidate;
      lu = trial;
    }
    if (rc > 1e-6) break;
  }
  if (!(best > 1e-14)) throw Error(ErrorCode::Eigensolver, "polynomial eigenproblem is singular");
  Eigen::EigenSolver<Matrix> es(lu.solve(B), false);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::Eigensolver, "eigensolver failed");
  std::vector<Complex> out;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const Complex theta = es.eigenvalues()(i);
    if (theta == Complex(0.0)) continue;
    keep_finite(out, sigma + 1.0 / theta);
  }
  return out;
}

std::vector<Complex> qz_polynomial_eigenvalues(const std::vector<Matrix>& coeffs) {
  if (coeffs.size() < 2) return {};
  Matrix A, B;
  companion_pencil(coeffs, A, B);
  Eigen::GeneralizedEigenSolver<Matrix> qz(A, B, false);
  if (qz.info() != Eigen::Success) throw Error(ErrorCode::Eigensolver, "QZ iteration failed");
  std::vector<Complex> out;
  for (Eigen::Index i = 0; i < qz.alphas().size(); ++i) {
    if (qz.betas()(i) == 0.0) continue;
    keep_finite(out, qz.alphas()(i) / qz.betas()(i));
  }
  return out;
}

std::vector<Complex> collocation_multipliers_full(const CollocationProblem& problem) {
  return qz_polynomial_eigenvalues(problem.blocks);
}

std::vector<Complex> collocation_multipliers_reduced(const CollocationProblem& problem) {
  const int L = problem.max_offset;
  const int N = problem.samples;
  if (L == 0) return {};
  const Matrix& c0 = problem.blocks[L];
  Eigen::PartialPivLU<Matrix> lu(c0);
  if (!(lu.rcond() > 1e-13)) return polynomial_eigenvalues(problem.blocks);

  struct Factor {
    int offset;
    Matrix left;   // N x r
    Matrix right;  // N x r, block = left * right^T
  };
  std::vector<Factor> factors;
  for (int l = -L; l <= L; ++l) {
    if (l == 0) continue;
    const Matrix& block = problem.blocks[l + L];
    std::vector<int> rows;
    std::vector<int> cols;
    for (int i = 0; i < N; ++i) {
      if (block.row(i).cwiseAbs().maxCoeff() > 0.0) rows.push_back(i);
      if (block.col(i).cwiseAbs().maxCoeff() > 0.0) cols.push_back(i);
    }
    if (rows.empty()) continue;
    Matrix sub(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < cols.size(); ++j) sub(i, j) = block(rows[i], cols[j]);
    }
    Eigen::JacobiSVD<Matrix> svd(sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    int rank = 0;
    while (rank < sv.size() && sv(rank) > 1e-12 * sv(0)) ++rank;
    Factor f{l, Matrix::Zero(N, rank), Matrix::Zero(N, rank)};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      f.left.row(rows[i]) = svd.matrixU().row(i).head(rank).cwiseProduct(sv.head(rank).transpose());
    }
    for (std::size_t j = 0; j < cols.size(); ++j) f.right.row(cols[j]) = svd.matrixV().row(j).head(rank);
    factors.push_back(std::move(f));
  }
  std::vector<int> start;
  int R = 0;
  for (const auto& f : factors) {
    start.push_back(R);
    R += static_cast<int>(f.left.cols());
  }
  // w_k + sum_l mu^l V_k^T C0^{-1} U_l w_l = 0, multiplied through by mu^L.
  std::vector<Matrix> coeffs(2 * L + 1, Matrix::Zero(R, R));
  coeffs[L] = Matrix::Identity(R, R);
  for (std::size_t b = 0; b < factors.size(); ++b) {
    const Matrix solved = lu.solve(factors[b].left);
    for (std::size_t k = 0; k < factors.size(); ++k) {
      coeffs[factors[b].offset + L].block(start[k], start[b], factors[k].right.cols(), factors[b].left.cols()) +=
          factors[k].right.transpose() * solved;
    }
  }
  return polynomial_eigenvalues(coeffs);
}

namespace {

std::vector<Complex> cell_multipliers(const NonlocalPotential1D& pot, double energy, int samples) {
  if (pot.is_local()) {
    const LinearMemorySystem sys = schrodinger_system(pot, energy);
    const PeriodicGrid grid(pot.lattice_constant, samples, 0.0);
    const MonodromyOperator op = build_monodromy(sys, grid);
    const Matrix u = op.matrix * comb_jump(pot.comb_strength);
    Eigen::EigenSolver<Matrix> es(u, false);
    const auto& ev = es.eigenvalues();
    return {ev(0), ev(1)};
  }
  return collocation_multipliers_reduced(assemble_collocation(pot, energy, samples));
}

}  // namespace

PropagationResult propagating_multipliers(const NonlocalPotential1D& pot, double energy, int samples,
                                          const BlochOptions& options) {
  if (!(pot.lattice_constant > 0.0)) throw Error(ErrorCode::InvalidArgument, "lattice constant must be positive");
  if (pot.kernel && pot.kernel_range >= pot.lattice_constant * samples) {
    throw Error(ErrorCode::InvalidArgument, "kernel range exceeds the representable history");
  }
  auto classify = [&](const std::vector<Complex>& raw, std::vector<Complex>& all, std::vector<Complex>& prop) {
    for (const Complex& mu : raw) {
      const double lm = std::abs(std::log(std::abs(mu)));
      if (!(lm <= options.log_magnitude_cap)) continue;
      all.push_back(mu);
      if (lm <= options.unit_tol) prop.push_back(mu);
    }
    std::sort(all.begin(), all.end(), multiplier_order);
    std::sort(prop.begin(), prop.end(), multiplier_order);
  };
  PropagationResult out;
  classify(cell_multipliers(pot, energy, samples), out.all, out.propagating);
  out.p = static_cast<int>(out.propagating.size());
  std::vector<Complex> all2;
  std::vector<Complex> prop2;
  classify(cell_multipliers(pot, energy, 2 * samples), all2, prop2);
  out.confirmed = static_cast<int>(prop2.size()) == out.p;
  return out;
}

KronigPenneyResult kronig_penney_reference(double strength_p, double lattice_constant, double energy) {
  if (!(energy > 0.0)) throw Error(ErrorCode::InvalidArgument, "Kronig-Penney reference needs E > 0");
  const double qa = std::sqrt(energy) * lattice_constant;
  KronigPenneyResult out;
  out.discriminant = std::cos(qa) + strength_p * std::sin(qa) / qa;
  out.allowed = std::abs(out.discriminant) <= 1.0;
  if (out.allowed) out.k = std::acos(out.discriminant) / lattice_constant;
  return out;
}

double fold_wavevector(Complex multiplier, double lattice_constant) {
  double phase = std::arg(multiplier);
  if (phase <= -std::numbers::pi) phase += 2.0 * std::numbers::pi;
  return phase / lattice_constant;
}

BandDiagram band_scan(const NonlocalPotential1D& pot, const std::vector<double>& energies, int samples,
                      const BlochOptions& options) {
  if (!std::is_sorted(energies.begin(), energies.end())) {
    throw Error(ErrorCode::InvalidArgument, "energy grid must be sorted ascending");
  }
  BandDiagram diagram;
  diagram.lattice_constant = pot.lattice_constant;
  diagram.records.resize(energies.size());
  auto work = [&](std::size_t i) {
    BandRecord& rec = diagram.records[i];
    rec.energy = energies[i];
    try {
      const PropagationResult res = propagating_multipliers(pot, energies[i], samples, options);
      for (const Complex& mu : res.propagating) rec.k_values.push_back(fold_wavevector(mu, pot.lattice_constant));
      std::sort(rec.k_values.begin(), rec.k_values.end());
      for (const Complex& mu : res.all) rec.multiplier_magnitudes.push_back(std::abs(mu));
      rec.p = res.p;
      rec.confirmed = res.confirmed;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
  };
  int jobs = options.jobs > 0 ? options.jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(energies.size())));
  if (jobs == 1) {
    for (std::size_t i = 0; i < energies.size(); ++i) work(i);
  } else {
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t i = w; i < energies.size(); i += jobs) work(i);
      });
    }
    for (auto& t : workers) t.join();
  }
  return diagram;
}

namespace {

struct Sheet {
  std::vector<std::pair<double, double>> points;  // (k, E)
  int born = 0;
  int died = -1;
  int direction = 0;
  // Sheets split where k turns back at the zone boundary (gapless fold).
  bool born_reflected = false;
  bool died_reflected = false;
};

int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

ExtremaResult detect_interior_extrema(const BandDiagram& diagram) {
  ExtremaResult out;
  const auto& recs = diagram.records;
  const int count = static_cast<int>(recs.size());
  const double kmax = std::numbers::pi / diagram.lattice_constant;
  const double jump = kmax / 2.0;
  const double edge = 1e-9 * kmax;
  std::vector<Sheet> sheets;
  std::vector<int> active;

  auto end_all = [&](int record) {
    for (int s : active) sheets[s].died = record;
    active.clear();
  };

  for (int r = 0; r < count; ++r) {
    const BandRecord& rec = recs[r];
    if (!rec.ok || rec.p == 0) {
      end_all(r);
      continue;
    }
    std::vector<double> ks;
    for (double k : rec.k_values) {
      if (k > edge && k < kmax - edge) ks.push_back(k);
    }
    if (ks.size() > 1) out.ambiguous = true;

    struct Candidate {
      double distance;
      int sheet;
      int k;
    };
    std::vector<Candidate> candidates;
    for (int s : active) {
      for (std::size_t j = 0; j < ks.size(); ++j) {
        const double d = std::abs(sheets[s].points.back().first - ks[j]);
        if (d <= jump) candidates.push_back({d, s, static_cast<int>(j)});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& x, const Candidate& y) { return x.distance < y.distance; });
    std::vector<int> sheet_taken(sheets.size(), 0);
    std::vector<int> k_taken(ks.size(), 0);
    std::vector<int> reflected_k(ks.size(), 0);
    for (const auto& c : candidates) {
      if (sheet_taken[c.sheet] || k_taken[c.k]) continue;
      Sheet& sh = sheets[c.sheet];
      sheet_taken[c.sheet] = 1;
      k_taken[c.k] = 1;
      const double step = ks[c.k] - sh.points.back().first;
      const int dir = step > edge ? 1 : (step < -edge ? -1 : 0);
      if (sh.direction != 0 && dir == -sh.direction) {
        sheet_taken[c.sheet] = 0;
        sh.died_reflected = true;
        k_taken[c.k] = 0;
        reflected_k[c.k] = 1;
        continue;
      }
      if (dir != 0) sh.direction = dir;
      sh.points.emplace_back(ks[c.k], rec.energy);
    }
    std::vector<int> still;
    for (int s : active) {
      if (sheet_taken[s]) {
        still.push_back(s);
      } else {
        sheets[s].died = r;
      }
    }
    for (std::size_t j = 0; j < ks.size(); ++j) {
      if (k_taken[j]) continue;
      Sheet sh;
      sh.points.emplace_back(ks[j], rec.energy);
      sh.born = r;
      sh.born_reflected = reflected_k[j] != 0;
      sheets.push_back(std::move(sh));
      still.push_back(static_cast<int>(sheets.size()) - 1);
    }
    active = std::move(still);
  }
  end_all(count);

  // k(E) is monotonic along every sheet, so an interior extremum shows up as two
  // sheets appearing (minimum) or vanishing (maximum) together at neighbouring k.
  const int n = static_cast<int>(sheets.size());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<int> born_paired(n, 0), died_paired(n, 0);
  std::vector<BandExtremum> found;
  std::vector<int> found_sheet;
  for (int s = 0; s < n; ++s) {
    for (int t = s + 1; t < n; ++t) {
      const Sheet& x = sheets[s];
      const Sheet& y = sheets[t];
      const int b = x.born;
      if (!born_paired[s] && !born_paired[t] && b == y.born && b > 0 && recs[b - 1].ok && !x.born_reflected &&
          !y.born_reflected && std::abs(x.points.front().first - y.points.front().first) < jump) {
        born_paired[s] = born_paired[t] = 1;
        parent[find_root(parent, s)] = find_root(parent, t);
        found.push_back({0, 0.5 * (x.points.front().first + y.points.front().first),
                         0.5 * (recs[b - 1].energy + recs[b].energy), true});
        found_sheet.push_back(s);
      }
      const int d = x.died;
      if (!died_paired[s] && !died_paired[t] && d == y.died && d < count && recs[d].ok && !x.died_reflected &&
          !y.died_reflected && std::abs(x.points.back().first - y.points.back().first) < jump) {
        died_paired[s] = died_paired[t] = 1;
        parent[find_root(parent, s)] = find_root(parent, t);
        found.push_back({0, 0.5 * (x.points.back().first + y.points.back().first),
                         0.5 * (recs[d - 1].energy + recs[d].energy), false});
        found_sheet.push_back(s);
      }
    }
  }
  std::map<int, int> band_of_root;
  for (int s = 0; s < n; ++s) {
    const int root = find_root(parent, s);
    if (!band_of_root.count(root)) {
      const int next = static_cast<int>(band_of_root.size());
      band_of_root[root] = next;
    }
  }
  out.bands = static_cast<int>(band_of_root.size());
  for (std::size_t i = 0; i < found.size(); ++i) {
    found[i].band = band_of_root[find_root(parent, found_sheet[i])];
    out.extrema.push_back(found[i]);
  }
  std::sort(out.extrema.begin(), out.extrema.end(),
            [](const BandExtremum& x, const BandExtremum& y) { return x.energy < y.energy; });
  return out;
}

}  // namespace gfloquet
