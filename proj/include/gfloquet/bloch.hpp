#pragma once

// Bloch bands of a 1D crystal, -psi'' + V(x) psi + int W(x,x') psi(x') dx' = E psi,
// in units where hbar^2/2m = 1.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gfloquet/core.hpp"

namespace gfloquet {

struct NonlocalPotential1D {
  double lattice_constant = 1.0;
  /// a-periodic local part; empty means zero.
  std::function<double(double)> local;
  /// Strength of a delta comb sum_n alpha delta(x - n a) at the lattice sites.
  double comb_strength = 0.0;
  /// Bi-periodic symmetric kernel W(x, x'); empty means a local potential.
  std::function<double(double, double)> kernel;
  /// W is treated as zero for |x - x'| > kernel_range.
  double kernel_range = 0.0;

  bool is_local() const { return !kernel; }
  double local_at(double x) const { return local ? local(x) : 0.0; }
};

/// Projector kernel W = sum_n sum_l gamma_l beta(x - c - n a) beta(x' - c - (n+l) a),
/// with gamma_{-1} = gamma_{+1} = gamma_neighbor and gamma_0 = gamma_onsite, and
/// beta(y) = cos^2(pi y / 2w) / w on |y| < w (unit integral).
struct SeparableKernel {
  double gamma_onsite = 0.0;
  double gamma_neighbor = 1.6;
  double half_width = 0.2;
  double center = 0.5;
};

/// Installs the projector kernel on `pot` (range and evaluator).
void set_separable_kernel(NonlocalPotential1D& pot, const SeparableKernel& params);

/// Kronig-Penney comb with D(E) = cos(qa) + P sin(qa)/(qa): alpha = 2P/a.
NonlocalPotential1D kronig_penney_potential(double strength_p, double lattice_constant);

struct PotentialValidation {
  double local_residual = 0.0;
  double kernel_residual = 0.0;
  double symmetry_residual = 0.0;
  bool passed = false;
};

PotentialValidation validate_potential(const NonlocalPotential1D& pot, int samples);

/// State (psi, chi = psi'). Holds the local part and the causal half x' <= x of
/// the nonlocal term as a memory kernel with depth kernel_range. Comb impulses
/// are not representable here and are applied by the callers as jump matrices.
LinearMemorySystem schrodinger_system(const NonlocalPotential1D& pot, double energy);

struct SelfConsistentCell {
  /// psi and chi on the N+1 nodes of [0, a].
  ComplexMatrix state;
  int iterations = 0;
  /// Ratio of the last two update norms (estimated contraction constant).
  double contraction = 0.0;
  /// |Y(a) - mu Y(0)| / |Y(0)|.
  double bloch_residual = 0.0;
};

struct FixedPointOptions {
  double relaxation = 0.5;
  double tolerance = 1e-10;
  int max_iterations = 500;
};

/// Memory-formalism path: integrates one cell forward from `initial` with the
/// causal kernel, feeding the anticausal half of the nonlocal term from the
/// previous iterate (Bloch-extended with `multiplier`) until self-consistent.
/// Throws Error(Convergence) when the iteration does not settle.
SelfConsistentCell solve_cell_self_consistent(const NonlocalPotential1D& pot, double energy, Complex multiplier,
                                              const ComplexVector& initial, int samples,
                                              const FixedPointOptions& options = {});

/// Finite-difference discretisation of one cell with Bloch-extended unknowns:
/// sum_l mu^l C_l psi = 0 over cell offsets l = -max_offset .. max_offset.
struct CollocationProblem {
  int samples = 0;
  int max_offset = 0;
  /// blocks[l + max_offset] = C_l.
  std::vector<Matrix> blocks;
};

CollocationProblem assemble_collocation(const NonlocalPotential1D& pot, double energy, int samples);

/// Finite nonzero eigenvalues of sum_i mu^i coeffs[i]: companion linearisation,
/// shift and invert, real Schur. Reproducible bit for bit.
std::vector<Complex> polynomial_eigenvalues(const std::vector<Matrix>& coeffs);

/// Same roots from QZ on the companion pencil. Eigen's QZ uses random exceptional
/// shifts, so results can change in the last bits from call to call.
std::vector<Complex> qz_polynomial_eigenvalues(const std::vector<Matrix>& coeffs);

/// Oracle route: QZ on the full companion pencil of the collocation polynomial.
std::vector<Complex> collocation_multipliers_full(const CollocationProblem& problem);

/// Fast route: eliminates the cell interior through low-rank factors of the
/// off-diagonal blocks. Falls back to the whole polynomial when C_0 is singular.
std::vector<Complex> collocation_multipliers_reduced(const CollocationProblem& problem);

struct BlochOptions {
  double unit_tol = 1e-3;
  /// Multipliers with |ln|mu|| above this are treated as numerically infinite/zero.
  double log_magnitude_cap = 40.0;
  int jobs = 1;
};

struct PropagationResult {
  std::vector<Complex> propagating;
  std::vector<Complex> all;
  int p = 0;
  /// True when the refined grid reports the same propagating count.
  bool confirmed = false;
};

/// Local potentials use the one-cell 2x2 monodromy (times the comb jump);
/// nonlocal ones use the collocation polynomial. Propagating means |ln|mu|| <= unit_tol.
PropagationResult propagating_multipliers(const NonlocalPotential1D& pot, double energy, int samples,
                                          const BlochOptions& options = {});

struct KronigPenneyResult {
  bool allowed = false;
  double discriminant = 0.0;
  std::optional<double> k;
};

KronigPenneyResult kronig_penney_reference(double strength_p, double lattice_constant, double energy);

struct BandRecord {
  double energy = 0.0;
  /// Sorted ascending, each in (-pi/a, pi/a].
  std::vector<double> k_values;
  int p = 0;
  std::vector<double> multiplier_magnitudes;
  bool confirmed = false;
  bool ok = true;
  std::string error;
};

struct BandDiagram {
  double lattice_constant = 1.0;
  std::vector<BandRecord> records;
};

/// Folds arg(mu)/a into (-pi/a, pi/a].
double fold_wavevector(Complex multiplier, double lattice_constant);

BandDiagram band_scan(const NonlocalPotential1D& pot, const std::vector<double>& energies, int samples,
                      const BlochOptions& options = {});

struct BandExtremum {
  int band = 0;
  double k = 0.0;
  double energy = 0.0;
  bool minimum = false;
};

struct ExtremaResult {
  std::vector<BandExtremum> extrema;
  int bands = 0;
  /// Set when some record carries more than one propagating pair.
  bool ambiguous = false;
};

ExtremaResult detect_interior_extrema(const BandDiagram& diagram);

}  // namespace gfloquet
