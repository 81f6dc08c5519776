#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "gfloquet/bloch.hpp"
#include "gfloquet/builtins.hpp"
#include "oracles.hpp"

using namespace gfloquet;

namespace {

std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> v(count);
  for (int i = 0; i < count; ++i) v[i] = lo + (hi - lo) * i / (count - 1);
  return v;
}

bool negation_closed(const std::vector<double>& ks, double tol, double kmax) {
  for (double k : ks) {
    bool found = false;
    for (double q : ks) {
      // k = pi/a is its own partner after folding
      if (std::abs(q + k) <= tol || (std::abs(std::abs(k) - kmax) <= tol && std::abs(q - k) <= tol)) found = true;
    }
    if (!found) return false;
  }
  return true;
}

NonlocalPotential1D tuned_nonlocal() { return potential_builtin("separable_nonlocal", {}); }

}  // namespace

TEST_CASE("free particle at E = 1 has multipliers exp(+-i)") {
  const NonlocalPotential1D free;
  const auto res = propagating_multipliers(free, 1.0, 256);
  REQUIRE(res.p == 2);
  CHECK(res.confirmed);
  CHECK(std::abs(res.propagating[0] - std::exp(Complex(0, -1))) <= 1e-8);
  CHECK(std::abs(res.propagating[1] - std::exp(Complex(0, 1))) <= 1e-8);
}

TEST_CASE("Schrodinger system structure") {
  auto pot = tuned_nonlocal();
  pot.local = [](double x) { return 2.0 * std::cos(2 * std::numbers::pi * x); };
  const auto sys = schrodinger_system(pot, 1.5);
  const Matrix a = sys.coefficient(0.0);
  CHECK(a(0, 0) == 0.0);
  CHECK(a(0, 1) == 1.0);
  CHECK(a(1, 0) == doctest::Approx(2.0 - 1.5));
  REQUIRE(sys.kernel);
  const Matrix k = sys.kernel(0.5, 1.5);
  CHECK(k(0, 0) == 0.0);
  CHECK(k(1, 0) == doctest::Approx(pot.kernel(0.5, 1.5)));
  CHECK_FALSE(schrodinger_system(NonlocalPotential1D{}, 1.0).kernel);
}

TEST_CASE("Kronig-Penney gap has real reciprocal multipliers") {
  const auto kp = kronig_penney_potential(3.0, 1.0);
  const double e = 0.5 * (oracle::kp_edge(3, 1, -1.0, 5.0, 12.0) + oracle::kp_edge(3, 1, -1.0, 12.0, 20.0));
  REQUIRE(std::abs(oracle::kp_discriminant(3, 1, e)) > 1.0);
  const auto res = propagating_multipliers(kp, e, 256);
  CHECK(res.p == 0);
  REQUIRE(res.all.size() == 2);
  CHECK(std::abs(res.all[0].imag()) <= 1e-12);
  CHECK(std::abs(res.all[0] * res.all[1] - 1.0) <= 1e-8);
}

TEST_CASE("Kronig-Penney reference formula") {
  const auto free = kronig_penney_reference(0.0, 1.0, 4.0);
  CHECK(free.allowed);
  CHECK(*free.k == doctest::Approx(2.0));
  const auto high = kronig_penney_reference(0.0, 1.0, 25.0);
  CHECK(*high.k == doctest::Approx(2 * std::numbers::pi - 5.0));
  CHECK_FALSE(kronig_penney_reference(3.0, 1.0, 1e-6).allowed);
  CHECK(kronig_penney_reference(3.0, 1.0, 1e-6).discriminant == doctest::Approx(4.0).epsilon(1e-5));
  CHECK_THROWS_AS(kronig_penney_reference(3.0, 1.0, 0.0), Error);
}

TEST_CASE("Kronig-Penney band edges match the transcendental equation") {
  const auto kp = kronig_penney_potential(3.0, 1.0);
  auto propagating = [&](double e) { return propagating_multipliers(kp, e, 256).p > 0; };
  auto edge = [&](double lo, double hi) {
    const bool start = propagating(lo);
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (propagating(mid) == start) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  };
  const double bottom = oracle::kp_edge(3, 1, 1.0, 0.5, 9.0);
  const double top = oracle::kp_edge(3, 1, -1.0, 3.0, 12.0);
  CHECK(std::abs(edge(bottom - 0.5, bottom + 0.5) - bottom) <= 1e-4);
  CHECK(std::abs(edge(top - 0.5, top + 0.5) - top) <= 1e-4);
}

TEST_CASE("free band scan folds k into the zone") {
  const auto diagram = band_scan(NonlocalPotential1D{}, {1.0, 4.0}, 128);
  REQUIRE(diagram.records.size() == 2);
  REQUIRE(diagram.records[0].k_values.size() == 2);
  CHECK(diagram.records[0].k_values[0] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(diagram.records[0].k_values[1] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(diagram.records[1].k_values[1] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(fold_wavevector(Complex(-1.0, -0.0), 1.0) == doctest::Approx(std::numbers::pi));
}

TEST_CASE("Kronig-Penney scan agrees with the oracle pattern") {
  const auto kp = kronig_penney_potential(3.0, 1.0);
  const auto energies = linspace(0.1, 40.0, 200);
  const auto diagram = band_scan(kp, energies, 128);
  int disagreements = 0;
  for (const auto& r : diagram.records) {
    REQUIRE(r.ok);
    CHECK((r.p == 0 || r.p == 2));
    const bool allowed = std::abs(oracle::kp_discriminant(3, 1, r.energy)) <= 1.0;
    if (allowed != (r.p == 2)) ++disagreements;
    if (allowed && r.p == 2) {
      CHECK(std::abs(r.k_values[1] - std::acos(oracle::kp_discriminant(3, 1, r.energy))) <= 1e-3);
    }
  }
  CHECK(disagreements <= 2);
}

TEST_CASE("local scans have no interior extrema") {
  const auto energies = linspace(0.05, 60.0, 300);
  for (double p : {0.0, 1.0, 3.0, 8.0}) {
    const auto diagram = band_scan(kronig_penney_potential(p, 1.0), energies, 64);
    const auto ext = detect_interior_extrema(diagram);
    CHECK(ext.extrema.empty());
    CHECK_FALSE(ext.ambiguous);
    for (const auto& r : diagram.records) CHECK(r.p <= 2);
  }
}

TEST_CASE("extremum tracker on a synthetic band with an interior maximum") {
  // E = 3 - (k - 1.5)^2 on a zone of width pi, sampled past the top
  BandDiagram d;
  d.lattice_constant = 1.0;
  for (double e : linspace(2.0, 3.5, 31)) {
    BandRecord r;
    r.energy = e;
    r.ok = true;
    if (e < 3.0) {
      const double s = std::sqrt(3.0 - e);
      r.k_values = {-1.5 - s, -1.5 + s, 1.5 - s, 1.5 + s};
    }
    r.p = static_cast<int>(r.k_values.size());
    d.records.push_back(r);
  }
  const auto ext = detect_interior_extrema(d);
  REQUIRE(ext.extrema.size() == 1);
  CHECK_FALSE(ext.extrema[0].minimum);
  CHECK(ext.extrema[0].k == doctest::Approx(1.5).epsilon(1e-3));
  CHECK(std::abs(ext.extrema[0].energy - 3.0) <= 0.05);
  CHECK(ext.bands == 1);
}

TEST_CASE("collocation: reduced and full routes agree") {
  const auto pot = tuned_nonlocal();
  for (double e : {1.0, 2.6, 3.2, 5.0}) {
    const auto prob = assemble_collocation(pot, e, 48);
    CHECK(prob.max_offset == 1);
    const auto full = collocation_multipliers_full(prob);
    const auto reduced = collocation_multipliers_reduced(prob);
    for (const auto& mu : reduced) {
      if (std::abs(std::log(std::abs(mu))) > 10) continue;
      double best = 1e300;
      for (const auto& nu : full) best = std::min(best, std::abs(nu - mu));
      CHECK(best <= 1e-9 * std::abs(mu));
    }
  }
}

TEST_CASE("polynomial eigenvalues of a scalar quadratic") {
  // (mu - 2)(mu - 3) = 6 - 5 mu + mu^2
  std::vector<Matrix> c = {Matrix::Constant(1, 1, 6.0), Matrix::Constant(1, 1, -5.0), Matrix::Constant(1, 1, 1.0)};
  auto roots = polynomial_eigenvalues(c);
  std::sort(roots.begin(), roots.end(), multiplier_order);
  REQUIRE(roots.size() == 2);
  CHECK(std::abs(roots[0] - 3.0) <= 1e-12);
  CHECK(std::abs(roots[1] - 2.0) <= 1e-12);
}

TEST_CASE("polynomial roots are reproducible and match QZ") {
  const auto prob = assemble_collocation(tuned_nonlocal(), 2.78, 48);
  const auto first = polynomial_eigenvalues(prob.blocks);
  for (int rep = 0; rep < 3; ++rep) {
    const auto again = polynomial_eigenvalues(prob.blocks);
    REQUIRE(again.size() == first.size());
    for (std::size_t i = 0; i < first.size(); ++i) CHECK(again[i] == first[i]);
  }
  for (const auto& mu : first) {
    if (std::abs(std::log(std::abs(mu))) > 10) continue;
    double best = 1e300;
    for (const auto& nu : qz_polynomial_eigenvalues(prob.blocks)) best = std::min(best, std::abs(nu - mu));
    CHECK(best <= 1e-9 * std::abs(mu));
  }
  const auto energies = linspace(2.0, 3.6, 24);
  BlochOptions threaded;
  threaded.jobs = 3;
  const auto a = band_scan(tuned_nonlocal(), energies, 48);
  const auto b = band_scan(tuned_nonlocal(), energies, 48, threaded);
  for (std::size_t i = 0; i < energies.size(); ++i) CHECK(a.records[i].k_values == b.records[i].k_values);
}

TEST_CASE("nonlocal multipliers pair as mu and 1/conj(mu)") {
  const auto pot = tuned_nonlocal();
  for (double e : {2.0, 2.6, 3.0}) {
    const auto res = propagating_multipliers(pot, e, 64);
    for (const auto& mu : res.all) {
      if (std::abs(std::log(std::abs(mu))) > 8) continue;
      const Complex partner = 1.0 / std::conj(mu);
      double best = 1e300;
      for (const auto& nu : res.all) best = std::min(best, std::abs(nu - partner));
      CHECK(best <= 1e-6 * std::abs(partner));
    }
  }
}

TEST_CASE("tuned nonlocal kernel: even p, symmetric k, a p = 4 window and an interior minimum") {
  const auto pot = tuned_nonlocal();
  const auto energies = linspace(2.0, 3.8, 120);
  const auto diagram = band_scan(pot, energies, 64);
  bool window = false;
  for (const auto& r : diagram.records) {
    REQUIRE(r.ok);
    CHECK(r.p % 2 == 0);
    CHECK(negation_closed(r.k_values, 1e-6, std::numbers::pi));
    if (r.p == 4) window = true;
  }
  CHECK(window);
  const auto ext = detect_interior_extrema(diagram);
  CHECK(ext.ambiguous);
  REQUIRE_FALSE(ext.extrema.empty());
  CHECK(ext.extrema.front().minimum);
  CHECK(ext.extrema.front().energy == doctest::Approx(2.467).epsilon(0.01));
}

TEST_CASE("potential validation") {
  auto pot = tuned_nonlocal();
  const auto ok = validate_potential(pot, 64);
  CHECK(ok.passed);
  CHECK(ok.symmetry_residual <= 1e-14);
  auto skew = pot;
  skew.kernel = [k = pot.kernel](double x, double xp) { return k(x, xp) * (1.0 + 0.1 * (x - xp)); };
  CHECK_FALSE(validate_potential(skew, 64).passed);
  auto drift = pot;
  drift.local = [](double x) { return x; };
  CHECK_FALSE(validate_potential(drift, 64).passed);
}

TEST_CASE("kernel range beyond the representable history is rejected") {
  auto pot = tuned_nonlocal();
  pot.kernel_range = 100.0;
  CHECK_THROWS_AS(propagating_multipliers(pot, 1.0, 8), Error);
}

TEST_CASE("self-consistent cell solve recovers the collocation multipliers") {
  const auto pot = tuned_nonlocal();
  const double e = 2.6;
  const int N = 64;
  const auto res = propagating_multipliers(pot, e, 4 * N);
  REQUIRE(res.p == 4);
  for (const Complex mu : {res.propagating[0], res.propagating[1]}) {
    // Bloch condition: det(M(mu) - mu) = 0 where M maps the cell's start state to its end state
    auto bloch_det = [&](Complex m) {
      ComplexMatrix big(2, 2);
      for (int c = 0; c < 2; ++c) {
        ComplexVector init = ComplexVector::Zero(2);
        init(c) = 1.0;
        const auto cell = solve_cell_self_consistent(pot, e, m, init, N);
        CHECK(cell.contraction < 1.0);
        big.col(c) = cell.state.col(N);
      }
      return std::abs((big - m * ComplexMatrix::Identity(2, 2)).determinant());
    };
    const double on = bloch_det(mu);
    const double off = bloch_det(mu * std::exp(Complex(0, 0.1)));
    CHECK(on < 1e-2 * off);
  }
}

TEST_CASE("self-consistent solve of a local potential is a single pass") {
  const auto kp = kronig_penney_potential(1.0, 1.0);
  const auto res = propagating_multipliers(kp, 5.0, 128);
  REQUIRE(res.p == 2);
  const Complex mu = res.propagating[1];
  // eigenvector of the comb-dressed transfer matrix
  const auto cell0 = solve_cell_self_consistent(kp, 5.0, mu, ComplexVector::Unit(2, 0), 128);
  const auto cell1 = solve_cell_self_consistent(kp, 5.0, mu, ComplexVector::Unit(2, 1), 128);
  ComplexMatrix m(2, 2);
  m << cell0.state.col(128), cell1.state.col(128);
  Eigen::ComplexEigenSolver<ComplexMatrix> es(m);
  int pick = std::abs(es.eigenvalues()(0) - mu) < std::abs(es.eigenvalues()(1) - mu) ? 0 : 1;
  const auto cell = solve_cell_self_consistent(kp, 5.0, mu, es.eigenvectors().col(pick), 128);
  CHECK(cell.iterations == 1);
  CHECK(cell.bloch_residual <= 1e-8);
}
