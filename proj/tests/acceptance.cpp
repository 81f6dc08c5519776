// One line per acceptance criterion; exit status is the number of failures.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>

#include "gfloquet/bloch.hpp"
#include "gfloquet/builtins.hpp"
#include "gfloquet/monodromy.hpp"
#include "oracles.hpp"

using namespace gfloquet;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const std::string& what, bool ok, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> v(count);
  for (int i = 0; i < count; ++i) v[i] = lo + (hi - lo) * i / (count - 1);
  return v;
}

Matrix random_stable(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  Eigen::EigenSolver<Matrix> es(a);
  double shift = 0.0;
  for (int i = 0; i < n; ++i) shift = std::max(shift, es.eigenvalues()(i).real());
  return a - (shift + 0.5) * Matrix::Identity(n, n);
}

struct Example {
  std::string name;
  LinearMemorySystem system;
  PeriodicGrid grid;
  double bound;
};

// the four analysis examples at their stated grids
std::vector<Example> examples() {
  std::vector<Example> out;
  const auto scalar = linear_builtin("scalar_cosine", {}, 256);
  out.push_back({"scalar ODE", scalar.system, PeriodicGrid(scalar.period, 256, 0.0), 1e-6});
  LinearMemorySystem constant;
  constant.dimension = 4;
  const Matrix a = random_stable(4, 7);
  constant.coefficient = [a](double) { return a; };
  out.push_back({"constant 4x4", constant, PeriodicGrid(1.0, 256, 0.0), 1e-6});
  const auto delay = linear_builtin("delay_pi_over_2", {}, 256);
  out.push_back({"delay", delay.system, PeriodicGrid(delay.period, 256, delay.memory_depth), 1e-3});
  const auto kernel = linear_builtin("exp_kernel", {}, 64);
  out.push_back({"exp kernel", kernel.system, PeriodicGrid(kernel.period, 64, kernel.memory_depth), 1e-3});
  return out;
}

void criterion_1() {
  const auto model = linear_builtin("scalar_cosine", {}, 256);
  const auto t0 = std::chrono::steady_clock::now();
  const auto dec = floquet_spectrum(model.system, PeriodicGrid(model.period, 256, 0.0));
  const double t = seconds_since(t0);
  const double err = dec.p_retained == 1 ? std::abs(dec.retained().front() - std::exp(0.3)) : 1e300;
  report(1, "scalar periodic ODE", dec.p_retained == 1 && err <= 1e-6 && t < 1.0,
         fmt("p=%g |mu-e^0.3|=%.3e runtime %.3fs", dec.p_retained, err, t));
}

void criterion_2() {
  double worst = 0.0;
  for (unsigned seed : {11u, 12u, 13u}) {
    const Matrix a = random_stable(4, seed);
    LinearMemorySystem sys;
    sys.dimension = 4;
    sys.coefficient = [a](double) { return a; };
    const auto op = build_monodromy(sys, PeriodicGrid(1.0, 256, 0.0));
    worst = std::max(worst, (op.matrix - oracle::expm(a)).norm());
  }
  report(2, "constant matrix vs expm", worst <= 1e-8, fmt("max Frobenius error %.3e over 3 draws", worst));
}

void criterion_3() {
  const auto model = linear_builtin("delay_pi_over_2", {}, 256);
  const auto dec = floquet_spectrum(model.system, PeriodicGrid(model.period, 256, model.memory_depth));
  const auto kept = dec.retained();
  double err = 1e300;
  if (kept.size() >= 2) {
    err = std::max(std::abs(kept[0] - Complex(0, -1)), std::abs(kept[1] - Complex(0, 1)));
  }
  const bool dominant_pair = kept.size() >= 2 && (kept.size() == 2 || std::abs(kept[2]) < std::abs(kept[1]) - 1e-3);
  report(3, "delay threshold +-i", err <= 1e-3 && dominant_pair, fmt("max |mu -+ i| = %.3e", err));
}

void criterion_4() {
  const double a = -0.5, b = 1.0, theta = 0.25;
  const auto model = linear_builtin("exp_kernel", {{"a", a}, {"b", b}, {"theta", theta}, {"epsilon", 1e-10}}, 64);
  const auto dec = floquet_spectrum(model.system, PeriodicGrid(model.period, 64, model.memory_depth));
  Matrix aug(2, 2);
  aug << a, 1.0, b, -1.0 / theta;
  Eigen::EigenSolver<Matrix> es(oracle::expm(aug * model.period));
  const double mu = std::max(es.eigenvalues()(0).real(), es.eigenvalues()(1).real());
  const double err = std::abs(dec.retained().front() - mu);
  report(4, "exponential kernel vs augmented system", err <= 1e-6,
         fmt("|mu - mu_aug| = %.3e, truncated depth %.3f", err, model.memory_depth));
}

void criterion_5() {
  bool ok = true;
  std::ostringstream detail;
  for (const auto& ex : examples()) {
    const auto dec = floquet_spectrum(ex.system, ex.grid);
    const auto ver = verify_floquet_form(ex.system, ex.grid, dec);
    const double worst = std::max({ver.shift_representation, ver.max_periodicity, ver.max_lambda_equation});
    ok = ok && worst <= ex.bound && !ver.modes.empty();
    detail << ex.name << " " << fmt("%.1e", worst) << "; ";
  }
  report(5, "Floquet-form verification", ok, detail.str());
}

double max_mathieu_multiplier(double delta, double eps) {
  const auto model = linear_builtin("mathieu", {{"delta", delta}, {"epsilon", eps}}, 256);
  const auto op = build_monodromy(model.system, PeriodicGrid(model.period, 256, 0.0));
  double m = 0.0;
  for (const auto& mu : monodromy_eigenvalues(op)) m = std::max(m, std::abs(mu));
  return m;
}

double mathieu_crossing(double eps, double lo, double hi) {
  const bool lo_unstable = max_mathieu_multiplier(lo, eps) > 1.0 + 1e-6;
  for (int it = 0; it < 30; ++it) {
    const double mid = 0.5 * (lo + hi);
    if ((max_mathieu_multiplier(mid, eps) > 1.0 + 1e-6) == lo_unstable) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

void criterion_6() {
  const double eps = 0.2;
  const double lower = mathieu_crossing(eps, 0.05, 0.25);
  const double upper = mathieu_crossing(eps, 0.25, 0.45);
  const double lower_ref = oracle::mathieu_edge(eps, 0.05, 0.25, true);
  const double upper_ref = oracle::mathieu_edge(eps, 0.25, 0.45, false);
  const double err = std::max(std::abs(lower - lower_ref), std::abs(upper - upper_ref));
  report(6, "Mathieu tongue edges", err <= 2e-3,
         fmt("delta = %.5f / %.5f, max deviation %.2e from long integration", lower, upper, err));
}

void criterion_7() {
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
  const double bottom_ref = oracle::kp_edge(3, 1, 1.0, 0.5, 9.0);
  const double top_ref = oracle::kp_edge(3, 1, -1.0, 3.0, 12.0);
  const double err = std::max(std::abs(edge(bottom_ref - 0.5, bottom_ref + 0.5) - bottom_ref),
                              std::abs(edge(top_ref - 0.5, top_ref + 0.5) - top_ref));
  const auto diagram = band_scan(kp, linspace(0.1, 40.0, 200), 128);
  int bad = 0;
  for (const auto& r : diagram.records) {
    if (!r.ok || (r.p != 0 && r.p != 2)) ++bad;
  }
  report(7, "Kronig-Penney limit", err <= 1e-4 && bad == 0,
         fmt("edge error %.2e, %g of 200 energies outside p in {0,2}", err, bad));
}

void criterion_8() {
  const auto diagram = band_scan(NonlocalPotential1D{}, linspace(0.1, 9.0, 90), 128);
  double worst = 0.0;
  bool ok = true;
  for (const auto& r : diagram.records) {
    if (!r.ok || r.p != 2) {
      ok = false;
      continue;
    }
    worst = std::max(worst, std::abs(r.k_values.back() - std::sqrt(r.energy)) / std::sqrt(r.energy));
  }
  report(8, "free particle k = sqrt(E)", ok && worst <= 1e-6, fmt("max relative error %.3e", worst));
}

bool negation_closed(const std::vector<double>& ks, double tol, double kmax) {
  for (double k : ks) {
    bool found = false;
    for (double q : ks) {
      if (std::abs(q + k) <= tol || (std::abs(std::abs(k) - kmax) <= tol && std::abs(q - k) <= tol)) found = true;
    }
    if (!found) return false;
  }
  return true;
}

void criterion_9() {
  const auto pot = potential_builtin("separable_nonlocal", {{"gamma", 1.6}});
  const auto diagram = band_scan(pot, linspace(0.2, 12.0, 300), 64);
  int odd = 0, asym = 0, failed = 0, window = 0;
  for (const auto& r : diagram.records) {
    if (!r.ok) {
      ++failed;
      continue;
    }
    if (r.p % 2) ++odd;
    if (!negation_closed(r.k_values, 1e-6, std::numbers::pi)) ++asym;
    if (r.p == 4) ++window;
  }
  const auto ext = detect_interior_extrema(diagram);

  std::vector<NonlocalPotential1D> local;
  for (double p : {1.0, 3.0, 6.0}) local.push_back(kronig_penney_potential(p, 1.0));
  local.push_back(NonlocalPotential1D{});
  NonlocalPotential1D cosine;
  cosine.local = [](double x) { return 4.0 * std::cos(2.0 * std::numbers::pi * x); };
  local.push_back(cosine);
  std::size_t local_extrema = 0;
  for (const auto& lp : local) local_extrema += detect_interior_extrema(band_scan(lp, linspace(0.05, 40.0, 200), 64)).extrema.size();

  const bool ok = failed == 0 && odd == 0 && asym == 0 && window > 0 && !ext.extrema.empty() && local_extrema == 0;
  std::ostringstream d;
  d << "gamma=1.6: odd p " << odd << ", asymmetric " << asym << ", p=4 energies " << window << ", interior extrema "
    << ext.extrema.size();
  if (!ext.extrema.empty()) d << " (first at E=" << fmt("%.4f", ext.extrema.front().energy) << ")";
  d << "; local matrix extrema " << local_extrema;
  report(9, "nonlocal band properties", ok, d.str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(GFQ_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void criterion_10() {
  const fs::path dir = fs::temp_directory_path() / ("gfq_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  struct Job {
    std::string command, config;
    std::vector<std::string> files;
  };
  const std::vector<Job> jobs = {
      {"analyze", R"({"system": {"builtin": "delay_pi_over_2"}, "grid": {"samples_per_period": 128}})",
       {"spectrum.json", "modes.csv", "verify.json"}},
      {"bands", R"({"potential": {"builtin": "separable_nonlocal"}, "energies": {"min": 0.5, "max": 6, "count": 80},
                    "grid": {"samples_per_period": 48}})",
       {"bands.csv", "extrema.json", "diagnostics.json"}},
  };
  bool ok = true;
  int compared = 0;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const fs::path cfg = dir / ("config" + std::to_string(j) + ".json");
    std::ofstream(cfg) << jobs[j].config;
    std::string first;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out = dir / ("out" + std::to_string(j) + "_" + std::to_string(rep));
      const std::string extra = rep == 0 ? "" : " --jobs 2";
      if (run_cli(jobs[j].command + " --config " + cfg.string() + " --out " + out.string() + extra) != 0) ok = false;
      std::string all;
      for (const auto& f : jobs[j].files) all += slurp(out / f);
      if (rep == 0) {
        first = all;
      } else {
        ok = ok && !first.empty() && all == first;
      }
      compared += static_cast<int>(jobs[j].files.size());
    }
  }
  fs::remove_all(dir);
  report(10, "CLI determinism", ok, fmt("%g output files compared byte for byte", compared / 2));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  for (auto* criterion : {criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
                          criterion_8, criterion_9, criterion_10}) {
    try {
      criterion();
    } catch (const std::exception& e) {
      std::printf("[FAIL] exception: %s\n", e.what());
      ++failures;
    }
  }
  std::printf("%d failed, %.1fs\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
