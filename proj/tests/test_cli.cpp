#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gfloquet/gfloquet.h"
#include "json.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gfq_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run cli(const std::string& args, const fs::path& dir) {
  const std::string cmd = std::string(GFQ_CLI_PATH) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " +
                          (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(dir / "stdout.txt");
  r.err = slurp(dir / "stderr.txt");
  return r;
}

Run run_config(const std::string& command, const std::string& config, const fs::path& dir,
               const std::string& extra = "") {
  write(dir / "config.json", config);
  return cli(command + " --config " + (dir / "config.json").string() + " --out " + (dir / "out").string() + extra,
             dir);
}

std::complex<double> cplx(const json& j) { return {j.at("re").get<double>(), j.at("im").get<double>()}; }

json load(const fs::path& p) { return json::parse(slurp(p)); }

std::string fingerprint_line(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

TEST_CASE("analyze: scalar periodic ODE") {
  const auto dir = scratch("scalar");
  const auto r = run_config("analyze", R"({"system": {"builtin": "scalar_cosine"}})", dir);
  REQUIRE(r.code == 0);
  const json spec = load(dir / "out/spectrum.json");
  CHECK(spec.at("p_retained") == 1);
  CHECK(std::abs(cplx(spec.at("multipliers")[0].at("multiplier")) - std::exp(0.3)) <= 1e-6);
  const json ver = load(dir / "out/verify.json");
  CHECK(ver.at("max_lambda_equation").get<double>() <= 1e-6);
  const std::string fp = spec.at("fingerprint");
  CHECK(ver.at("fingerprint") == fp);
  CHECK(fingerprint_line(dir / "out/modes.csv") == "# fingerprint=" + fp);
}

TEST_CASE("analyze: explicit harmonic system matches the builtin") {
  const auto dir = scratch("explicit");
  const auto r = run_config("analyze", R"({
    "system": {"dimension": 1, "period": 1,
               "coefficient": {"harmonics": {"mean": 0.3, "terms": [{"order": 1, "cos": 1}]}}}})", dir);
  REQUIRE(r.code == 0);
  const json spec = load(dir / "out/spectrum.json");
  CHECK(std::abs(cplx(spec.at("multipliers")[0].at("multiplier")) - std::exp(0.3)) <= 1e-6);
}

TEST_CASE("analyze: delay equation at the critical gain") {
  const auto dir = scratch("delay");
  const auto r = run_config("analyze", R"({"system": {"builtin": "delay_pi_over_2"}, "spectrum": {"max_modes": 2}})", dir);
  REQUIRE(r.code == 0);
  const json spec = load(dir / "out/spectrum.json");
  const auto a = cplx(spec.at("multipliers")[0].at("multiplier"));
  const auto b = cplx(spec.at("multipliers")[1].at("multiplier"));
  CHECK(std::abs(a - std::complex<double>(0, -1)) <= 1e-3);
  CHECK(std::abs(b - std::complex<double>(0, 1)) <= 1e-3);
  CHECK(spec.at("memory_depth").get<double>() == doctest::Approx(1.0));
}

TEST_CASE("analyze: invalid inputs exit with 2") {
  const auto dir = scratch("invalid");
  auto r = run_config("analyze", R"({"system": {"dimension": 1, "period": -1, "coefficient": 0.5}})", dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("/system/period") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out/spectrum.json"));

  r = run_config("analyze", "{\"system\": {\"builtin\": \"scalar_cosine\",\n}", dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("line 2") != std::string::npos);

  r = run_config("analyze", R"({"system": {"builtin": "scalar_cosine"}, "colour": 1})", dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("colour") != std::string::npos);

  r = run_config("analyze", R"({"system": {"builtin": "scalar_cosine", "params": {"gamma": 1}}})", dir);
  CHECK(r.code == 2);

  r = run_config("analyze", R"({"system": {"dimension": 2, "period": 1, "coefficient": [[1, 0]]}})", dir);
  CHECK(r.code == 2);

  r = run_config("analyze", R"({"system": {"builtin": "scalar_cosine"}, "grid": {"samples_per_period": 4}})", dir);
  CHECK(r.code == 2);

  r = cli("analyze --config " + (dir / "missing.json").string() + " --out " + (dir / "out").string(), dir);
  CHECK(r.code == 2);

  r = cli("analyze --out " + (dir / "out").string(), dir);
  CHECK(r.code == 2);
  r = cli("frobnicate", dir);
  CHECK(r.code == 2);
  r = cli("--help", dir);
  CHECK(r.code == 0);
}

TEST_CASE("analyze: overrides enter the fingerprint") {
  const auto dir = scratch("override");
  const std::string cfg = R"({"system": {"builtin": "scalar_cosine"}})";
  REQUIRE(run_config("analyze", cfg, dir).code == 0);
  const json base = load(dir / "out/spectrum.json");
  REQUIRE(run_config("analyze", cfg, dir, " --grid 64").code == 0);
  const json coarse = load(dir / "out/spectrum.json");
  CHECK(coarse.at("samples_per_period") == 64);
  CHECK(coarse.at("fingerprint") != base.at("fingerprint"));
  REQUIRE(run_config("analyze", cfg, dir, " --tol 1e-3").code == 0);
  CHECK(load(dir / "out/spectrum.json").at("match_tolerance").get<double>() == 1e-3);
}

TEST_CASE("stability: van der Pol cycle is orbitally stable") {
  const auto dir = scratch("vdp");
  oracle::write_cycle_csv(oracle::van_der_pol_cycle(1.0, 256), (dir / "cycle.csv").string());
  const auto r = run_config("stability", R"({"system": {"builtin": "van_der_pol", "params": {"mu": 1}},
                                            "cycle_file": "cycle.csv"})", dir);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("STABLE") != std::string::npos);
  const json doc = load(dir / "out/stability.json");
  CHECK(doc.at("verdict") == "STABLE");
  CHECK(doc.at("autonomous") == true);
  CHECK(doc.at("trivial_error").get<double>() <= 1e-3);
  // Liouville: product of multipliers = exp(int mu (1 - x^2))
  CHECK(doc.at("max_nontrivial_magnitude").get<double>() < 1e-2);
}

TEST_CASE("stability: equilibrium of a damped rotation") {
  const auto dir = scratch("origin");
  std::string csv = "t,y1,y2\n";
  for (int i = 0; i <= 64; ++i) csv += std::to_string(i / 64.0 * 2.0) + ",0,0\n";
  write(dir / "zero.csv", csv);
  const auto r = run_config("stability", R"({"system": {"builtin": "linear_stable"}, "cycle_file": "zero.csv"})", dir);
  REQUIRE(r.code == 0);
  const json doc = load(dir / "out/stability.json");
  CHECK(doc.at("verdict") == "STABLE");
  CHECK(doc.at("max_nontrivial_magnitude").get<double>() == doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
}

TEST_CASE("stability: malformed cycles exit with 2") {
  const auto dir = scratch("badcycle");
  std::string three = "t,y1,y2,y3\n";
  for (int i = 0; i <= 16; ++i) three += std::to_string(i / 16.0) + ",0,0,0\n";
  write(dir / "three.csv", three);
  auto r = run_config("stability", R"({"system": {"builtin": "linear_stable"}, "cycle_file": "three.csv"})", dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("dimension") != std::string::npos);

  std::string open = "t,y1,y2\n";
  for (int i = 0; i <= 16; ++i) open += std::to_string(i / 16.0) + "," + std::to_string(i / 16.0) + ",0\n";
  write(dir / "open.csv", open);
  r = run_config("stability", R"({"system": {"builtin": "linear_stable"}, "cycle_file": "open.csv"})", dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("wrap") != std::string::npos);

  r = run_config("stability", R"({"system": {"builtin": "linear_stable"}, "cycle_file": "nowhere.csv"})", dir);
  CHECK(r.code == 2);
}

TEST_CASE("bands: Kronig-Penney pattern and outputs") {
  const auto dir = scratch("kp");
  const auto r = run_config("bands", R"({"potential": {"builtin": "kronig_penney", "params": {"P": 3, "a": 1}},
                                        "energies": {"min": 0.1, "max": 40, "count": 200}})", dir);
  REQUIRE(r.code == 0);
  std::ifstream in(dir / "out/bands.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("# fingerprint=", 0) == 0);
  std::getline(in, line);
  CHECK(line == "E,p,k1,k2");
  int rows = 0, disagreements = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string e, p;
    std::getline(ss, e, ',');
    std::getline(ss, p, ',');
    const int count = std::stoi(p);
    CHECK((count == 0 || count == 2));
    const bool allowed = std::abs(oracle::kp_discriminant(3, 1, std::stod(e))) <= 1.0;
    if (allowed != (count == 2)) ++disagreements;
    ++rows;
  }
  CHECK(rows == 200);
  CHECK(disagreements <= 2);
  const json ext = load(dir / "out/extrema.json");
  CHECK(ext.at("extrema").empty());
  const json diag = load(dir / "out/diagnostics.json");
  CHECK(diag.at("method") == "monodromy");
  CHECK(diag.at("succeeded") == 200);
}

TEST_CASE("bands: free particle and explicit nonlocal potential") {
  const auto dir = scratch("free");
  auto r = run_config("bands", R"({"potential": {"lattice_constant": 1},
                                   "energies": {"values": [0.25, 1.0, 4.0]}})", dir);
  REQUIRE(r.code == 0);
  std::ifstream in(dir / "out/bands.csv");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  for (double e : {0.25, 1.0, 4.0}) {
    REQUIRE(std::getline(in, line));
    const double k = std::stod(line.substr(line.rfind(',') + 1));
    CHECK(k == doctest::Approx(std::sqrt(e)).epsilon(1e-6));
  }

  r = run_config("bands", R"({"potential": {"lattice_constant": 1, "separable": {"gamma": 1.6}},
                              "energies": {"min": 2.0, "max": 3.6, "count": 60}, "grid": {"samples_per_period": 64}})",
                 dir);
  REQUIRE(r.code == 0);
  const json ext = load(dir / "out/extrema.json");
  REQUIRE(ext.at("extrema").size() >= 1);
  CHECK(ext.at("extrema")[0].at("kind") == "minimum");
  CHECK(load(dir / "out/diagnostics.json").at("method") == "collocation");
}

TEST_CASE("bands: invalid inputs exit with 2") {
  const auto dir = scratch("badbands");
  auto r = run_config("bands", R"({"potential": {"builtin": "free_particle"}, "energies": {"min": 1, "max": 2, "count": 0}})",
                      dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("empty") != std::string::npos);
  r = run_config("bands", R"({"potential": {"builtin": "free_particle"}, "energies": {"values": [2, 1]}})", dir);
  CHECK(r.code == 2);
  r = run_config("bands", R"({"potential": {"lattice_constant": 1, "separable": {"gamma": 1.6, "half_width": 0.7}},
                              "energies": {"values": [1]}, "grid": {"samples_per_period": 8}})", dir);
  CHECK(r.code == 2);
}

TEST_CASE("repeated runs are byte identical") {
  const auto dir = scratch("determinism");
  const std::string cfg = R"({"potential": {"builtin": "separable_nonlocal"},
                              "energies": {"min": 2, "max": 3.6, "count": 40}, "grid": {"samples_per_period": 48}})";
  REQUIRE(run_config("bands", cfg, dir).code == 0);
  const std::string first = slurp(dir / "out/bands.csv") + slurp(dir / "out/extrema.json") +
                            slurp(dir / "out/diagnostics.json");
  REQUIRE(run_config("bands", cfg, dir, " --jobs 2").code == 0);
  const std::string second = slurp(dir / "out/bands.csv") + slurp(dir / "out/extrema.json") +
                             slurp(dir / "out/diagnostics.json");
  CHECK(first == second);
}

TEST_CASE("C API: system handles and spectrum") {
  gfq_system* sys = nullptr;
  REQUIRE(gfq_system_from_json(R"({"system": {"builtin": "scalar_cosine"}, "grid": {"samples_per_period": 128}})",
                               &sys) == GFQ_OK);
  int dim = 0;
  CHECK(gfq_system_dimension(sys, &dim) == GFQ_OK);
  CHECK(dim == 1);
  gfq_spectrum* spec = nullptr;
  REQUIRE(gfq_spectrum_compute(sys, 0, 1, &spec) == GFQ_OK);
  size_t count = 0;
  CHECK(gfq_spectrum_count(spec, &count) == GFQ_OK);
  CHECK(count == 1);
  double re = 0, im = 0;
  CHECK(gfq_spectrum_multiplier(spec, 0, &re, &im) == GFQ_OK);
  CHECK(std::abs(re - std::exp(0.3)) <= 1e-6);
  CHECK(gfq_spectrum_exponent(spec, 0, &re, &im) == GFQ_OK);
  CHECK(re == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(gfq_spectrum_multiplier(spec, 5, &re, &im) == GFQ_INVALID_ARGUMENT);
  CHECK(std::string(gfq_last_error()).size() > 0);
  gfq_spectrum_destroy(spec);
  gfq_system_destroy(sys);

  gfq_system* bad = nullptr;
  CHECK(gfq_system_from_json("{", &bad) == GFQ_INVALID_ARGUMENT);
  CHECK(bad == nullptr);
  CHECK(gfq_system_from_json(nullptr, &bad) == GFQ_INVALID_ARGUMENT);
  CHECK(gfq_system_dimension(nullptr, &dim) == GFQ_INVALID_ARGUMENT);
  CHECK(std::string(gfq_status_name(GFQ_CONVERGENCE)) == "convergence");
  CHECK(std::string(gfq_version()).size() > 0);
}

TEST_CASE("C API: file-driven run reports exit codes") {
  const auto dir = scratch("capi");
  write(dir / "config.json", R"({"system": {"dimension": 1, "period": 0, "coefficient": 1}})");
  const std::string cfg = (dir / "config.json").string();
  const std::string out = (dir / "out").string();
  gfq_run_options opts{cfg.c_str(), out.c_str(), 0, 0.0, 1};
  int code = 0;
  CHECK(gfq_run_analyze(&opts, &code) == GFQ_INVALID_ARGUMENT);
  CHECK(code == 2);
  write(dir / "config.json", R"({"system": {"builtin": "mathieu"}})");
  CHECK(gfq_run_analyze(&opts, &code) == GFQ_OK);
  CHECK(code == 0);
  CHECK(std::string(gfq_last_message()).find("retained") != std::string::npos);
}
