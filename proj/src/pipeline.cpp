#include "pipeline.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

#include "gfloquet/bloch.hpp"
#include "gfloquet/perturbation.hpp"

namespace gfloquet::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::InvalidArgument, "config " + (path.empty() ? std::string("/") : path) + ": " + what);
}

/// Read-only view of a JSON value that remembers where it sits in the document.
class Node {
 public:
  Node(const json& value, std::string path) : value_(&value), path_(std::move(path)) {}

  const json& value() const { return *value_; }
  const std::string& path() const { return path_; }

  void expect_object(std::initializer_list<const char*> allowed) const {
    if (!value_->is_object()) config_error(path_, "expected an object");
    std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& item : value_->items()) {
      if (!keys.count(item.key())) config_error(path_ + "/" + item.key(), "unknown field");
    }
  }

  bool has(const std::string& key) const { return value_->contains(key); }

  Node at(const std::string& key) const {
    if (!has(key)) config_error(path_ + "/" + key, "required field missing");
    return Node((*value_)[key], path_ + "/" + key);
  }

  std::optional<Node> find(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return Node((*value_)[key], path_ + "/" + key);
  }

  double as_number() const {
    if (!value_->is_number()) config_error(path_, "expected a number");
    const double v = value_->get<double>();
    if (!std::isfinite(v)) config_error(path_, "expected a finite number");
    return v;
  }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      config_error(path_ + "/" + key, "required field missing");
    }
    return at(key).as_number();
  }

  int integer(const std::string& key, std::optional<int> fallback = std::nullopt) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      config_error(path_ + "/" + key, "required field missing");
    }
    const json& v = (*value_)[key];
    if (!v.is_number_integer()) config_error(path_ + "/" + key, "expected an integer");
    return v.get<int>();
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = (*value_)[key];
    if (!v.is_boolean()) config_error(path_ + "/" + key, "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) const {
    const json& v = at(key).value();
    if (!v.is_string()) config_error(path_ + "/" + key, "expected a string");
    return v.get<std::string>();
  }

  std::vector<Node> elements() const {
    if (!value_->is_array()) config_error(path_, "expected an array");
    std::vector<Node> out;
    for (std::size_t i = 0; i < value_->size(); ++i) out.emplace_back((*value_)[i], path_ + "/" + std::to_string(i));
    return out;
  }

 private:
  const json* value_;
  std::string path_;
};

json parse_document(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // The library message already carries "line L, column C".
    throw Error(ErrorCode::InvalidArgument, std::string("config is not valid JSON: ") + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Matrix literal_matrix(const Node& node, int n) {
  if (node.value().is_number()) {
    if (n != 1) config_error(node.path(), "a bare number is only allowed for dimension 1");
    return Matrix::Constant(1, 1, node.as_number());
  }
  const auto rows = node.elements();
  if (static_cast<int>(rows.size()) != n) config_error(node.path(), "expected " + std::to_string(n) + " rows");
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) {
    const auto cols = rows[i].elements();
    if (static_cast<int>(cols.size()) != n) {
      config_error(rows[i].path(), "expected " + std::to_string(n) + " columns");
    }
    for (int j = 0; j < n; ++j) m(i, j) = cols[j].as_number();
  }
  return m;
}

/// Constant, sampled-table or harmonic description of a periodic n x n matrix.
MatrixFn matrix_spec(const Node& node, int n, double period) {
  if (!node.value().is_object()) {
    const Matrix m = literal_matrix(node, n);
    return [m](double) { return m; };
  }
  node.expect_object({"constant", "table", "harmonics"});
  if (node.value().size() != 1) config_error(node.path(), "give exactly one of constant, table, harmonics");
  if (auto c = node.find("constant")) {
    const Matrix m = literal_matrix(*c, n);
    return [m](double) { return m; };
  }
  if (auto t = node.find("table")) {
    std::vector<Matrix> samples;
    for (const auto& e : t->elements()) samples.push_back(literal_matrix(e, n));
    if (samples.empty()) config_error(t->path(), "table is empty");
    return periodic_table(std::move(samples), period);
  }
  const Node h = node.at("harmonics");
  h.expect_object({"mean", "terms"});
  const Matrix mean = h.has("mean") ? literal_matrix(h.at("mean"), n) : Matrix::Zero(n, n);
  struct Term {
    double omega;
    Matrix c;
    Matrix s;
  };
  std::vector<Term> terms;
  if (auto list = h.find("terms")) {
    for (const auto& e : list->elements()) {
      e.expect_object({"order", "cos", "sin"});
      const int order = e.integer("order");
      if (order <= 0) config_error(e.path() + "/order", "harmonic order must be positive");
      terms.push_back({2.0 * std::numbers::pi * order / period,
                       e.has("cos") ? literal_matrix(e.at("cos"), n) : Matrix::Zero(n, n),
                       e.has("sin") ? literal_matrix(e.at("sin"), n) : Matrix::Zero(n, n)});
    }
  }
  return [mean, terms](double s) {
    Matrix out = mean;
    for (const auto& t : terms) out += std::cos(t.omega * s) * t.c + std::sin(t.omega * s) * t.s;
    return out;
  };
}

BuiltinParams builtin_params(const Node& node) {
  BuiltinParams params;
  if (auto p = node.find("params")) {
    if (!p->value().is_object()) config_error(p->path(), "expected an object of numbers");
    for (const auto& item : p->value().items()) params[item.key()] = p->at(item.key()).as_number();
  }
  return params;
}

/// `truncation` receives the tail tolerance when the kernel depth is left to truncation.
LinearModel explicit_system(const Node& node, std::optional<double>& truncation) {
  node.expect_object({"dimension", "period", "memory_depth", "coefficient", "delay_taps", "kernel"});
  LinearModel model;
  const int n = node.integer("dimension");
  if (n <= 0) config_error(node.path() + "/dimension", "must be positive");
  model.period = node.number("period");
  if (!(model.period > 0.0)) config_error(node.path() + "/period", "must be positive");
  LinearMemorySystem& sys = model.system;
  sys.dimension = n;
  sys.coefficient = node.has("coefficient") ? matrix_spec(node.at("coefficient"), n, model.period)
                                            : MatrixFn([n](double) -> Matrix { return Matrix::Zero(n, n); });
  double depth = 0.0;
  if (auto taps = node.find("delay_taps")) {
    for (const auto& e : taps->elements()) {
      e.expect_object({"delay", "coefficient"});
      const double d = e.number("delay");
      if (!(d > 0.0)) config_error(e.path() + "/delay", "must be positive");
      sys.delay_taps.push_back({d, matrix_spec(e.at("coefficient"), n, model.period)});
      depth = std::max(depth, d);
    }
  }
  if (auto k = node.find("kernel")) {
    k->expect_object({"amplitude", "decay", "truncation_epsilon"});
    const MatrixFn amplitude = matrix_spec(k->at("amplitude"), n, model.period);
    const double theta = k->number("decay");
    if (!(theta > 0.0)) config_error(k->path() + "/decay", "must be positive");
    truncation = k->number("truncation_epsilon", 1e-10);
    if (!(*truncation > 0.0)) config_error(k->path() + "/truncation_epsilon", "must be positive");
    sys.kernel = [amplitude, theta](double s, double t) -> Matrix {
      return amplitude(s) * std::exp(-(s - t) / theta);
    };
  }
  if (node.has("memory_depth")) {
    model.memory_depth = node.number("memory_depth");
    if (!(model.memory_depth >= 0.0)) config_error(node.path() + "/memory_depth", "must be non-negative");
    if (model.memory_depth < depth) config_error(node.path() + "/memory_depth", "shorter than the longest delay");
  } else {
    model.memory_depth = depth;
  }
  if (node.has("memory_depth")) truncation.reset();
  return model;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string num(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_atomic(const fs::path& dir, const std::string& name, const std::string& content) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create output directory " + dir.string() + ": " + ec.message());
  const fs::path target = dir / name;
  const fs::path tmp = dir / ("." + name + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write failed for " + tmp.string());
  }
  fs::rename(tmp, target, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string dump(const ojson& doc) { return doc.dump(2) + "\n"; }

std::string config_fingerprint(const std::string& text, const Overrides& o) {
  std::string key = text;
  if (o.grid) key += "\n--grid=" + std::to_string(*o.grid);
  if (o.tol) key += "\n--tol=" + num(*o.tol);
  return hex(fnv1a(key));
}

ojson complex_json(Complex z) {
  ojson j;
  j["re"] = z.real();
  j["im"] = z.imag();
  return j;
}

template <typename Body>
Outcome guarded(Body&& body) {
  Outcome out;
  try {
    body(out);
  } catch (const Error& e) {
    out.exit_code = exit_code_for(e.code());
    out.error = e.code();
    out.message = e.what();
  } catch (const std::exception& e) {
    out.exit_code = 1;
    out.error = ErrorCode::InvalidSystem;
    out.message = std::string("internal error: ") + e.what();
  }
  return out;
}

}  // namespace

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t seed) {
  std::uint64_t hash = seed;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Convergence:
    case ErrorCode::Eigensolver:
      return 3;
    default:
      return 2;
  }
}

SystemConfig parse_system_config(const std::string& text, const Overrides& overrides) {
  const json doc = parse_document(text);
  const Node root(doc, "");
  root.expect_object({"system", "grid", "spectrum"});
  SystemConfig cfg;
  if (auto g = root.find("grid")) {
    g->expect_object({"samples_per_period", "refinement_factor"});
    cfg.samples_per_period = g->integer("samples_per_period", cfg.samples_per_period);
    cfg.options.refinement_factor = g->integer("refinement_factor", cfg.options.refinement_factor);
    if (cfg.options.refinement_factor < 2) config_error(g->path() + "/refinement_factor", "must be at least 2");
  }
  if (overrides.grid) cfg.samples_per_period = *overrides.grid;
  if (cfg.samples_per_period < PeriodicGrid::kMinSamples) {
    config_error("/grid/samples_per_period", "must be at least 8");
  }
  if (auto s = root.find("spectrum")) {
    s->expect_object({"match_tolerance", "magnitude_floor", "max_modes"});
    cfg.options.match_tolerance = s->number("match_tolerance", cfg.options.match_tolerance);
    cfg.options.magnitude_floor = s->number("magnitude_floor", cfg.options.magnitude_floor);
    cfg.options.max_modes = s->integer("max_modes", cfg.options.max_modes);
  }
  if (overrides.tol) cfg.options.match_tolerance = *overrides.tol;
  if (!(cfg.options.match_tolerance > 0.0)) config_error("/spectrum/match_tolerance", "must be positive");
  if (cfg.options.max_modes < 0) config_error("/spectrum/max_modes", "must be non-negative");
  cfg.options.jobs = overrides.jobs;

  const Node sys = root.at("system");
  if (sys.has("builtin")) {
    sys.expect_object({"builtin", "params"});
    cfg.model = linear_builtin(sys.string("builtin"), builtin_params(sys), cfg.samples_per_period);
  } else {
    std::optional<double> truncation;
    cfg.model = explicit_system(sys, truncation);
    if (truncation) {
      const PeriodicGrid grid(cfg.model.period, cfg.samples_per_period, 0.0);
      const double depth =
          truncate_infinite_kernel(cfg.model.system.kernel, [](double) { return 1.0; }, *truncation, grid).memory_depth;
      cfg.model.memory_depth = std::max(cfg.model.memory_depth, depth);
    }
  }
  return cfg;
}

Outcome run_analyze(const std::string& config_path, const std::string& out_dir, const Overrides& overrides) {
  return guarded([&](Outcome& out) {
    const std::string text = read_file(config_path);
    const SystemConfig cfg = parse_system_config(text, overrides);
    const std::string fp = config_fingerprint(text, overrides);
    const LinearModel& model = cfg.model;
    const PeriodicGrid grid(model.period, cfg.samples_per_period, model.memory_depth);

    const ValidationReport rep = validate_system(model.system, grid);
    if (!rep.passed) {
      std::ostringstream msg;
      msg << "system fails validation: " << rep.worst_component << " residual at s=" << rep.worst_time;
      throw Error(ErrorCode::InvalidSystem, msg.str());
    }
    const FloquetDecomposition dec = floquet_spectrum(model.system, grid, cfg.options);
    const VerificationReport ver = verify_floquet_form(model.system, grid, dec);

    ojson spectrum;
    spectrum["fingerprint"] = fp;
    spectrum["command"] = "analyze";
    spectrum["system_fingerprint"] = hex(fingerprint(model.system, grid));
    spectrum["dimension"] = model.system.dimension;
    spectrum["period"] = model.period;
    spectrum["memory_depth"] = model.memory_depth;
    spectrum["samples_per_period"] = cfg.samples_per_period;
    spectrum["refined_samples_per_period"] = cfg.samples_per_period * cfg.options.refinement_factor;
    spectrum["operator_size"] = model.system.dimension * (grid.history_points() + 1);
    spectrum["match_tolerance"] = cfg.options.match_tolerance;
    spectrum["p_retained"] = dec.p_retained;
    ojson list = ojson::array();
    for (const auto& m : dec.multipliers) {
      ojson e;
      e["multiplier"] = complex_json(m.multiplier);
      e["magnitude"] = std::abs(m.multiplier);
      e["exponent"] = complex_json(m.exponent);
      e["converged"] = m.converged;
      e["partner_distance"] = finite_or_null(m.partner_distance);
      list.push_back(e);
    }
    spectrum["multipliers"] = list;

    std::ostringstream csv;
    csv << "# fingerprint=" << fp << "\n";
    csv << "sigma";
    for (std::size_t j = 0; j < dec.modes.size(); ++j) {
      for (int c = 0; c < model.system.dimension; ++c) {
        csv << ",mode" << j << "_z" << c + 1 << "_re,mode" << j << "_z" << c + 1 << "_im";
      }
    }
    csv << "\n";
    for (int i = 0; i <= cfg.samples_per_period; ++i) {
      csv << num(grid.node(i));
      for (const auto& mode : dec.modes) {
        for (int c = 0; c < model.system.dimension; ++c) {
          csv << "," << num(mode.samples(c, i).real()) << "," << num(mode.samples(c, i).imag());
        }
      }
      csv << "\n";
    }

    ojson verify;
    verify["fingerprint"] = fp;
    verify["validation"] = {{"coefficient_residual", rep.coefficient_residual},
                            {"tap_residual", rep.tap_residual},
                            {"kernel_residual", rep.kernel_residual},
                            {"kernel_integral_bound", finite_or_null(rep.kernel_integral_bound)},
                            {"passed", rep.passed}};
    verify["shift_representation"] = ver.shift_representation;
    verify["max_periodicity"] = ver.max_periodicity;
    verify["max_lambda_equation"] = ver.max_lambda_equation;
    verify["integration_error_estimate"] = ver.integration_error_estimate;
    ojson modes = ojson::array();
    for (const auto& m : ver.modes) {
      ojson e;
      e["multiplier"] = complex_json(m.multiplier);
      e["periodicity"] = m.periodicity;
      e["lambda_equation"] = m.lambda_equation;
      modes.push_back(e);
    }
    verify["modes"] = modes;

    const fs::path dir(out_dir);
    write_atomic(dir, "spectrum.json", dump(spectrum));
    write_atomic(dir, "modes.csv", csv.str());
    write_atomic(dir, "verify.json", dump(verify));
    out.message = "retained " + std::to_string(dec.p_retained) + " multipliers";
  });
}

namespace {

LimitCycle read_cycle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read cycle file " + path);
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> fields;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      const char* b = cell.data();
      const char* e = cell.data() + cell.size();
      while (b < e && *b == ' ') ++b;
      double v = 0.0;
      const auto res = std::from_chars(b, e, v);
      if (res.ec != std::errc() || res.ptr != e) {
        numeric = false;
        break;
      }
      fields.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && times.empty()) continue;  // header
      throw Error(ErrorCode::InvalidArgument, path + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    if (fields.size() < 2) throw Error(ErrorCode::InvalidArgument, path + ":" + std::to_string(lineno) + ": need t and y");
    if (!rows.empty() && fields.size() - 1 != rows.front().size()) {
      throw Error(ErrorCode::InvalidArgument, path + ":" + std::to_string(lineno) + ": column count changes");
    }
    times.push_back(fields[0]);
    rows.emplace_back(fields.begin() + 1, fields.end());
  }
  if (rows.size() < 2) throw Error(ErrorCode::InvalidArgument, "cycle file " + path + " holds fewer than two rows");
  const int N = static_cast<int>(rows.size()) - 1;
  const double period = times.back() - times.front();
  if (!(period > 0.0)) throw Error(ErrorCode::InvalidArgument, "cycle times must increase");
  const double h = period / N;
  for (int i = 0; i <= N; ++i) {
    if (std::abs(times[i] - times.front() - i * h) > 1e-9 * std::max(1.0, period)) {
      throw Error(ErrorCode::InvalidArgument, "cycle samples must be uniformly spaced (row " + std::to_string(i + 1) + ")");
    }
  }
  LimitCycle cycle;
  cycle.period = period;
  cycle.samples.resize(static_cast<Eigen::Index>(rows.front().size()), N + 1);
  for (int i = 0; i <= N; ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) cycle.samples(c, i) = rows[i][c];
  }
  return cycle;
}

LimitCycle resample(const LimitCycle& cycle, int samples) {
  LimitCycle out = cycle;
  out.samples.resize(cycle.samples.rows(), samples + 1);
  for (int i = 0; i < samples; ++i) out.samples.col(i) = cycle.at(cycle.period * i / samples);
  out.samples.col(samples) = out.samples.col(0);
  return out;
}

}  // namespace

Outcome run_stability(const std::string& config_path, const std::string& out_dir, const Overrides& overrides) {
  return guarded([&](Outcome& out) {
    const std::string text = read_file(config_path);
    const std::string fp = config_fingerprint(text, overrides);
    const json doc = parse_document(text);
    const Node root(doc, "");
    root.expect_object({"system", "cycle_file", "fd_step", "autonomous", "unit_tol", "grid", "spectrum"});
    const Node sysnode = root.at("system");
    sysnode.expect_object({"builtin", "params"});
    const NonlinearModel model = nonlinear_builtin(sysnode.string("builtin"), builtin_params(sysnode));
    const bool autonomous = root.boolean("autonomous", model.autonomous);
    const double fd_step = root.number("fd_step", 1e-6);
    double unit_tol = root.number("unit_tol", 1e-3);
    if (overrides.tol) unit_tol = *overrides.tol;
    if (!(unit_tol > 0.0)) config_error("/unit_tol", "must be positive");

    fs::path cycle_path(root.string("cycle_file"));
    if (cycle_path.is_relative()) cycle_path = fs::path(config_path).parent_path() / cycle_path;
    LimitCycle cycle = read_cycle(cycle_path.string());
    cycle.provenance = CycleProvenance::ExternallyComputed;

    SpectrumOptions options;
    options.jobs = overrides.jobs;
    std::optional<int> samples;
    if (auto g = root.find("grid")) {
      g->expect_object({"samples_per_period"});
      samples = g->integer("samples_per_period");
    }
    if (auto s = root.find("spectrum")) {
      s->expect_object({"match_tolerance", "magnitude_floor"});
      options.match_tolerance = s->number("match_tolerance", options.match_tolerance);
      options.magnitude_floor = s->number("magnitude_floor", options.magnitude_floor);
    }
    if (overrides.grid) samples = *overrides.grid;
    if (cycle.samples.rows() != model.system.dimension) {
      std::ostringstream msg;
      msg << "cycle file has " << cycle.samples.rows() << " state columns, system dimension is "
          << model.system.dimension;
      throw Error(ErrorCode::InvalidArgument, msg.str());
    }
    if (cycle.wrap_residual() > 1e-8) {
      std::ostringstream msg;
      msg << "limit cycle does not wrap: |y(T) - y(0)| = " << cycle.wrap_residual();
      throw Error(ErrorCode::InvalidArgument, msg.str());
    }
    if (samples && *samples != cycle.samples_per_period()) {
      if (*samples < PeriodicGrid::kMinSamples) config_error("/grid/samples_per_period", "must be at least 8");
      cycle = resample(cycle, *samples);
    }

    const LinearizationResult lin = linearize(model.system, cycle, fd_step);
    const FloquetDecomposition dec = floquet_spectrum(lin.system, lin.grid, options);
    const StabilityReport rep = stability_verdict(dec, autonomous, unit_tol);

    ojson doc_out;
    doc_out["fingerprint"] = fp;
    doc_out["command"] = "stability";
    doc_out["verdict"] = to_string(rep.verdict);
    doc_out["autonomous"] = rep.autonomous;
    doc_out["unit_tol"] = unit_tol;
    doc_out["cycle"] = {{"period", cycle.period},
                        {"samples_per_period", cycle.samples_per_period()},
                        {"wrap_residual", cycle.wrap_residual()},
                        {"equation_residual", lin.cycle_residual},
                        {"provenance", "externally_computed"}};
    if (rep.has_trivial) {
      doc_out["trivial_multiplier"] = complex_json(rep.trivial_multiplier);
      doc_out["trivial_error"] = rep.trivial_error;
    } else {
      doc_out["trivial_multiplier"] = nullptr;
      doc_out["trivial_error"] = nullptr;
    }
    doc_out["max_nontrivial_magnitude"] = rep.max_nontrivial_magnitude;
    ojson classes = ojson::array();
    for (const auto& c : rep.classes) {
      ojson e;
      e["multiplier"] = complex_json(c.multiplier);
      e["magnitude"] = std::abs(c.multiplier);
      e["exponent"] = complex_json(c.exponent);
      e["imaginary_spacing"] = c.class_spacing;
      e["trivial"] = c.trivial;
      classes.push_back(e);
    }
    doc_out["exponent_classes"] = classes;
    doc_out["warnings"] = lin.warnings;
    write_atomic(fs::path(out_dir), "stability.json", dump(doc_out));
    out.warnings = lin.warnings;
    out.message = std::string("verdict ") + to_string(rep.verdict);
  });
}

namespace {

NonlocalPotential1D parse_potential(const Node& node) {
  if (node.has("builtin")) {
    node.expect_object({"builtin", "params"});
    return potential_builtin(node.string("builtin"), builtin_params(node));
  }
  node.expect_object({"lattice_constant", "local", "comb_strength", "separable"});
  NonlocalPotential1D pot;
  pot.lattice_constant = node.number("lattice_constant");
  if (!(pot.lattice_constant > 0.0)) config_error(node.path() + "/lattice_constant", "must be positive");
  if (auto l = node.find("local")) {
    const MatrixFn v = matrix_spec(*l, 1, pot.lattice_constant);
    pot.local = [v](double x) { return v(x)(0, 0); };
  }
  pot.comb_strength = node.number("comb_strength", 0.0);
  if (auto s = node.find("separable")) {
    s->expect_object({"gamma", "gamma_onsite", "half_width", "center"});
    SeparableKernel k;
    k.gamma_neighbor = s->number("gamma", k.gamma_neighbor);
    k.gamma_onsite = s->number("gamma_onsite", k.gamma_onsite);
    k.half_width = s->number("half_width", k.half_width * pot.lattice_constant);
    k.center = s->number("center", k.center * pot.lattice_constant);
    set_separable_kernel(pot, k);
  }
  return pot;
}

}  // namespace

Outcome run_bands(const std::string& config_path, const std::string& out_dir, const Overrides& overrides) {
  return guarded([&](Outcome& out) {
    const std::string text = read_file(config_path);
    const std::string fp = config_fingerprint(text, overrides);
    const json doc = parse_document(text);
    const Node root(doc, "");
    root.expect_object({"potential", "energies", "grid", "unit_tol"});
    const NonlocalPotential1D pot = parse_potential(root.at("potential"));

    std::vector<double> energies;
    const Node en = root.at("energies");
    en.expect_object({"min", "max", "count", "values"});
    if (auto values = en.find("values")) {
      for (const auto& e : values->elements()) energies.push_back(e.as_number());
      if (!std::is_sorted(energies.begin(), energies.end())) config_error(values->path(), "must be ascending");
    } else {
      const double lo = en.number("min");
      const double hi = en.number("max");
      const int count = en.integer("count");
      if (count < 0) config_error(en.path() + "/count", "must be non-negative");
      if (hi < lo) config_error(en.path(), "max is below min");
      for (int i = 0; i < count; ++i) energies.push_back(count == 1 ? lo : lo + (hi - lo) * i / (count - 1));
    }
    if (energies.empty()) config_error(en.path(), "energy range is empty");

    int samples = 128;
    if (auto g = root.find("grid")) {
      g->expect_object({"samples_per_period"});
      samples = g->integer("samples_per_period", samples);
    }
    if (overrides.grid) samples = *overrides.grid;
    if (samples < PeriodicGrid::kMinSamples) config_error("/grid/samples_per_period", "must be at least 8");
    BlochOptions options;
    options.unit_tol = root.number("unit_tol", options.unit_tol);
    if (overrides.tol) options.unit_tol = *overrides.tol;
    if (!(options.unit_tol > 0.0)) config_error("/unit_tol", "must be positive");
    options.jobs = overrides.jobs;

    const PotentialValidation val = validate_potential(pot, samples);
    if (!val.passed) {
      std::ostringstream msg;
      msg << "potential fails validation (local " << val.local_residual << ", kernel " << val.kernel_residual
          << ", symmetry " << val.symmetry_residual << ")";
      throw Error(ErrorCode::InvalidSystem, msg.str());
    }
    if (pot.kernel && pot.kernel_range >= pot.lattice_constant * samples) {
      throw Error(ErrorCode::InvalidArgument, "kernel range exceeds the representable history");
    }

    const BandDiagram diagram = band_scan(pot, energies, samples, options);
    const ExtremaResult extrema = detect_interior_extrema(diagram);

    std::size_t widest = 0;
    int succeeded = 0;
    for (const auto& r : diagram.records) {
      widest = std::max(widest, r.k_values.size());
      if (r.ok) ++succeeded;
    }
    std::ostringstream csv;
    csv << "# fingerprint=" << fp << "\n";
    csv << "E,p";
    for (std::size_t i = 0; i < widest; ++i) csv << ",k" << i + 1;
    csv << "\n";
    for (const auto& r : diagram.records) {
      csv << num(r.energy) << ",";
      if (r.ok) csv << r.p;
      for (std::size_t i = 0; i < widest; ++i) {
        csv << ",";
        if (i < r.k_values.size()) csv << num(r.k_values[i]);
      }
      csv << "\n";
    }

    ojson ext;
    ext["fingerprint"] = fp;
    ext["bands"] = extrema.bands;
    ext["ambiguous"] = extrema.ambiguous;
    ojson list = ojson::array();
    for (const auto& e : extrema.extrema) {
      ojson item;
      item["band"] = e.band;
      item["k"] = e.k;
      item["energy"] = e.energy;
      item["kind"] = e.minimum ? "minimum" : "maximum";
      list.push_back(item);
    }
    ext["extrema"] = list;

    ojson diag;
    diag["fingerprint"] = fp;
    diag["lattice_constant"] = pot.lattice_constant;
    diag["samples_per_period"] = samples;
    diag["unit_tol"] = options.unit_tol;
    diag["method"] = pot.is_local() ? "monodromy" : "collocation";
    diag["succeeded"] = succeeded;
    diag["total"] = diagram.records.size();
    ojson records = ojson::array();
    for (const auto& r : diagram.records) {
      ojson item;
      item["energy"] = r.energy;
      item["ok"] = r.ok;
      if (r.ok) {
        item["p"] = r.p;
        item["confirmed"] = r.confirmed;
        item["multiplier_magnitudes"] = r.multiplier_magnitudes;
      } else {
        item["error"] = r.error;
      }
      records.push_back(item);
    }
    diag["records"] = records;

    const fs::path dir(out_dir);
    write_atomic(dir, "bands.csv", csv.str());
    write_atomic(dir, "extrema.json", dump(ext));
    write_atomic(dir, "diagnostics.json", dump(diag));
    const double fraction = static_cast<double>(succeeded) / static_cast<double>(diagram.records.size());
    for (const auto& r : diagram.records) {
      if (!r.ok) out.warnings.push_back("E=" + num(r.energy) + ": " + r.error);
    }
    if (fraction < 0.9) {
      out.exit_code = 3;
      out.error = ErrorCode::Convergence;
      out.message = "only " + std::to_string(succeeded) + " of " + std::to_string(diagram.records.size()) +
                    " energies succeeded";
      return;
    }
    out.message = std::to_string(succeeded) + " of " + std::to_string(diagram.records.size()) + " energies";
  });
}

}  // namespace gfloquet::pipeline
