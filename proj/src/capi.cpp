#include "gfloquet/gfloquet.h"

#include <string>

#include "pipeline.hpp"

struct gfq_system {
  gfloquet::pipeline::SystemConfig config;
};

struct gfq_spectrum {
  std::vector<gfloquet::Complex> multipliers;
  std::vector<gfloquet::Complex> exponents;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_warnings;
thread_local std::string last_message;

gfq_status status_for(gfloquet::ErrorCode code) {
  using gfloquet::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument:
      return GFQ_INVALID_ARGUMENT;
    case ErrorCode::InvalidSystem:
      return GFQ_INVALID_SYSTEM;
    case ErrorCode::Resolution:
      return GFQ_RESOLUTION;
    case ErrorCode::Convergence:
      return GFQ_CONVERGENCE;
    case ErrorCode::NotTruncatable:
      return GFQ_NOT_TRUNCATABLE;
    case ErrorCode::Eigensolver:
      return GFQ_EIGENSOLVER;
    case ErrorCode::Io:
      return GFQ_IO;
  }
  return GFQ_INTERNAL;
}

template <typename Body>
gfq_status guarded(Body&& body) {
  try {
    last_error.clear();
    body();
    return GFQ_OK;
  } catch (const gfloquet::Error& e) {
    last_error = e.what();
    return status_for(e.code());
  } catch (const std::exception& e) {
    last_error = e.what();
    return GFQ_INTERNAL;
  } catch (...) {
    last_error = "unknown failure";
    return GFQ_INTERNAL;
  }
}

gfq_status fail(gfq_status status, const char* message) {
  last_error = message;
  return status;
}

using Runner = gfloquet::pipeline::Outcome (*)(const std::string&, const std::string&,
                                               const gfloquet::pipeline::Overrides&);

gfq_status run(Runner runner, const gfq_run_options* options, int* exit_code) {
  if (!options || !options->config_path || !options->out_dir || !exit_code) {
    return fail(GFQ_INVALID_ARGUMENT, "null argument");
  }
  return guarded([&] {
    gfloquet::pipeline::Overrides o;
    if (options->grid > 0) o.grid = options->grid;
    if (options->tol > 0.0) o.tol = options->tol;
    o.jobs = options->jobs;
    const auto outcome = runner(options->config_path, options->out_dir, o);
    last_warnings.clear();
    last_message = outcome.message;
    for (const auto& w : outcome.warnings) last_warnings += w + "\n";
    *exit_code = outcome.exit_code;
    if (outcome.error) throw gfloquet::Error(*outcome.error, outcome.message);
  });
}

}  // namespace

extern "C" {

const char* gfq_version(void) { return "0.1.0"; }

const char* gfq_last_error(void) { return last_error.c_str(); }

const char* gfq_last_warnings(void) { return last_warnings.c_str(); }

const char* gfq_last_message(void) { return last_message.c_str(); }

const char* gfq_status_name(gfq_status status) {
  switch (status) {
    case GFQ_OK:
      return "ok";
    case GFQ_INVALID_ARGUMENT:
      return "invalid argument";
    case GFQ_INVALID_SYSTEM:
      return "invalid system";
    case GFQ_RESOLUTION:
      return "resolution";
    case GFQ_CONVERGENCE:
      return "convergence";
    case GFQ_NOT_TRUNCATABLE:
      return "not truncatable";
    case GFQ_EIGENSOLVER:
      return "eigensolver";
    case GFQ_IO:
      return "io";
    case GFQ_INTERNAL:
      return "internal";
  }
  return "unknown";
}

gfq_status gfq_run_analyze(const gfq_run_options* options, int* exit_code) {
  return run(&gfloquet::pipeline::run_analyze, options, exit_code);
}

gfq_status gfq_run_stability(const gfq_run_options* options, int* exit_code) {
  return run(&gfloquet::pipeline::run_stability, options, exit_code);
}

gfq_status gfq_run_bands(const gfq_run_options* options, int* exit_code) {
  return run(&gfloquet::pipeline::run_bands, options, exit_code);
}

gfq_status gfq_system_from_json(const char* json, gfq_system** out) {
  if (!json || !out) return fail(GFQ_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] { *out = new gfq_system{gfloquet::pipeline::parse_system_config(json)}; });
}

void gfq_system_destroy(gfq_system* system) { delete system; }

gfq_status gfq_system_dimension(const gfq_system* system, int* dimension) {
  if (!system || !dimension) return fail(GFQ_INVALID_ARGUMENT, "null argument");
  *dimension = system->config.model.system.dimension;
  return GFQ_OK;
}

gfq_status gfq_spectrum_compute(const gfq_system* system, int samples_per_period, int jobs, gfq_spectrum** out) {
  if (!system || !out) return fail(GFQ_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    const auto& cfg = system->config;
    const int N = samples_per_period > 0 ? samples_per_period : cfg.samples_per_period;
    const gfloquet::PeriodicGrid grid(cfg.model.period, N, cfg.model.memory_depth);
    auto options = cfg.options;
    options.jobs = jobs;
    options.max_modes = 0;
    const auto dec = gfloquet::floquet_spectrum(cfg.model.system, grid, options);
    auto* spec = new gfq_spectrum;
    for (const auto& m : dec.multipliers) {
      if (!m.converged) continue;
      spec->multipliers.push_back(m.multiplier);
      spec->exponents.push_back(m.exponent);
    }
    *out = spec;
  });
}

void gfq_spectrum_destroy(gfq_spectrum* spectrum) { delete spectrum; }

gfq_status gfq_spectrum_count(const gfq_spectrum* spectrum, size_t* count) {
  if (!spectrum || !count) return fail(GFQ_INVALID_ARGUMENT, "null argument");
  *count = spectrum->multipliers.size();
  return GFQ_OK;
}

gfq_status gfq_spectrum_multiplier(const gfq_spectrum* spectrum, size_t index, double* re, double* im) {
  if (!spectrum || !re || !im) return fail(GFQ_INVALID_ARGUMENT, "null argument");
  if (index >= spectrum->multipliers.size()) return fail(GFQ_INVALID_ARGUMENT, "index out of range");
  *re = spectrum->multipliers[index].real();
  *im = spectrum->multipliers[index].imag();
  return GFQ_OK;
}

gfq_status gfq_spectrum_exponent(const gfq_spectrum* spectrum, size_t index, double* re, double* im) {
  if (!spectrum || !re || !im) return fail(GFQ_INVALID_ARGUMENT, "null argument");
  if (index >= spectrum->exponents.size()) return fail(GFQ_INVALID_ARGUMENT, "index out of range");
  *re = spectrum->exponents[index].real();
  *im = spectrum->exponents[index].imag();
  return GFQ_OK;
}

}  // extern "C"
