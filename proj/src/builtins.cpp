#include "gfloquet/builtins.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "gfloquet/monodromy.hpp"

namespace gfloquet {

namespace {

class ParamReader {
 public:
  ParamReader(std::string builtin, const BuiltinParams& params, std::set<std::string> allowed)
      : builtin_(std::move(builtin)), params_(params) {
    for (const auto& [key, value] : params_) {
      if (!allowed.count(key)) {
        throw Error(ErrorCode::InvalidArgument, "unknown parameter '" + key + "' for builtin " + builtin_);
      }
      if (!std::isfinite(value)) {
        throw Error(ErrorCode::InvalidArgument, "parameter '" + key + "' of builtin " + builtin_ + " is not finite");
      }
    }
  }

  double get(const std::string& key, double fallback) const {
    const auto it = params_.find(key);
    return it == params_.end() ? fallback : it->second;
  }

  double positive(const std::string& key, double fallback) const {
    const double v = get(key, fallback);
    if (!(v > 0.0)) throw Error(ErrorCode::InvalidArgument, "parameter '" + key + "' of " + builtin_ + " must be positive");
    return v;
  }

 private:
  std::string builtin_;
  const BuiltinParams& params_;
};

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace

std::vector<std::string> linear_builtin_names() {
  return {"scalar_cosine", "delay_pi_over_2", "exp_kernel", "mathieu"};
}

std::vector<std::string> nonlinear_builtin_names() { return {"van_der_pol", "linear_stable", "cubic_forced"}; }

std::vector<std::string> potential_builtin_names() {
  return {"free_particle", "kronig_penney", "separable_nonlocal"};
}

LinearModel linear_builtin(const std::string& name, const BuiltinParams& params, int samples_per_period) {
  LinearModel model;
  LinearMemorySystem& sys = model.system;
  sys.dimension = 1;
  if (name == "scalar_cosine") {
    // z' = (alpha + beta cos(2 pi s / period)) z
    const ParamReader p(name, params, {"alpha", "beta", "period"});
    const double alpha = p.get("alpha", 0.3);
    const double beta = p.get("beta", 1.0);
    model.period = p.positive("period", 1.0);
    const double omega = 2.0 * std::numbers::pi / model.period;
    sys.coefficient = [=](double s) { return scalar(alpha + beta * std::cos(omega * s)); };
  } else if (name == "delay_pi_over_2") {
    // z' = -c z(s - d); critical at c d = pi/2
    const ParamReader p(name, params, {"coefficient", "delay", "period"});
    const double c = p.get("coefficient", std::numbers::pi / 2.0);
    const double d = p.positive("delay", 1.0);
    model.period = p.positive("period", d);
    model.memory_depth = d;
    sys.coefficient = [](double) { return scalar(0.0); };
    sys.delay_taps.push_back({d, [c](double) { return scalar(-c); }});
  } else if (name == "exp_kernel") {
    // z' = a z + int b exp(-(s - t)/theta) z(t) dt, truncated where the tail drops below epsilon
    const ParamReader p(name, params, {"a", "b", "theta", "epsilon", "period"});
    const double a = p.get("a", -0.5);
    const double b = p.get("b", 1.0);
    const double theta = p.positive("theta", 0.25);
    const double eps = p.positive("epsilon", 1e-10);
    model.period = p.positive("period", 1.0);
    sys.coefficient = [a](double) { return scalar(a); };
    sys.kernel = [b, theta](double s, double t) { return scalar(b * std::exp(-(s - t) / theta)); };
    const PeriodicGrid grid(model.period, samples_per_period, 0.0);
    model.memory_depth = truncate_infinite_kernel(sys.kernel, [](double) { return 1.0; }, eps, grid).memory_depth;
  } else if (name == "mathieu") {
    // z'' + (delta + epsilon cos s) z = 0
    const ParamReader p(name, params, {"delta", "epsilon"});
    const double delta = p.get("delta", 0.25);
    const double eps = p.get("epsilon", 0.2);
    model.period = 2.0 * std::numbers::pi;
    sys.dimension = 2;
    sys.coefficient = [=](double s) {
      Matrix m(2, 2);
      m << 0.0, 1.0, -(delta + eps * std::cos(s)), 0.0;
      return m;
    };
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown linear builtin '" + name + "'");
  }
  return model;
}

NonlinearModel nonlinear_builtin(const std::string& name, const BuiltinParams& params) {
  NonlinearModel model;
  NonlinearMemorySystem& nl = model.system;
  if (name == "van_der_pol") {
    const ParamReader p(name, params, {"mu"});
    const double mu = p.get("mu", 1.0);
    nl.dimension = 2;
    nl.field = [mu](const Vector& y, double) {
      Vector f(2);
      f << y(1), mu * (1.0 - y(0) * y(0)) * y(1) - y(0);
      return f;
    };
    model.autonomous = true;
  } else if (name == "linear_stable") {
    // Damped rotation; any periodic orbit of it is the origin.
    const ParamReader p(name, params, {"decay", "rotation"});
    const double decay = p.positive("decay", 0.5);
    const double rot = p.get("rotation", 1.0);
    nl.dimension = 2;
    nl.field = [=](const Vector& y, double) {
      Vector f(2);
      f << -decay * y(0) + rot * y(1), -rot * y(0) - decay * y(1);
      return f;
    };
  } else if (name == "cubic_forced") {
    const ParamReader p(name, params, {"amplitude", "period"});
    const double amp = p.get("amplitude", 1.0);
    const double period = p.positive("period", 1.0);
    const double omega = 2.0 * std::numbers::pi / period;
    nl.dimension = 1;
    nl.period = period;
    nl.field = [=](const Vector& y, double t) {
      Vector f(1);
      f(0) = -y(0) * y(0) * y(0) + amp * std::cos(omega * t);
      return f;
    };
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown nonlinear builtin '" + name + "'");
  }
  return model;
}

NonlocalPotential1D potential_builtin(const std::string& name, const BuiltinParams& params) {
  if (name == "free_particle") {
    const ParamReader p(name, params, {"a"});
    NonlocalPotential1D pot;
    pot.lattice_constant = p.positive("a", 1.0);
    return pot;
  }
  if (name == "kronig_penney") {
    const ParamReader p(name, params, {"P", "a"});
    return kronig_penney_potential(p.get("P", 3.0), p.positive("a", 1.0));
  }
  if (name == "separable_nonlocal") {
    const ParamReader p(name, params, {"a", "gamma", "gamma_onsite", "half_width", "center", "V0"});
    NonlocalPotential1D pot;
    pot.lattice_constant = p.positive("a", 1.0);
    const double v0 = p.get("V0", 0.0);
    if (v0 != 0.0) pot.local = [v0](double) { return v0; };
    SeparableKernel k;
    k.gamma_neighbor = p.get("gamma", k.gamma_neighbor);
    k.gamma_onsite = p.get("gamma_onsite", k.gamma_onsite);
    k.half_width = p.positive("half_width", k.half_width * pot.lattice_constant);
    k.center = p.get("center", k.center * pot.lattice_constant);
    set_separable_kernel(pot, k);
    return pot;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown potential builtin '" + name + "'");
}

}  // namespace gfloquet
