#include "frmab/dynamics.hpp"

#include <cmath>

#include "frmab/errors.hpp"

namespace frmab {

namespace {

// (e^{a h} - 1) / a, continuous at a = 0.
double expm1_ratio(double a, double h) {
  if (a == 0.0) return h;
  return std::expm1(a * h) / a;
}

// (e^{a h} - 1 - a h) / a^2, continuous at a = 0.
double expm1_ratio2(double a, double h) {
  const double z = a * h;
  if (std::abs(z) < 1e-2) {
    return h * h *
           (0.5 + z * (1.0 / 6 + z * (1.0 / 24 + z * (1.0 / 120 +
                                                       z * (1.0 / 720 + z / 5040)))));
  }
  return (std::expm1(z) - z) / (a * a);
}

double require_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw Error(ErrorKind::InvalidInstance,
                std::string("missing numeric field '") + key + "'");
  }
  return j.at(key).get<double>();
}

}  // namespace

const char* to_string(Family family) {
  return family == Family::Affine ? "affine" : "quadratic";
}

Family parse_family(const std::string& name) {
  if (name == "affine") return Family::Affine;
  if (name == "quadratic") return Family::Quadratic;
  throw Error(ErrorKind::InvalidInstance, "unknown dynamics family '" + name + "'");
}

MixedCoeffs mix_coeffs(const ProjectDynamics& d, int u) {
  const double w = static_cast<double>(u);
  return {d.alpha0 + w * (d.alpha1 - d.alpha0), d.beta0 + w * (d.beta1 - d.beta0),
          d.r0 + w * (d.r1 - d.r0), d.c0 + w * (d.c1 - d.c0)};
}

Family FrmabInstance::family() const {
  return projects.empty() ? Family::Affine : projects.front().family;
}

std::size_t FrmabInstance::num_steps() const {
  const double steps = std::ceil(horizon / delta - 1e-9);
  return steps < 1.0 ? 1 : static_cast<std::size_t>(steps);
}

double FrmabInstance::grid_time(std::size_t k) const {
  if (k >= num_steps()) return horizon;
  return static_cast<double>(k) * delta;
}

void validate(const ProjectDynamics& d) {
  for (double v : {d.alpha0, d.alpha1, d.beta0, d.beta1, d.r0, d.r1, d.c0, d.c1}) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::InvalidInstance, "non-finite project coefficient");
    }
  }
  if (!(d.h_bound > 0.0)) {
    throw Error(ErrorKind::InvalidInstance, "h_bound must be positive");
  }
  if (d.family == Family::Quadratic) {
    if (d.alpha0 == 0.0 || d.alpha1 == 0.0 || d.beta0 == 0.0 || d.beta1 == 0.0) {
      throw Error(ErrorKind::InvalidInstance,
                  "quadratic dynamics need nonzero alpha and beta");
    }
    if (!(d.beta0 < 0.0 && d.beta1 < 0.0)) {
      throw Error(ErrorKind::InvalidInstance,
                  "quadratic dynamics must be concave (beta < 0)");
    }
  }
}

void validate(const FrmabInstance& inst) {
  if (inst.projects.empty()) {
    throw Error(ErrorKind::InvalidInstance, "instance has no projects");
  }
  for (const auto& p : inst.projects) {
    validate(p);
    if (p.family != inst.family()) {
      throw Error(ErrorKind::InvalidInstance, "mixed dynamics families");
    }
  }
  if (inst.budget < 1 || static_cast<std::size_t>(inst.budget) >= inst.n()) {
    throw Error(ErrorKind::InvalidInstance, "budget must satisfy 1 <= m < n");
  }
  if (!(inst.horizon > 0.0) || !std::isfinite(inst.horizon)) {
    throw Error(ErrorKind::InvalidInstance, "horizon must be positive");
  }
  if (!(inst.eps > 0.0)) throw Error(ErrorKind::InvalidInstance, "eps must be positive");
  if (!(inst.delta > 0.0) || inst.delta > inst.horizon) {
    throw Error(ErrorKind::InvalidInstance, "delta must lie in (0, horizon]");
  }
}

ArmState propagate_affine(const ProjectDynamics& d, double x_s, double y_s,
                          int u, double dt) {
  const MixedCoeffs k = mix_coeffs(d, u);
  if (std::abs(k.beta) < kBetaZero) {
    return {x_s + k.alpha * dt, y_s - k.r * dt};
  }
  // x_s + (-a/b - x_s)(1 - e^{b dt}) and y_s + (-r/b - y_s)(1 - e^{-b dt}),
  // rearranged around expm1.
  const double x = x_s * std::exp(k.beta * dt) + k.alpha * expm1_ratio(k.beta, dt);
  const double y = y_s * std::exp(-k.beta * dt) - k.r * expm1_ratio(-k.beta, dt);
  return {x, y};
}

ArmState propagate_quadratic(const ProjectDynamics& d, double x_s, double y_s,
                             int u, double dt) {
  if (!(x_s > 0.0)) {
    throw Error(ErrorKind::NonPositiveState, "quadratic propagation needs x > 0");
  }
  const MixedCoeffs k = mix_coeffs(d, u);
  if (std::abs(k.alpha + k.beta * x_s) < kEquilibrium) {
    // x is at the carrying capacity; the costate ODE is then linear with
    // constant rate alpha + 2 beta x_s.
    const double rate = k.alpha + 2.0 * k.beta * x_s;
    return {x_s, y_s * std::exp(-rate * dt) - k.r * expm1_ratio(-rate, dt)};
  }
  // The K/G form with K = x_s / (a + b x_s) and G chosen to match y_s,
  // rewritten in terms of rho = 1 - K b e^{a dt} scaled by (a + b x_s) / a,
  // which stays finite as a + b x_s -> 0.
  const double growth = expm1_ratio(k.alpha, dt);
  const double rho = 1.0 - k.beta * x_s * growth;
  const double x = x_s * std::exp(k.alpha * dt) / rho;
  const double y = std::exp(-k.alpha * dt) * (y_s * rho * rho - k.r * rho * growth);
  return {x, y};
}

ArmState propagate(const ProjectDynamics& d, double x_s, double y_s, int u,
                   double dt) {
  return d.family == Family::Affine ? propagate_affine(d, x_s, y_s, u, dt)
                                    : propagate_quadratic(d, x_s, y_s, u, dt);
}

InterpCoeffs quadratic_constants(const ProjectDynamics& d, double x_s,
                                 double y_s, int u) {
  const MixedCoeffs k = mix_coeffs(d, u);
  const double slope = k.alpha + k.beta * x_s;
  const double K = x_s / slope;
  // At tau = 0: y_s = G D0^2 - r D0 / (K a b), D0 = 1 - K b = a / slope,
  // and r D0 / (K a b) simplifies to r / (b x_s).
  const double d0 = k.alpha / slope;
  const double G = (y_s + k.r / (k.beta * x_s)) / (d0 * d0);
  return {K, G};
}

ArmState evaluate_quadratic(const ProjectDynamics& d, const InterpCoeffs& c,
                            int u, double tau) {
  const MixedCoeffs k = mix_coeffs(d, u);
  const double e = std::exp(k.alpha * tau);
  const double denom = 1.0 - c.K * k.beta * e;
  const double x = c.K * k.alpha * e / denom;
  const double y = c.G * denom * denom / e -
                   k.r / (c.K * k.alpha * k.beta) * denom / e;
  return {x, y};
}

double state_integral(const ProjectDynamics& d, double x_s, int u, double dt) {
  const MixedCoeffs k = mix_coeffs(d, u);
  if (d.family == Family::Affine) {
    if (std::abs(k.beta) < kBetaZero) return x_s * dt + 0.5 * k.alpha * dt * dt;
    return x_s * expm1_ratio(k.beta, dt) + k.alpha * expm1_ratio2(k.beta, dt);
  }
  if (std::abs(k.alpha + k.beta * x_s) < kEquilibrium) return x_s * dt;
  // d/dtau of rho is -b x_s e^{a tau}, so the integral of x is -ln(rho) / b.
  return -std::log1p(-k.beta * x_s * expm1_ratio(k.alpha, dt)) / k.beta;
}

double reward_integral(const ProjectDynamics& d, double x_s, int u, double dt) {
  const MixedCoeffs k = mix_coeffs(d, u);
  return k.r * state_integral(d, x_s, u, dt) - k.c * dt;
}

double state_rate(const ProjectDynamics& d, double x, int u) {
  const MixedCoeffs k = mix_coeffs(d, u);
  return d.family == Family::Affine ? k.alpha + k.beta * x
                                    : k.alpha * x + k.beta * x * x;
}

double costate_rate(const ProjectDynamics& d, double x, double y, int u) {
  const MixedCoeffs k = mix_coeffs(d, u);
  return d.family == Family::Affine ? -k.r - k.beta * y
                                    : -k.r - y * (k.alpha + 2.0 * k.beta * x);
}

double reward_rate(const ProjectDynamics& d, double x, int u) {
  const MixedCoeffs k = mix_coeffs(d, u);
  return k.r * x - k.c;
}

ArmState rk4_oracle(const ProjectDynamics& d, double x_s, double y_s, int u,
                    double dt, double step) {
  double x = x_s;
  double y = y_s;
  const auto steps = static_cast<long long>(std::ceil(dt / step - 1e-12));
  for (long long i = 0; i < steps; ++i) {
    const double h = (i + 1 == steps) ? dt - static_cast<double>(i) * step : step;
    const double kx1 = state_rate(d, x, u);
    const double ky1 = costate_rate(d, x, y, u);
    const double kx2 = state_rate(d, x + 0.5 * h * kx1, u);
    const double ky2 = costate_rate(d, x + 0.5 * h * kx1, y + 0.5 * h * ky1, u);
    const double kx3 = state_rate(d, x + 0.5 * h * kx2, u);
    const double ky3 = costate_rate(d, x + 0.5 * h * kx2, y + 0.5 * h * ky2, u);
    const double kx4 = state_rate(d, x + h * kx3, u);
    const double ky4 = costate_rate(d, x + h * kx3, y + h * ky3, u);
    x += h / 6.0 * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4);
    y += h / 6.0 * (ky1 + 2.0 * ky2 + 2.0 * ky3 + ky4);
  }
  return {x, y};
}

nlohmann::json to_json(const FrmabInstance& inst) {
  nlohmann::json projects = nlohmann::json::array();
  for (const auto& p : inst.projects) {
    nlohmann::json jp = {{"alpha0", p.alpha0}, {"alpha1", p.alpha1},
                         {"beta0", p.beta0},   {"beta1", p.beta1},
                         {"r0", p.r0},         {"r1", p.r1},
                         {"c0", p.c0},         {"c1", p.c1}};
    jp["h_bound"] = std::isfinite(p.h_bound) ? nlohmann::json(p.h_bound)
                                              : nlohmann::json(nullptr);
    projects.push_back(std::move(jp));
  }
  return {{"family", to_string(inst.family())},
          {"projects", std::move(projects)},
          {"horizon", inst.horizon},
          {"budget", inst.budget},
          {"eps", inst.eps},
          {"delta", inst.delta}};
}

FrmabInstance instance_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("family") || !j.at("family").is_string() ||
      !j.contains("projects") || !j.at("projects").is_array()) {
    throw Error(ErrorKind::InvalidInstance, "instance JSON needs family and projects");
  }
  FrmabInstance inst;
  const Family family = parse_family(j.at("family").get<std::string>());
  for (const auto& jp : j.at("projects")) {
    ProjectDynamics p;
    p.family = family;
    p.alpha0 = require_number(jp, "alpha0");
    p.alpha1 = require_number(jp, "alpha1");
    p.beta0 = require_number(jp, "beta0");
    p.beta1 = require_number(jp, "beta1");
    p.r0 = require_number(jp, "r0");
    p.r1 = require_number(jp, "r1");
    p.c0 = require_number(jp, "c0");
    p.c1 = require_number(jp, "c1");
    if (jp.contains("h_bound") && !jp.at("h_bound").is_null()) {
      p.h_bound = require_number(jp, "h_bound");
    }
    inst.projects.push_back(p);
  }
  inst.horizon = require_number(j, "horizon");
  if (!j.contains("budget") || !j.at("budget").is_number_integer()) {
    throw Error(ErrorKind::InvalidInstance, "missing integer field 'budget'");
  }
  inst.budget = j.at("budget").get<int>();
  if (j.contains("eps")) inst.eps = require_number(j, "eps");
  if (j.contains("delta")) inst.delta = require_number(j, "delta");
  validate(inst);
  return inst;
}

}  // namespace frmab
