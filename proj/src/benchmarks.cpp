#include "frmab/benchmarks.hpp"

#include <algorithm>
#include <cmath>

#include "frmab/errors.hpp"

namespace frmab {

namespace {

FrmabInstance base_instance(const BenchmarkSpec& spec) {
  if (spec.n < 2) throw Error(ErrorKind::InvalidInstance, "benchmarks need n >= 2");
  if (!(spec.horizon > 0.0)) throw Error(ErrorKind::InvalidInstance, "horizon must be positive");
  FrmabInstance inst;
  inst.horizon = spec.horizon;
  inst.budget = spec.budget > 0 ? spec.budget : default_budget(spec.n);
  inst.eps = spec.eps;
  inst.delta = spec.delta;
  return inst;
}

void push(FamilyMeta& meta, const std::string& key, double v) {
  for (auto& [k, values] : meta.params) {
    if (k == key) {
      values.push_back(v);
      return;
    }
  }
  meta.params.push_back({key, {v}});
}

}  // namespace

const char* to_string(BenchmarkFamily family) {
  switch (family) {
    case BenchmarkFamily::Machine: return "machine";
    case BenchmarkFamily::Epidemic: return "epidemic";
    case BenchmarkFamily::Fisheries: return "fisheries";
    case BenchmarkFamily::Routing: return "routing";
  }
  return "unknown";
}

BenchmarkFamily parse_benchmark_family(const std::string& name) {
  if (name == "machine") return BenchmarkFamily::Machine;
  if (name == "epidemic") return BenchmarkFamily::Epidemic;
  if (name == "fisheries") return BenchmarkFamily::Fisheries;
  if (name == "routing") return BenchmarkFamily::Routing;
  throw Error(ErrorKind::InvalidInstance, "unknown benchmark family '" + name + "'");
}

int default_budget(int n) { return std::max(1, static_cast<int>(std::floor(0.3 * n))); }

const std::vector<double>& FamilyMeta::at(const std::string& key) const {
  for (const auto& [k, values] : params) {
    if (k == key) return values;
  }
  throw Error(ErrorKind::InvalidInstance, "family_meta has no '" + key + "'");
}

nlohmann::json FamilyMeta::to_json() const {
  nlohmann::json j = {{"family", family}};
  for (const auto& [k, values] : params) j[k] = values;
  return j;
}

GeneratedInstance gen_machine(const BenchmarkSpec& spec) {
  GeneratedInstance out{base_instance(spec), {"machine", {}}};
  for (int i = 0; i < spec.n; ++i) {
    Rng rng(spec.seed, static_cast<std::uint64_t>(i));
    const double h = rng.uniform(0.0, 0.5);
    const double C = rng.uniform(1.0, 3.0);
    const double L = rng.uniform(2.0, 4.0);
    const double R = rng.uniform(2.0, 4.0);
    ProjectDynamics p;
    p.family = Family::Affine;
    p.alpha1 = 0.0;
    p.beta1 = 0.0;
    p.alpha0 = h;
    p.beta0 = -h;
    // u R_1 + (1 - u) R_0 = R - C h u + L h (1 - u)(1 - x).
    p.r1 = 0.0;
    p.c1 = -(R - C * h);
    p.r0 = -L * h;
    p.c0 = -(R + L * h);
    p.h_bound = 1.0;
    out.instance.projects.push_back(p);
    push(out.meta, "h", h);
    push(out.meta, "C", C);
    push(out.meta, "L", L);
    push(out.meta, "R", R);
  }
  validate(out.instance);
  return out;
}

GeneratedInstance gen_epidemic(const BenchmarkSpec& spec) {
  GeneratedInstance out{base_instance(spec), {"epidemic", {}}};
  for (int i = 0; i < spec.n; ++i) {
    Rng rng(spec.seed, static_cast<std::uint64_t>(i));
    const double C = rng.uniform(0.0, 1.0);
    const double P = C * rng.uniform(0.0, 1.0);
    const double lambda1 = rng.uniform(2.0, 4.0);
    const double mu0 = rng.uniform(2.0, 4.0);
    // Open interval keeps lambda1 < mu1 and lambda0 > mu0 strict.
    const double mu1 = lambda1 + rng.uniform_open(0.0, 0.5);
    const double lambda0 = mu0 + rng.uniform_open(0.0, 0.5);
    ProjectDynamics p;
    p.family = Family::Quadratic;
    p.alpha0 = lambda0 - mu0;
    p.alpha1 = lambda1 - mu1;
    p.beta0 = -lambda0;
    p.beta1 = -lambda1;
    // Cost C x + P u in maximization form.
    p.r0 = -C;
    p.r1 = -C;
    p.c0 = 0.0;
    p.c1 = P;
    p.h_bound = 1.0;
    out.instance.projects.push_back(p);
    push(out.meta, "C", C);
    push(out.meta, "P", P);
    push(out.meta, "lambda0", lambda0);
    push(out.meta, "lambda1", lambda1);
    push(out.meta, "mu0", mu0);
    push(out.meta, "mu1", mu1);
  }
  validate(out.instance);
  return out;
}

GeneratedInstance gen_fisheries(const BenchmarkSpec& spec) {
  GeneratedInstance out{base_instance(spec), {"fisheries", {}}};
  for (int i = 0; i < spec.n; ++i) {
    Rng rng(spec.seed, static_cast<std::uint64_t>(i));
    double r = 0, H = 0, q = 0, p = 0, C = 0;
    do {
      r = rng.uniform(0.0, 0.15);
      H = rng.uniform(1.0, 6.0);
      q = rng.uniform(0.0, 0.15);
      p = rng.uniform(0.0, 2.0);
      C = rng.uniform(0.0, 0.1);
    } while (r == 0.0 || r - q == 0.0);
    ProjectDynamics d;
    d.family = Family::Quadratic;
    d.beta0 = -r / H;
    d.beta1 = -r / H;
    d.alpha0 = r;
    d.alpha1 = r - q;
    d.r1 = p * q;
    d.c1 = C;
    d.r0 = 0.0;
    d.c0 = 0.0;
    d.h_bound = H;
    out.instance.projects.push_back(d);
    push(out.meta, "r", r);
    push(out.meta, "H", H);
    push(out.meta, "q", q);
    push(out.meta, "p", p);
    push(out.meta, "C", C);
  }
  validate(out.instance);
  return out;
}

RoutingParams reference_routing_params() {
  RoutingParams p;
  p.lambda = 1.0;
  p.mu = {0.5, 1.0};
  p.C = {1.0, 1.5};
  p.R = 3.0;
  p.horizon = 10.0;
  return p;
}

RoutingParams sample_routing_params(int n, double horizon, std::uint64_t seed) {
  RoutingParams p;
  p.horizon = horizon;
  for (int i = 0; i < n; ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i));
    p.mu.push_back(rng.uniform(0.5, 1.5));
    p.C.push_back(rng.uniform(1.0, 2.0));
  }
  return p;
}

GeneratedInstance gen_routing(const RoutingParams& params, double eps, double delta) {
  if (params.mu.size() != params.C.size() || params.mu.size() < 2) {
    throw Error(ErrorKind::InvalidInstance, "routing needs matching mu and C, n >= 2");
  }
  GeneratedInstance out;
  out.meta.family = "routing";
  out.instance.horizon = params.horizon;
  out.instance.budget = 1;
  out.instance.eps = eps;
  out.instance.delta = delta;
  for (std::size_t i = 0; i < params.mu.size(); ++i) {
    if (!(params.mu[i] > 0.0)) throw Error(ErrorKind::InvalidInstance, "mu must be positive");
    ProjectDynamics d;
    d.family = Family::Affine;
    d.alpha1 = params.lambda;
    d.alpha0 = 0.0;
    d.beta0 = -params.mu[i];
    d.beta1 = -params.mu[i];
    d.r0 = -params.C[i];
    d.r1 = -params.C[i];
    d.c1 = -params.R * params.lambda;
    d.c0 = 0.0;
    out.instance.projects.push_back(d);
    push(out.meta, "mu", params.mu[i]);
    push(out.meta, "C", params.C[i]);
    push(out.meta, "lambda", params.lambda);
    push(out.meta, "R", params.R);
  }
  validate(out.instance);
  return out;
}

std::vector<double> routing_costate(const RoutingParams& params, double t) {
  std::vector<double> y(params.mu.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = -params.C[i] / params.mu[i] * -std::expm1(-params.mu[i] * (params.horizon - t));
  }
  return y;
}

IndexVector routing_index(const RoutingParams& params, double t) {
  IndexVector g(params.mu.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = params.R - params.C[i] * params.lambda / params.mu[i] *
                          -std::expm1(-params.mu[i] * (params.horizon - t));
  }
  return g;
}

Control analytic_routing_policy(const RoutingParams& params, double t) {
  return select_control(routing_index(params, t), 1);
}

GeneratedInstance generate_benchmark(const BenchmarkSpec& spec) {
  switch (spec.family) {
    case BenchmarkFamily::Machine: return gen_machine(spec);
    case BenchmarkFamily::Epidemic: return gen_epidemic(spec);
    case BenchmarkFamily::Fisheries: return gen_fisheries(spec);
    case BenchmarkFamily::Routing: {
      RoutingParams p = spec.n == 2 ? reference_routing_params()
                                    : sample_routing_params(spec.n, spec.horizon, spec.seed);
      p.horizon = spec.horizon;
      return gen_routing(p, spec.eps, spec.delta);
    }
  }
  throw Error(ErrorKind::InvalidInstance, "unknown benchmark family");
}

std::vector<double> sample_initial_state(const FrmabInstance& inst, Rng& rng,
                                         double box_upper) {
  std::vector<double> x(inst.n());
  for (std::size_t i = 0; i < inst.n(); ++i) {
    const double h = inst.projects[i].h_bound;
    x[i] = rng.uniform_open(0.0, std::isfinite(h) ? h : box_upper);
  }
  return x;
}

nlohmann::json to_json(const GeneratedInstance& g) {
  nlohmann::json j = to_json(g.instance);
  j["family_meta"] = g.meta.to_json();
  return j;
}

GeneratedInstance generated_from_json(const nlohmann::json& j) {
  GeneratedInstance g;
  g.instance = instance_from_json(j);
  if (j.contains("family_meta") && j.at("family_meta").is_object()) {
    for (const auto& [key, value] : j.at("family_meta").items()) {
      if (key == "family") {
        g.meta.family = value.get<std::string>();
      } else if (value.is_array()) {
        g.meta.params.push_back({key, value.get<std::vector<double>>()});
      }
    }
  }
  return g;
}

}  // namespace frmab
