#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frmab/dynamics.hpp"
#include "frmab/pmp.hpp"
#include "frmab/rng.hpp"

namespace frmab {

enum class BenchmarkFamily { Machine, Epidemic, Fisheries, Routing };

const char* to_string(BenchmarkFamily family);
// Accepts machine | epidemic | fisheries | routing.
BenchmarkFamily parse_benchmark_family(const std::string& name);

struct BenchmarkSpec {
  BenchmarkFamily family = BenchmarkFamily::Machine;
  int n = 5;
  double horizon = 1.0;
  std::uint64_t seed = 0;
  // <= 0 selects the default max(1, floor(0.3 n)).
  int budget = 0;
  double eps = 1e-5;
  double delta = 1e-4;
};

int default_budget(int n);

// Raw sampled parameters, one entry per project, keyed by their usual
// symbols (h, C, L, R, lambda0, ..., r, H, q, p).
struct FamilyMeta {
  std::string family;
  std::vector<std::pair<std::string, std::vector<double>>> params;

  const std::vector<double>& at(const std::string& key) const;
  nlohmann::json to_json() const;
};

struct GeneratedInstance {
  FrmabInstance instance;
  FamilyMeta meta;
};

// Machine maintenance (affine): x is the cumulative failure probability.
GeneratedInstance gen_machine(const BenchmarkSpec& spec);
// SIS epidemic control (quadratic), stored in maximization form.
GeneratedInstance gen_epidemic(const BenchmarkSpec& spec);
// Logistic fisheries control (quadratic). Draws with r = 0 or r = q are
// resampled.
GeneratedInstance gen_fisheries(const BenchmarkSpec& spec);

// Admission and routing to parallel infinite-server queues.
struct RoutingParams {
  double lambda = 1.0;
  std::vector<double> mu;
  std::vector<double> C;
  double R = 3.0;
  double horizon = 10.0;
};

// mu = (0.5, 1), C = (1, 1.5), lambda = 1, R = 3, T = 10.
RoutingParams reference_routing_params();
// Random routing parameters for sweeps: mu ~ U[0.5, 1.5], C ~ U[1, 2].
RoutingParams sample_routing_params(int n, double horizon, std::uint64_t seed);

GeneratedInstance gen_routing(const RoutingParams& params, double eps = 1e-5,
                              double delta = 1e-4);

// Closed-form costate y_i(t) = -C_i / mu_i (1 - e^{-mu_i (T - t)}).
std::vector<double> routing_costate(const RoutingParams& params, double t);
// Closed-form index gamma_i(t) = R - C_i lambda / mu_i (1 - e^{-mu_i (T - t)}).
IndexVector routing_index(const RoutingParams& params, double t);
// Top-1 selection on the closed-form index.
Control analytic_routing_policy(const RoutingParams& params, double t);

// Dispatches on spec.family; Routing uses the reference parameters when n == 2
// and sampled ones otherwise.
GeneratedInstance generate_benchmark(const BenchmarkSpec& spec);

// Uniform draw from prod (0, H_i); arms with H_i = inf use (0, box_upper).
std::vector<double> sample_initial_state(const FrmabInstance& inst, Rng& rng,
                                         double box_upper = 10.0);

nlohmann::json to_json(const GeneratedInstance& g);
GeneratedInstance generated_from_json(const nlohmann::json& j);

}  // namespace frmab
