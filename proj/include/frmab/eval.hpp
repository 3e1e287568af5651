#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "frmab/dataset.hpp"
#include "frmab/dynamics.hpp"
#include "frmab/pmp.hpp"
#include "frmab/shooting.hpp"
#include "frmab/tree.hpp"
#include "json.hpp"

namespace frmab {

// Feedback policy (x, t) -> u.
using Policy = std::function<Control(std::span<const double> x, double t)>;

// Each returned Policy owns its scratch buffer; build one per thread.
Policy tree_policy(const ObliquePolicyTree& tree);
// Piecewise-constant replay of a solved trajectory's segment controls.
Policy schedule_policy(const PiecewiseTrajectory& traj);

// max(delta, T / 10000).
double default_dt_eval(const FrmabInstance& inst);

// Fraction of samples whose predicted control equals the stored label.
// Throws Error(EmptyDataset) on an empty set.
double accuracy(const ObliquePolicyTree& tree, const LabeledDataset& heldout);

struct ClosedLoopPoint {
  double t = 0.0;
  std::vector<double> x;
  Control u;  // held over [t, next t); empty at T
};

// Zero-order hold simulation: the policy is queried at the start of each
// dt_eval step and its control held while state and reward advance in closed
// form. The last step is shortened to land on T.
double closed_loop_objective(const FrmabInstance& inst, std::span<const double> x0,
                             const Policy& policy, double dt_eval,
                             std::vector<ClosedLoopPoint>* trace = nullptr);

struct EvalConfig {
  int n_instances = 100;
  std::uint64_t seed = 0;
  double dt_eval = 0.0;  // <= 0 selects default_dt_eval
  double box_upper = 10.0;
  int jobs = 1;
  double max_failure_fraction = 0.05;
  // Inference queries timed per instance.
  int inference_repeats = 2000;
  std::function<void(const std::string&)> log;  // nullptr writes to stderr
};

struct InstanceResult {
  std::vector<double> x0;
  double j_opt = 0.0;
  double j_policy = 0.0;
  double subopt = 0.0;
  double solve_seconds = 0.0;
  bool ok = false;
  std::string error;
};

struct SuboptimalityResult {
  double max_subopt = 0.0;
  double mean_subopt = 0.0;
  std::vector<InstanceResult> instances;
  std::size_t evaluated = 0;
  std::size_t solver_failures = 0;
  std::size_t skipped_zero_objective = 0;
};

// (J_opt - J_policy) / |J_policy| over fresh initial states drawn from stream
// j of cfg.seed. Values in [-1e-9, 0) are clamped to 0. Instances with
// |J_policy| < 1e-12 are skipped with a warning; if all are, throws
// Error(DivisionByZero).
SuboptimalityResult max_suboptimality(const FrmabInstance& inst,
                                      const std::function<Policy()>& make_policy,
                                      const EvalConfig& cfg);
SuboptimalityResult max_suboptimality(const FrmabInstance& inst,
                                      const ObliquePolicyTree& tree, const EvalConfig& cfg);

struct SpeedupResult {
  double ratio = 0.0;
  double solver_mean_s = 0.0;
  double inference_mean_s = 0.0;
};

// Mean wall-clock solve time over mean single-query inference time (feature
// computation included), both on the same initial states. Always serial.
SpeedupResult speedup(const FrmabInstance& inst, const ObliquePolicyTree& tree,
                      const EvalConfig& cfg);

// Mean time of one tree query at each x0, over cfg.inference_repeats queries
// spread along [0, T].
double inference_seconds(const FrmabInstance& inst, const ObliquePolicyTree& tree,
                         std::span<const std::vector<double>> states, int repeats);

// Held-out samples: fresh solves from stream j of `seed`, extracted and
// augmented with the tree's plan, then subsampled to `points` rows.
LabeledDataset heldout_dataset(const FrmabInstance& inst, const ObliquePolicyTree& tree,
                               int points, std::uint64_t seed, int per_segment = 10,
                               int jobs = 1, double box_upper = 10.0);

struct EvalReport {
  int n = 0;
  double horizon = 0.0;
  double accuracy = 0.0;
  double max_subopt = 0.0;
  double mean_subopt = 0.0;
  double speedup = 0.0;
  std::size_t n_test_points = 0;
  std::size_t n_test_instances = 0;
  std::size_t solver_failures = 0;
  std::size_t skipped_zero_objective = 0;
  double training_seconds = 0.0;
  double solver_mean_s = 0.0;
  double inference_mean_s = 0.0;

  // Timing fields live under "timing" so they can be dropped when comparing
  // reports across runs.
  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

// Fixed-width rows: n, T, training time, speed-up, accuracy, max suboptimality.
std::string table_header();
std::string table_row(const EvalReport& r);

// accuracy + max_suboptimality + speedup. Solve times from the
// suboptimality pass are reused when it ran serially.
EvalReport evaluate(const FrmabInstance& inst, const ObliquePolicyTree& tree,
                    const LabeledDataset& heldout, const EvalConfig& cfg);

}  // namespace frmab
