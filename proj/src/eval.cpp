#include "frmab/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>

#include "frmab/benchmarks.hpp"
#include "frmab/errors.hpp"
#include "frmab/io.hpp"
#include "frmab/parallel.hpp"
#include "frmab/rng.hpp"

namespace frmab {

namespace {

constexpr double kBoundSlack = 1e-9;
constexpr double kNoiseFloor = 1e-9;
constexpr double kZeroObjective = 1e-12;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void emit(const EvalConfig& cfg, const std::string& line) {
  if (cfg.log) {
    cfg.log(line);
  } else {
    std::cerr << line << '\n';
  }
}

void check_control(const FrmabInstance& inst, const Control& u) {
  if (u.size() != inst.n()) throw Error(ErrorKind::DimensionMismatch, "policy control length differs from n");
  int total = 0;
  for (int v : u) {
    if (v != 0 && v != 1) throw Error(ErrorKind::InfeasibleControl, "policy returned a non-binary control");
    total += v;
  }
  if (total > inst.budget) throw Error(ErrorKind::InfeasibleControl, "policy exceeded the budget");
}

}  // namespace

Policy tree_policy(const ObliquePolicyTree& tree) {
  return [&tree, scratch = std::vector<double>()](std::span<const double> x,
                                                  double t) mutable {
    return tree.predict_state(t, x, scratch);
  };
}

Policy schedule_policy(const PiecewiseTrajectory& traj) {
  return [&traj](std::span<const double>, double t) {
    const auto it = std::upper_bound(
        traj.segments.begin(), traj.segments.end(), t,
        [](double v, const Segment& s) { return v < s.t_start; });
    return it == traj.segments.begin() ? traj.segments.front().control
                                       : std::prev(it)->control;
  };
}

double default_dt_eval(const FrmabInstance& inst) {
  return std::max(inst.delta, inst.horizon / 10000.0);
}

double accuracy(const ObliquePolicyTree& tree, const LabeledDataset& heldout) {
  if (heldout.samples.empty()) throw Error(ErrorKind::EmptyDataset, "held-out set is empty");
  std::size_t hits = 0;
  for (const auto& s : heldout.samples) hits += tree.predict(s.features) == s.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(heldout.samples.size());
}

double closed_loop_objective(const FrmabInstance& inst, std::span<const double> x0,
                             const Policy& policy, double dt_eval,
                             std::vector<ClosedLoopPoint>* trace) {
  if (!(dt_eval > 0.0)) throw Error(ErrorKind::InvalidInstance, "dt_eval must be positive");
  check_initial_state(inst, x0);
  const std::size_t n = inst.n();
  std::vector<double> x(x0.begin(), x0.end());
  const auto steps = static_cast<std::size_t>(std::ceil(inst.horizon / dt_eval - 1e-9));
  double objective = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt_eval;
    const double t_next = k + 1 == steps ? inst.horizon : static_cast<double>(k + 1) * dt_eval;
    const double h = t_next - t;
    const Control u = policy(x, t);
    check_control(inst, u);
    if (trace) trace->push_back({t, x, u});
    for (std::size_t i = 0; i < n; ++i) {
      const auto& d = inst.projects[i];
      objective += reward_integral(d, x[i], u[i], h);
      x[i] = propagate(d, x[i], 0.0, u[i], h).x;
      if (!(x[i] > -kBoundSlack && x[i] < d.h_bound + kBoundSlack)) {
        throw Error(ErrorKind::StateBoundViolation,
                    "closed loop x_" + std::to_string(i + 1) + " left (0, H) at t = " +
                        io::format_double(t_next));
      }
    }
  }
  if (trace) trace->push_back({inst.horizon, x, {}});
  return objective;
}

SuboptimalityResult max_suboptimality(const FrmabInstance& inst,
                                      const std::function<Policy()>& make_policy,
                                      const EvalConfig& cfg) {
  if (cfg.n_instances < 1) throw Error(ErrorKind::InvalidInstance, "n_instances must be >= 1");
  validate(inst);
  const double dt = cfg.dt_eval > 0.0 ? cfg.dt_eval : default_dt_eval(inst);
  SuboptimalityResult out;
  out.instances.resize(static_cast<std::size_t>(cfg.n_instances));

  parallel_for(out.instances.size(), cfg.jobs, [&](std::size_t j) {
    auto& r = out.instances[j];
    Rng rng(cfg.seed, j);
    r.x0 = sample_initial_state(inst, rng, cfg.box_upper);
    SolveOptions options;
    options.seed = Rng::mix(cfg.seed ^ Rng::mix(j));
    try {
      const auto start = Clock::now();
      const PiecewiseTrajectory traj = solve(inst, r.x0, options);
      r.solve_seconds = seconds_since(start);
      r.j_opt = traj.objective;
    } catch (const Error& e) {
      if (!e.is_numerical()) throw;
      r.error = e.what();
      return;
    }
    const Policy policy = make_policy();
    r.j_policy = closed_loop_objective(inst, r.x0, policy, dt);
    r.ok = true;
  });

  double sum = 0.0;
  bool any = false;
  for (std::size_t j = 0; j < out.instances.size(); ++j) {
    auto& r = out.instances[j];
    if (!r.error.empty()) {
      ++out.solver_failures;
      emit(cfg, "test instance " + std::to_string(j) + " solve failed: " + r.error);
      continue;
    }
    if (std::abs(r.j_policy) < kZeroObjective) {
      ++out.skipped_zero_objective;
      r.ok = false;
      r.error = "policy objective is zero";
      emit(cfg, "test instance " + std::to_string(j) +
                    " skipped: |J_policy| < 1e-12, suboptimality undefined");
      continue;
    }
    r.subopt = (r.j_opt - r.j_policy) / std::abs(r.j_policy);
    if (r.subopt < 0.0 && r.subopt >= -kNoiseFloor) r.subopt = 0.0;
    out.max_subopt = any ? std::max(out.max_subopt, r.subopt) : r.subopt;
    any = true;
    sum += r.subopt;
    ++out.evaluated;
  }
  const double failed = static_cast<double>(out.solver_failures) / out.instances.size();
  if (failed > cfg.max_failure_fraction) {
    throw Error(ErrorKind::TooManyFailures, std::to_string(out.solver_failures) + " of " +
                                                std::to_string(out.instances.size()) +
                                                " test solves failed");
  }
  if (!any) {
    throw Error(ErrorKind::DivisionByZero, "every evaluated policy objective was zero");
  }
  out.mean_subopt = sum / static_cast<double>(out.evaluated);
  return out;
}

SuboptimalityResult max_suboptimality(const FrmabInstance& inst,
                                      const ObliquePolicyTree& tree, const EvalConfig& cfg) {
  return max_suboptimality(inst, [&tree] { return tree_policy(tree); }, cfg);
}

double inference_seconds(const FrmabInstance& inst, const ObliquePolicyTree& tree,
                         std::span<const std::vector<double>> states, int repeats) {
  if (states.empty() || repeats < 1) return 0.0;
  std::vector<double> scratch;
  long sink = 0;
  const auto start = Clock::now();
  for (const auto& x : states) {
    for (int q = 0; q < repeats; ++q) {
      const double t = inst.horizon * q / repeats;
      sink += tree.predict_state(t, x, scratch)[0];
    }
  }
  const double elapsed = seconds_since(start);
  volatile long keep = sink;
  (void)keep;
  return elapsed / (static_cast<double>(states.size()) * repeats);
}

SpeedupResult speedup(const FrmabInstance& inst, const ObliquePolicyTree& tree,
                      const EvalConfig& cfg) {
  if (cfg.n_instances < 1) throw Error(ErrorKind::InvalidInstance, "n_instances must be >= 1");
  std::vector<std::vector<double>> states;
  double solve_total = 0.0;
  for (int j = 0; j < cfg.n_instances; ++j) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(j));
    auto x0 = sample_initial_state(inst, rng, cfg.box_upper);
    SolveOptions options;
    options.seed = Rng::mix(cfg.seed ^ Rng::mix(static_cast<std::uint64_t>(j)));
    const auto start = Clock::now();
    try {
      solve(inst, x0, options);
    } catch (const Error& e) {
      if (!e.is_numerical()) throw;
      continue;
    }
    solve_total += seconds_since(start);
    states.push_back(std::move(x0));
  }
  if (states.empty()) throw Error(ErrorKind::TooManyFailures, "no test instance solved");
  SpeedupResult out;
  out.solver_mean_s = solve_total / static_cast<double>(states.size());
  out.inference_mean_s = inference_seconds(inst, tree, states, cfg.inference_repeats);
  out.ratio = out.inference_mean_s > 0.0 ? out.solver_mean_s / out.inference_mean_s : 0.0;
  return out;
}

LabeledDataset heldout_dataset(const FrmabInstance& inst, const ObliquePolicyTree& tree,
                               int points, std::uint64_t seed, int per_segment, int jobs,
                               double box_upper) {
  if (points < 1) throw Error(ErrorKind::EmptyDataset, "held-out size must be positive");
  GenerateConfig cfg;
  // Every trajectory has at least one segment with per_segment grid points.
  cfg.M = (points + per_segment - 1) / per_segment;
  cfg.seed = seed;
  cfg.per_segment = per_segment;
  cfg.jobs = jobs;
  cfg.box_upper = box_upper;
  GenerateResult gen = generate(inst, cfg);
  std::vector<RawSample> raw;
  for (auto& s : gen.solved) {
    raw.insert(raw.end(), std::make_move_iterator(s.samples.begin()),
               std::make_move_iterator(s.samples.end()));
  }
  if (raw.size() > static_cast<std::size_t>(points)) {
    std::vector<std::size_t> order(raw.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed ^ 0x5bd1e995ULL);
    for (std::size_t i = 0; i < static_cast<std::size_t>(points); ++i) {
      std::swap(order[i], order[i + rng.below(order.size() - i)]);
    }
    order.resize(static_cast<std::size_t>(points));
    std::sort(order.begin(), order.end());
    std::vector<RawSample> picked;
    picked.reserve(order.size());
    for (std::size_t i : order) picked.push_back(std::move(raw[i]));
    raw = std::move(picked);
  }
  return augment(raw, tree.plan, tree.class_table);
}

nlohmann::json EvalReport::to_json() const {
  return {{"n", n},
          {"T", horizon},
          {"accuracy", accuracy},
          {"max_subopt", max_subopt},
          {"mean_subopt", mean_subopt},
          {"n_test_points", n_test_points},
          {"n_test_instances", n_test_instances},
          {"solver_failures", solver_failures},
          {"skipped_zero_objective", skipped_zero_objective},
          {"timing",
           {{"speedup", speedup},
            {"training_s", training_seconds},
            {"solver_mean_s", solver_mean_s},
            {"inference_mean_s", inference_mean_s}}}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.n = j.at("n").get<int>();
    r.horizon = j.at("T").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    r.max_subopt = j.at("max_subopt").get<double>();
    r.mean_subopt = j.at("mean_subopt").get<double>();
    r.n_test_points = j.at("n_test_points").get<std::size_t>();
    r.n_test_instances = j.at("n_test_instances").get<std::size_t>();
    r.solver_failures = j.value("solver_failures", std::size_t{0});
    r.skipped_zero_objective = j.value("skipped_zero_objective", std::size_t{0});
    const auto& t = j.at("timing");
    r.speedup = t.at("speedup").get<double>();
    r.training_seconds = t.at("training_s").get<double>();
    r.solver_mean_s = t.at("solver_mean_s").get<double>();
    r.inference_mean_s = t.at("inference_mean_s").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, std::string("malformed eval report: ") + e.what());
  }
  return r;
}

std::string table_header() {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%4s %6s %14s %12s %10s %18s", "n", "T", "train time (s)",
                "speed-up", "accuracy", "max suboptimality");
  return buf;
}

std::string table_row(const EvalReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%4d %6g %14.2f %12.3g %10.4f %18.4f", r.n, r.horizon,
                r.training_seconds, r.speedup, r.accuracy, r.max_subopt);
  return buf;
}

EvalReport evaluate(const FrmabInstance& inst, const ObliquePolicyTree& tree,
                    const LabeledDataset& heldout, const EvalConfig& cfg) {
  EvalReport r;
  r.n = static_cast<int>(inst.n());
  r.horizon = inst.horizon;
  r.accuracy = accuracy(tree, heldout);
  r.n_test_points = heldout.samples.size();
  const SuboptimalityResult sub = max_suboptimality(inst, tree, cfg);
  r.max_subopt = sub.max_subopt;
  r.mean_subopt = sub.mean_subopt;
  r.n_test_instances = sub.evaluated;
  r.solver_failures = sub.solver_failures;
  r.skipped_zero_objective = sub.skipped_zero_objective;
  if (cfg.jobs <= 1) {
    std::vector<std::vector<double>> states;
    double total = 0.0;
    for (const auto& inst_result : sub.instances) {
      if (inst_result.solve_seconds <= 0.0) continue;
      total += inst_result.solve_seconds;
      states.push_back(inst_result.x0);
    }
    r.solver_mean_s = states.empty() ? 0.0 : total / static_cast<double>(states.size());
    r.inference_mean_s = inference_seconds(inst, tree, states, cfg.inference_repeats);
    r.speedup = r.inference_mean_s > 0.0 ? r.solver_mean_s / r.inference_mean_s : 0.0;
  } else {
    const SpeedupResult s = speedup(inst, tree, cfg);
    r.speedup = s.ratio;
    r.solver_mean_s = s.solver_mean_s;
    r.inference_mean_s = s.inference_mean_s;
  }
  return r;
}

}  // namespace frmab
