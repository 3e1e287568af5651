#include <cmath>

#include "doctest.h"
#include "frmab/errors.hpp"
#include "frmab/eval.hpp"
#include "helpers.hpp"

using namespace frmab;

namespace {

ObliquePolicyTree constant_tree(const FrmabInstance& inst, const Control& u) {
  ObliquePolicyTree tree;
  tree.plan.family = inst.family();
  tree.feature_names = tree.plan.feature_names(inst.n());
  tree.class_table = ClassTable(std::vector<Control>{u});
  tree.means.assign(tree.feature_names.size(), 0.0);
  tree.stds.assign(tree.feature_names.size(), 1.0);
  tree.nodes.push_back(TreeNode{});
  return tree;
}

}  // namespace

TEST_CASE("replaying the solver's schedule reproduces its objective") {
  for (auto family : test::families()) {
    const GeneratedInstance g = test::make(family, 4, 12);
    Rng rng(4);
    const auto x0 = sample_initial_state(g.instance, rng);
    const PiecewiseTrajectory traj = solve(g.instance, x0);
    const double j = closed_loop_objective(g.instance, x0, schedule_policy(traj), g.instance.delta);
    CAPTURE(to_string(family));
    CHECK(std::abs(j - traj.objective) <= 1e-6 * std::abs(traj.objective));
  }
}

TEST_CASE("analytic routing policy matches the shooting optimum") {
  const RoutingParams p = reference_routing_params();
  const GeneratedInstance g = gen_routing(p);
  const std::vector<double> x0{1.5, 0.5};
  const double j_opt = solve(g.instance, x0).objective;
  const Policy analytic = [&p](std::span<const double>, double t) { return analytic_routing_policy(p, t); };
  const double j = closed_loop_objective(g.instance, x0, analytic, default_dt_eval(g.instance));
  CHECK(std::abs(j - j_opt) <= 1e-3 * std::abs(j_opt));
}

TEST_CASE("zero reward gives zero objective for every policy") {
  FrmabInstance inst = test::make(BenchmarkFamily::Epidemic, 3, 2).instance;
  for (auto& d : inst.projects) d.r0 = d.r1 = d.c0 = d.c1 = 0.0;
  const std::vector<double> x0{0.2, 0.3, 0.1};
  for (const Control& u : {Control{0, 0, 0}, Control{1, 0, 0}, Control{0, 0, 1}}) {
    const Policy fixed = [u](std::span<const double>, double) { return u; };
    CHECK(closed_loop_objective(inst, x0, fixed, 0.01) == 0.0);
  }
}

TEST_CASE("halving dt_eval barely moves the objective") {
  const GeneratedInstance g = test::make(BenchmarkFamily::Fisheries, 4, 3);
  Rng rng(8);
  const auto x0 = sample_initial_state(g.instance, rng);
  const PiecewiseTrajectory traj = solve(g.instance, x0);
  const Policy replay = schedule_policy(traj);
  const double dt = default_dt_eval(g.instance);
  const double a = closed_loop_objective(g.instance, x0, replay, dt);
  const double b = closed_loop_objective(g.instance, x0, replay, dt / 2);
  CHECK(std::abs(a - b) <= 1e-4 * std::abs(a));
}

TEST_CASE("no policy beats the optimum") {
  const GeneratedInstance g = test::make(BenchmarkFamily::Machine, 5, 6);
  Rng rng(2);
  const auto x0 = sample_initial_state(g.instance, rng);
  const double j_opt = solve(g.instance, x0).objective;
  Rng pick(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Policy random = [&pick](std::span<const double> x, double) {
      Control u(x.size(), 0);
      u[pick.below(x.size())] = 1;
      return u;
    };
    CHECK(closed_loop_objective(g.instance, x0, random, 0.001) <= j_opt + 1e-6 * std::abs(j_opt));
  }
}

TEST_CASE("closed loop rejects infeasible controls and bad steps") {
  const GeneratedInstance g = test::make(BenchmarkFamily::Machine, 3, 1);
  const std::vector<double> x0{0.1, 0.2, 0.3};
  const Policy greedy = [](std::span<const double> x, double) { return Control(x.size(), 1); };
  CHECK_THROWS_AS(closed_loop_objective(g.instance, x0, greedy, 0.01), Error);
  const Policy idle = [](std::span<const double> x, double) { return Control(x.size(), 0); };
  CHECK_THROWS_AS(closed_loop_objective(g.instance, x0, idle, 0.0), Error);
}

TEST_CASE("trace records one point per step plus the end") {
  const GeneratedInstance g = test::make(BenchmarkFamily::Machine, 3, 1);
  const Policy idle = [](std::span<const double> x, double) { return Control(x.size(), 0); };
  std::vector<ClosedLoopPoint> trace;
  closed_loop_objective(g.instance, std::vector<double>{0.1, 0.2, 0.3}, idle, 0.1, &trace);
  REQUIRE(trace.size() == 11);
  CHECK(trace.back().t == g.instance.horizon);
  CHECK(trace.back().u.empty());
}

TEST_CASE("suboptimality of the optimal schedule is zero") {
  const GeneratedInstance g = test::make(BenchmarkFamily::Epidemic, 4, 5);
  EvalConfig cfg;
  cfg.n_instances = 5;
  cfg.seed = 3;
  cfg.dt_eval = g.instance.delta;
  // each x0 gets the schedule of its own solve
  const SuboptimalityResult r = max_suboptimality(
      g.instance,
      [&g]() -> Policy {
        auto holder = std::make_shared<PiecewiseTrajectory>();
        auto inst = g.instance;
        return [holder, inst](std::span<const double> x, double t) {
          if (t == 0.0) *holder = solve(inst, x);
          return schedule_policy(*holder)(x, t);
        };
      },
      cfg);
  CHECK(r.evaluated == 5);
  CHECK(r.max_subopt <= 1e-6);
  CHECK(r.max_subopt >= r.mean_subopt);
  CHECK(r.mean_subopt >= 0.0);
}

TEST_CASE("a constant tree is scored against the optimum") {
  const GeneratedInstance g = test::make(BenchmarkFamily::Machine, 4, 7);
  const ObliquePolicyTree tree = constant_tree(g.instance, Control{0, 0, 0, 0});
  EvalConfig cfg;
  cfg.n_instances = 4;
  cfg.seed = 1;
  const SuboptimalityResult r = max_suboptimality(g.instance, tree, cfg);
  CHECK(r.evaluated == 4);
  CHECK(r.max_subopt > 0.0);
  for (const auto& inst : r.instances) CHECK(inst.j_policy <= inst.j_opt + 1e-6 * std::abs(inst.j_opt));
}

TEST_CASE("accuracy of an empty held-out set is an error") {
  const GeneratedInstance g = test::make(BenchmarkFamily::Machine, 3, 7);
  const ObliquePolicyTree tree = constant_tree(g.instance, Control{0, 0, 0});
  LabeledDataset empty;
  try {
    accuracy(tree, empty);
    FAIL("expected EmptyDataset");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyDataset);
  }
}

TEST_CASE("report JSON keeps timing apart and round trips") {
  EvalReport r;
  r.n = 5;
  r.horizon = 1.0;
  r.accuracy = 0.97;
  r.max_subopt = 0.01;
  r.mean_subopt = 0.001;
  r.speedup = 1e5;
  r.n_test_points = 200;
  r.n_test_instances = 30;
  const nlohmann::json j = r.to_json();
  CHECK(j.contains("timing"));
  CHECK(j["timing"].contains("speedup"));
  CHECK_FALSE(j.contains("speedup"));
  CHECK(EvalReport::from_json(j).to_json() == j);
  const std::string header = table_header();
  CHECK(header.find("speed-up") < header.find("accuracy"));
  CHECK(header.find("accuracy") < header.find("max suboptimality"));
}
