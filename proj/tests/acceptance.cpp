// Acceptance suite: prints one PASS/FAIL line per criterion, exits nonzero if
// any criterion fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "frmab/benchmarks.hpp"
#include "frmab/cli.hpp"
#include "frmab/dataset.hpp"
#include "frmab/errors.hpp"
#include "frmab/eval.hpp"
#include "frmab/io.hpp"
#include "frmab/pmp.hpp"
#include "frmab/shooting.hpp"
#include "frmab/tree.hpp"

using namespace frmab;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

const std::vector<BenchmarkFamily> kAllFamilies{BenchmarkFamily::Machine, BenchmarkFamily::Epidemic,
                                                BenchmarkFamily::Fisheries, BenchmarkFamily::Routing};
const std::vector<BenchmarkFamily> kTableFamilies{BenchmarkFamily::Machine, BenchmarkFamily::Epidemic,
                                                  BenchmarkFamily::Fisheries};

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

GeneratedInstance make(BenchmarkFamily family, int n, std::uint64_t seed, double horizon = 1.0) {
  BenchmarkSpec spec;
  spec.family = family;
  spec.n = n;
  spec.horizon = horizon;
  spec.seed = seed;
  return generate_benchmark(spec);
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("frmab_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "frmab");
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (out) *out = o.str();
  if (code != 0) std::cerr << e.str();
  return code;
}

// --- 1 ----------------------------------------------------------------

Outcome ac1_routing_oracle() {
  const auto t0 = Clock::now();
  const RoutingParams p = reference_routing_params();
  const GeneratedInstance g = gen_routing(p);
  const PiecewiseTrajectory traj = solve(g.instance, std::vector<double>{1.0, 1.0});
  const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  const double target = p.horizon - std::log(9.0);
  bool shape = traj.segments.size() == 2 && traj.segments[0].control == Control{0, 1} &&
               traj.segments[1].control == Control{1, 0};
  const double ts = traj.segments.size() > 1 ? traj.segments[1].t_start : -1.0;
  double index_err = 0.0;
  for (const auto& pt : traj.grid) {
    const auto gamma = index_values(g.instance, pt.x, pt.y);
    const auto exact = routing_index(p, pt.t);
    for (std::size_t i = 0; i < 2; ++i) index_err = std::max(index_err, std::abs(gamma[i] - exact[i]));
  }
  const bool pass = shape && std::abs(ts - target) <= 2 * g.instance.delta && index_err <= 1e-6 &&
                    seconds < 10.0;
  return {pass, fmt("segments=%zu switch=%.6f (target %.6f) max index error=%.2e runtime=%.2fs",
                    traj.segments.size(), ts, target, index_err, seconds)};
}

// --- 2 ----------------------------------------------------------------

Outcome ac2_transversality() {
  bool pass = true;
  std::string detail;
  for (auto family : kAllFamilies) {
    int ok = 0, max_iter = 0;
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
      const GeneratedInstance g = make(family, 5, 1000 + s);
      Rng rng(Rng::mix(s ^ 0xac2), 0);
      const auto x0 = sample_initial_state(g.instance, rng);
      try {
        const PiecewiseTrajectory traj = solve(g.instance, x0);
        const double r = inf_norm(traj.grid.back().y);
        worst = std::max(worst, r);
        max_iter = std::max(max_iter, traj.info.iterations);
        if (r <= 1e-5 && traj.info.iterations <= 200 * (1 + 5)) ++ok;
      } catch (const Error&) {
      }
    }
    pass = pass && ok >= 48;  // >= 95% of 50
    detail += fmt("%s %d/50 (max |y(T)|=%.1e, max iter=%d); ", to_string(family), ok, worst, max_iter);
  }
  return {pass, detail};
}

// --- 3 ----------------------------------------------------------------

struct ArmDraw {
  ProjectDynamics d;
  double x, y;
  int u;
  double dt;
};

ArmDraw draw_arm(BenchmarkFamily family, Rng& rng) {
  const GeneratedInstance g = make(family, 5, rng.next());
  ArmDraw a;
  a.d = g.instance.projects[rng.below(5)];
  const double h = std::isfinite(a.d.h_bound) ? a.d.h_bound : 10.0;
  a.x = rng.uniform_open(0.0, h);
  a.y = rng.uniform(-5.0, 5.0);
  a.u = static_cast<int>(rng.below(2));
  a.dt = rng.uniform(0.0, 0.1);
  return a;
}

Outcome ac3_oracle_equivalence() {
  double worst_rk4 = 0.0, worst_semi = 0.0;
  for (auto family : kAllFamilies) {
    Rng rng(Rng::mix(0xac3), static_cast<std::uint64_t>(family));
    for (int k = 0; k < 1000; ++k) {
      const ArmDraw a = draw_arm(family, rng);
      const ArmState exact = propagate(a.d, a.x, a.y, a.u, a.dt);
      const ArmState ref = rk4_oracle(a.d, a.x, a.y, a.u, a.dt, 1e-6);
      worst_rk4 = std::max({worst_rk4, std::abs(exact.x - ref.x), std::abs(exact.y - ref.y)});
      const double split = rng.uniform(0.0, a.dt);
      const ArmState half = propagate(a.d, a.x, a.y, a.u, split);
      const ArmState two = propagate(a.d, half.x, half.y, a.u, a.dt - split);
      worst_semi = std::max({worst_semi, std::abs(exact.x - two.x), std::abs(exact.y - two.y)});
    }
  }
  return {worst_rk4 <= 1e-8 && worst_semi <= 1e-10,
          fmt("max |closed form - RK4|=%.2e, max semigroup gap=%.2e over 4x1000 draws", worst_rk4, worst_semi)};
}

// --- 4 ----------------------------------------------------------------

Outcome ac4_bound_invariants() {
  constexpr double kSlack = 1e-9;
  std::size_t violations = 0, checks = 0;
  for (auto family : kAllFamilies) {
    Rng rng(Rng::mix(0xac4), static_cast<std::uint64_t>(family));
    for (int r = 0; r < 10000; ++r) {
      const FrmabInstance inst = make(family, 5, rng.next()).instance;
      auto x = sample_initial_state(inst, rng);
      // random feasible controls on random segments; each arm is monotone
      // within a segment, so checking segment ends covers the whole path
      const int segments = 1 + static_cast<int>(rng.below(20));
      double t = 0.0;
      for (int s = 0; s < segments; ++s) {
        const double dt = s + 1 == segments ? inst.horizon - t : rng.uniform(0.0, inst.horizon - t);
        Control u(5, 0);
        const int on = static_cast<int>(rng.below(inst.budget + 1));
        for (int k = 0; k < on; ++k) u[rng.below(5)] = 1;
        for (std::size_t i = 0; i < 5; ++i) {
          x[i] = propagate(inst.projects[i], x[i], 0.0, u[i], dt).x;
          ++checks;
          if (!(x[i] > -kSlack && x[i] < inst.projects[i].h_bound + kSlack)) ++violations;
        }
        t += dt;
      }
    }
  }
  return {violations == 0, fmt("%zu violations in %zu checks (4 families x 10000 rollouts)", violations, checks)};
}

// --- 5 ----------------------------------------------------------------

// Enumerates the LP's binary vertices; ties go to the lowest indices.
Control lp_brute_force(const std::vector<double>& gamma, int m) {
  const std::size_t n = gamma.size();
  Control best(n, 0);
  double best_value = 0.0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    if (std::popcount(mask) > m) continue;
    Control u(n, 0);
    double value = 0.0;
    bool useless = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) {
        u[i] = 1;
        value += gamma[i];
        useless = useless || !(gamma[i] > 0.0);
      }
    }
    if (useless) continue;
    if (value > best_value || (value == best_value && u > best)) {
      best = u;
      best_value = value;
    }
  }
  return best;
}

Outcome ac5_lp_equivalence() {
  Rng rng(Rng::mix(0xac5));
  int mismatches = 0;
  for (int k = 0; k < 500; ++k) {
    const std::size_t n = 2 + rng.below(5);
    const int m = 1 + static_cast<int>(rng.below(n - 1));
    std::vector<double> gamma(n);
    for (auto& g : gamma) {
      g = k % 2 ? static_cast<double>(rng.below(5)) - 2.0 : rng.uniform(-1.0, 1.0);
    }
    if (select_control(gamma, m) != lp_brute_force(gamma, m)) ++mismatches;
  }
  return {mismatches == 0, fmt("%d mismatches on 500 draws", mismatches)};
}

// --- 6 ----------------------------------------------------------------

Outcome ac6_pmp_pointwise() {
  std::size_t violations = 0, points = 0;
  int solved = 0;
  for (auto family : kAllFamilies) {
    for (int n : {3, 4, 6}) {
      for (std::uint64_t s = 0; s < 3; ++s) {
        const GeneratedInstance g = make(family, n, 600 + s);
        Rng rng(Rng::mix(0xac6 ^ s), static_cast<std::uint64_t>(n));
        const PiecewiseTrajectory traj = solve(g.instance, sample_initial_state(g.instance, rng));
        ++solved;
        for (std::size_t k = 0; k < traj.grid.size(); k += 100) {
          const auto& pt = traj.grid[k];
          const double h_star = hamiltonian(g.instance, pt.x, pt.y, traj.controls[k]);
          double best = -INFINITY;
          for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
            if (std::popcount(mask) > g.instance.budget) continue;
            Control v(n);
            for (int i = 0; i < n; ++i) v[i] = mask >> i & 1;
            best = std::max(best, hamiltonian(g.instance, pt.x, pt.y, v));
          }
          ++points;
          if (h_star < best - 1e-12 * (1.0 + std::abs(best))) ++violations;
        }
      }
    }
  }
  return {violations == 0, fmt("%zu violations at %zu grid points of %d solved instances", violations, points, solved)};
}

// --- 7 and 9 ------------------------------------------------------------

struct DeskRun {
  bool ran = false;
  std::vector<nlohmann::json> cells;
  std::vector<double> seconds;
};

DeskRun& desk_run() {
  static DeskRun run;
  if (run.ran) return run;
  run.ran = true;
  const fs::path dir = work_dir("desk");
  for (auto family : kTableFamilies) {
    const std::string name = to_string(family);
    io::write_json(dir / (name + ".json"), {{"cells", {{{"family", name}, {"n", 5}, {"T", 1.0}}}},
                                            {"M", 300},
                                            {"points", 200},
                                            {"n_instances", 30}});
    const auto t0 = Clock::now();
    std::string table;
    run_cli({"bench", "--config", (dir / (name + ".json")).string(), "--seed", "1", "--out",
             (dir / name).string()},
            &table);
    run.seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    std::cout << table;
    const auto cells = io::read_json(dir / name / "bench.json").at("cells");
    run.cells.push_back(cells.empty() ? nlohmann::json{{"status", "FAILED"}} : cells[0]);
  }
  return run;
}

Outcome ac7_desk_tables() {
  DeskRun& run = desk_run();
  bool pass = true;
  std::string detail;
  for (std::size_t f = 0; f < kTableFamilies.size(); ++f) {
    const auto& cell = run.cells[f];
    if (cell.value("status", "") != "ok") {
      pass = false;
      detail += fmt("%s FAILED (%s); ", to_string(kTableFamilies[f]), cell.value("error", "").c_str());
      continue;
    }
    const double acc = cell["report"]["accuracy"], sub = cell["report"]["max_subopt"];
    const bool ok = acc >= 0.95 && sub <= 0.05 && run.seconds[f] <= 1800.0;
    pass = pass && ok;
    detail += fmt("%s acc=%.4f max_subopt=%.4g %.0fs%s; ", to_string(kTableFamilies[f]), acc, sub,
                  run.seconds[f], ok ? "" : " (below threshold)");
  }
  return {pass, detail};
}

Outcome ac9_speedup_floor() {
  DeskRun& run = desk_run();
  bool pass = true;
  std::string detail;
  for (std::size_t f = 0; f < kTableFamilies.size(); ++f) {
    const auto& cell = run.cells[f];
    if (cell.value("status", "") != "ok") {
      pass = false;
      detail += fmt("%s FAILED; ", to_string(kTableFamilies[f]));
      continue;
    }
    const double s = cell["report"]["timing"]["speedup"];
    pass = pass && s >= 1e3;
    detail += fmt("%s %.3g; ", to_string(kTableFamilies[f]), s);
  }
  return {pass, detail};
}

// --- 8 ----------------------------------------------------------------

Outcome ac8_routing_imitation() {
  const RoutingParams p = reference_routing_params();
  const GeneratedInstance g = gen_routing(p);
  GenerateConfig gc;
  gc.M = 1000;
  gc.seed = 8;
  GenerateResult gen = generate(g.instance, gc);
  std::vector<RawSample> raw;
  for (auto& s : gen.solved) raw.insert(raw.end(), s.samples.begin(), s.samples.end());
  std::vector<Control> labels;
  for (const auto& r : raw) labels.push_back(r.u);
  const LabeledDataset data = augment(raw, plan_augmentation(labels, g.instance));
  TrainConfig tc;
  tc.seed = 8;
  const ObliquePolicyTree tree = train(data, tc);

  EvalConfig ec;
  ec.n_instances = 100;
  ec.seed = Rng::mix(0xac8);
  const SuboptimalityResult sub = max_suboptimality(g.instance, tree, ec);

  // switch times of the tree's closed loop on the same initial states
  const double target = p.horizon - std::log(9.0);
  const double dt = default_dt_eval(g.instance);
  double worst_gap = 0.0;
  std::size_t odd = 0;
  for (const auto& r : sub.instances) {
    std::vector<ClosedLoopPoint> trace;
    closed_loop_objective(g.instance, r.x0, tree_policy(tree), dt, &trace);
    std::vector<double> switches;
    for (std::size_t k = 1; k + 1 < trace.size(); ++k) {
      if (trace[k].u != trace[k - 1].u) switches.push_back(trace[k].t);
    }
    if (switches.size() != 1 || trace.front().u != Control{0, 1}) {
      ++odd;
      worst_gap = INFINITY;
      continue;
    }
    worst_gap = std::max(worst_gap, std::abs(switches[0] - target));
  }
  const bool pass = sub.max_subopt <= 0.005 && worst_gap <= 0.05;
  return {pass, fmt("tree depth %d, %zu leaves; max subopt=%.3g over %zu instances; max |t_switch - %.4f|=%.4f "
                    "(%zu traces without a single (0,1)->(1,0) switch)",
                    tree.depth, tree.num_leaves(), sub.max_subopt, sub.evaluated, target, worst_gap, odd)};
}

// --- 10 ---------------------------------------------------------------

// Every file in `a` equals its counterpart in `b`, ignoring manifests and the
// timing blocks of reports.
bool same_artifacts(const fs::path& a, const fs::path& b, std::string& diff) {
  auto strip = [](nlohmann::json j) {
    std::function<void(nlohmann::json&)> walk = [&](nlohmann::json& v) {
      if (v.is_object()) {
        v.erase("timing");
        for (auto& [k, c] : v.items()) walk(c);
      } else if (v.is_array()) {
        for (auto& c : v) walk(c);
      }
    };
    walk(j);
    return j.dump();
  };
  for (const auto& entry : fs::directory_iterator(a)) {
    const std::string name = entry.path().filename().string();
    if (name == "manifest.json") continue;
    const fs::path other = b / name;
    if (!fs::exists(other)) {
      diff = name + " missing";
      return false;
    }
    bool equal;
    if (name == "report.json" || name == "bench.json") {
      equal = strip(io::read_json(entry.path())) == strip(io::read_json(other));
    } else if (name == "report.txt" || name == "table.txt") {
      continue;  // training time and speed-up columns are wall-clock
    } else {
      equal = io::read_file(entry.path()) == io::read_file(other);
    }
    if (!equal) {
      diff = name + " differs";
      return false;
    }
  }
  return true;
}

Outcome ac10_determinism() {
  const fs::path dir = work_dir("determinism");
  const std::string root = dir.string();
  io::write_json(dir / "bench.json", {{"cells", {{{"family", "epidemic"}, {"n", 3}, {"T", 1.0}}}},
                                      {"M", 20},
                                      {"points", 50},
                                      {"n_instances", 5},
                                      {"depths", {2, 4}},
                                      {"min_leaf", 5}});
  std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
      {"solve", {"solve", "--family", "fisheries", "--n", "5", "--sample", "--seed", "4", "--plot"}},
      {"generate", {"generate", "--family", "epidemic", "--n", "4", "--M", "30", "--seed", "4"}},
      {"train", {"train", "--data", root + "/generate_a", "--depths", "2,4", "--min-leaf", "5", "--seed", "4"}},
      {"eval", {"eval", "--model", root + "/train_a/model.json", "--n-instances", "5", "--points", "50",
                "--seed", "4", "--plot"}},
      {"bench", {"bench", "--config", root + "/bench.json", "--seed", "4"}},
  };
  std::string detail;
  bool pass = true;
  for (const auto& [name, args] : commands) {
    for (const char* run : {"_a", "_b"}) {
      auto full = args;
      full.push_back("--out");
      full.push_back(root + "/" + name + run);
      if (run_cli(full) != 0) {
        pass = false;
        detail += name + " exited nonzero; ";
      }
    }
    std::string diff;
    if (!same_artifacts(dir / (name + "_a"), dir / (name + "_b"), diff)) {
      pass = false;
      detail += name + ": " + diff + "; ";
    }
  }
  // parallel generation writes the same dataset as serial
  const std::vector<std::string> gen{"generate", "--family", "epidemic", "--n", "4", "--M", "30", "--seed", "4"};
  auto serial = gen, parallel = gen;
  serial.insert(serial.end(), {"--jobs", "1", "--out", root + "/gen_j1"});
  parallel.insert(parallel.end(), {"--jobs", "3", "--out", root + "/gen_j3"});
  std::string diff;
  if (run_cli(serial) != 0 || run_cli(parallel) != 0 || !same_artifacts(dir / "gen_j1", dir / "gen_j3", diff)) {
    pass = false;
    detail += "jobs 1 vs 3: " + diff + "; ";
  }
  // replay from the manifest
  if (run_cli({"replay", "--manifest", root + "/train_a/manifest.json", "--out", root + "/train_r"}) != 0 ||
      !same_artifacts(dir / "train_a", dir / "train_r", diff)) {
    pass = false;
    detail += "replay: " + diff + "; ";
  }
  if (pass) detail = "solve, generate, train, eval, bench repeated byte-identical; jobs 1 == jobs 3; replay identical";
  return {pass, detail};
}

}  // namespace

// Optional arguments select criteria by id, e.g. `acceptance AC1 AC6`.
int main(int argc, char** argv) {
  const std::vector<std::string> only(argv + 1, argv + argc);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"AC1 routing analytic oracle", ac1_routing_oracle},
      {"AC2 transversality", ac2_transversality},
      {"AC3 oracle equivalence", ac3_oracle_equivalence},
      {"AC4 bound invariants", ac4_bound_invariants},
      {"AC5 LP equivalence", ac5_lp_equivalence},
      {"AC6 PMP pointwise", ac6_pmp_pointwise},
      {"AC7 desk-scale tables", ac7_desk_tables},
      {"AC8 routing imitation", ac8_routing_imitation},
      {"AC9 speed-up floor", ac9_speedup_floor},
      {"AC10 determinism", ac10_determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    const std::string id = std::string(name).substr(0, std::string(name).find(' '));
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << fmt("%.1fs", s) << "]"
              << std::endl;
    failures += o.pass ? 0 : 1;
  }
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criteria failed" : "acceptance: all passed")
            << std::endl;
  return failures ? 1 : 0;
}
