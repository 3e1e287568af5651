#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "frmab/benchmarks.hpp"
#include "frmab/cli.hpp"
#include "frmab/dataset.hpp"
#include "frmab/errors.hpp"
#include "frmab/eval.hpp"
#include "frmab/io.hpp"
#include "frmab/parallel.hpp"
#include "frmab/rng.hpp"
#include "frmab/shooting.hpp"
#include "frmab/tree.hpp"

namespace fs = std::filesystem;

namespace frmab::cli {

namespace {

// Salts keep the initial-state streams of each stage disjoint from each other
// and from the per-project streams that generate instance parameters.
constexpr std::uint64_t kSampleSalt = 0x5a3f0c1d2e4b6a79ULL;
constexpr std::uint64_t kDataSalt = 0xda7a5eed00c0ffeeULL;
constexpr std::uint64_t kHeldoutSalt = 0x4e1d0a7ULL;
constexpr std::uint64_t kTestSalt = 0x7e57ab1eULL;

std::uint64_t salted(std::uint64_t seed, std::uint64_t salt) { return Rng::mix(seed ^ salt); }

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

[[noreturn]] void usage(const std::string& what) {
  throw Error(ErrorKind::InvalidInstance, what);
}

std::uint64_t parse_seed(const std::string& text, const char* source) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used, 0);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || text.front() == '-') {
    usage(std::string("invalid seed '") + text + "' in " + source);
  }
  return v;
}

struct InstanceOpts {
  std::string path;
  std::string family;
  int n = 5;
  double horizon = -1.0;
  int budget = 0;
  double eps = 1e-5;
  double delta = 1e-4;
  bool paper_params = false;
  std::string instance_seed;
};

void add_instance_options(CLI::App* app, InstanceOpts& o) {
  app->add_option("--instance", o.path, "Instance JSON file");
  app->add_option("--family", o.family, "machine | epidemic | fisheries | routing");
  app->add_option("--n", o.n, "Number of projects");
  app->add_option("--T", o.horizon, "Horizon (default 1, routing 10)");
  app->add_option("--m", o.budget, "Budget (default floor(0.3 n), at least 1)");
  app->add_option("--eps", o.eps, "Terminal costate tolerance");
  app->add_option("--delta", o.delta, "Grid step");
  app->add_flag("--paper-params", o.paper_params, "Routing: the two-queue example parameters");
  app->add_option("--instance-seed", o.instance_seed, "Seed for instance parameters (default --seed)");
}

GeneratedInstance resolve_instance(const InstanceOpts& o, std::uint64_t seed) {
  if (!o.path.empty()) {
    GeneratedInstance g = generated_from_json(io::read_json(o.path));
    validate(g.instance);
    return g;
  }
  if (o.family.empty()) usage("give --instance or --family");
  const BenchmarkFamily family = parse_benchmark_family(o.family);
  const std::uint64_t iseed =
      o.instance_seed.empty() ? seed : parse_seed(o.instance_seed, "--instance-seed");
  if (family == BenchmarkFamily::Routing && o.paper_params) {
    RoutingParams p = reference_routing_params();
    if (o.horizon > 0.0) p.horizon = o.horizon;
    return gen_routing(p, o.eps, o.delta);
  }
  BenchmarkSpec spec;
  spec.family = family;
  spec.n = o.n;
  spec.horizon = o.horizon > 0.0 ? o.horizon : (family == BenchmarkFamily::Routing ? 10.0 : 1.0);
  spec.seed = iseed;
  spec.budget = o.budget;
  spec.eps = o.eps;
  spec.delta = o.delta;
  return generate_benchmark(spec);
}

nlohmann::json instance_config(const InstanceOpts& o) {
  return {{"instance", o.path}, {"family", o.family}, {"n", o.n},   {"T", o.horizon},
          {"m", o.budget},      {"eps", o.eps},       {"delta", o.delta},
          {"paper_params", o.paper_params}};
}

std::string control_text(const Control& u) {
  std::string s = "(";
  for (std::size_t i = 0; i < u.size(); ++i) s += (i ? "," : "") + std::to_string(u[i]);
  return s + ")";
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::vector<std::string> argv;  // canonical, without program name
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string started_at;
  Clock::time_point start;

  RunManifest manifest(const std::string& command) const {
    RunManifest m;
    m.command = command;
    m.argv = argv;
    m.started_at = started_at;
    m.finished_at = utc_timestamp();
    m.wall_seconds = seconds_since(start);
    m.seeds["seed"] = seed;
    return m;
  }
  std::function<void(const std::string&)> logger() const {
    return [this](const std::string& line) { err << line << '\n'; };
  }
};

// Evenly thinned copy of a long series for plotting.
std::vector<std::size_t> plot_indices(std::size_t count, std::size_t max_points) {
  std::vector<std::size_t> idx;
  if (count == 0) return idx;
  const std::size_t stride = std::max<std::size_t>(1, count / max_points);
  for (std::size_t i = 0; i < count; i += stride) idx.push_back(i);
  if (idx.back() != count - 1) idx.push_back(count - 1);
  return idx;
}

// --- solve -------------------------------------------------------------

struct SolveOpts {
  InstanceOpts inst;
  std::vector<double> x0;
  bool sample = false;
  double box = 10.0;
  std::string out;
  bool plot = false;
};

int cmd_solve(const SolveOpts& o, Context& ctx) {
  const GeneratedInstance g = resolve_instance(o.inst, ctx.seed);
  std::vector<double> x0 = o.x0;
  const std::uint64_t sample_seed = salted(ctx.seed, kSampleSalt);
  if (x0.empty()) {
    if (!o.sample) usage("give --x0 or --sample");
    Rng rng(sample_seed, 0);
    x0 = sample_initial_state(g.instance, rng, o.box);
  }
  SolveOptions options;
  options.seed = ctx.seed;
  const auto t0 = Clock::now();
  const PiecewiseTrajectory traj = solve(g.instance, x0, options);
  const double solve_seconds = seconds_since(t0);

  const fs::path dir = o.out;
  io::write_json(dir / "instance.json", to_json(g));
  std::ostringstream csv;
  write_trajectory_csv(csv, traj);
  io::write_file(dir / "trajectory.csv", csv.str());
  nlohmann::json side = trajectory_sidecar(traj);
  side["x0"] = x0;
  side["instance"] = "instance.json";
  io::write_json(dir / "segments.json", side);
  std::vector<std::string> outputs{"instance.json", "trajectory.csv", "segments.json"};

  if (o.plot) {
    const std::size_t n = g.instance.n();
    LinePlot states{"Optimal state trajectory", "t", "x_i", {}, {}};
    LinePlot controls{"Optimal controls (arm i drawn at offset 1.5 i)", "t", "u_i", {}, {}};
    const auto idx = plot_indices(traj.grid.size(), 1500);
    for (std::size_t i = 0; i < n; ++i) {
      Series sx{"x_" + std::to_string(i + 1), {}, {}, false};
      for (std::size_t k : idx) {
        sx.xs.push_back(traj.grid[k].t);
        sx.ys.push_back(traj.grid[k].x[i]);
      }
      states.series.push_back(std::move(sx));
      Series su{"u_" + std::to_string(i + 1), {}, {}, true};
      for (const auto& seg : traj.segments) {
        su.xs.push_back(seg.t_start);
        su.ys.push_back(1.5 * static_cast<double>(i) + seg.control[i]);
      }
      su.xs.push_back(g.instance.horizon);
      su.ys.push_back(su.ys.back());
      controls.series.push_back(std::move(su));
    }
    for (std::size_t s = 1; s < traj.segments.size(); ++s) {
      states.vlines.push_back(traj.segments[s].t_start);
      controls.vlines.push_back(traj.segments[s].t_start);
    }
    io::write_file(dir / "trajectory.svg", render_svg(states));
    io::write_file(dir / "controls.svg", render_svg(controls));
    outputs.push_back("trajectory.svg");
    outputs.push_back("controls.svg");
  }

  double terminal = 0.0;
  for (double v : traj.grid.back().y) terminal = std::max(terminal, std::abs(v));
  ctx.out << "objective " << io::format_double(traj.objective) << '\n';
  ctx.out << "terminal costate inf-norm " << io::format_double(terminal) << '\n';
  ctx.out << "iterations " << traj.info.iterations << ", restarts " << traj.info.restarts << '\n';
  ctx.out << "segments " << traj.segments.size() << '\n';
  for (const auto& seg : traj.segments) {
    ctx.out << "  [" << io::format_double(seg.t_start) << ", " << io::format_double(seg.t_end)
            << ") u = " << control_text(seg.control) << '\n';
  }

  RunManifest m = ctx.manifest("solve");
  m.config = instance_config(o.inst);
  m.config["x0"] = x0;
  m.config["sample"] = o.sample;
  m.config["box"] = o.box;
  m.seeds["sample_seed"] = sample_seed;
  if (!o.inst.path.empty()) m.inputs.push_back(o.inst.path);
  m.outputs = outputs;
  m.timing["solve_seconds"] = solve_seconds;
  m.write(dir);
  return kOk;
}

// --- generate ----------------------------------------------------------

struct GenerateOpts {
  InstanceOpts inst;
  int M = 3000;
  int per_segment = 10;
  double box = 10.0;
  double max_failure_fraction = 0.05;
  std::string out;
};

int cmd_generate(const GenerateOpts& o, Context& ctx) {
  const GeneratedInstance g = resolve_instance(o.inst, ctx.seed);
  GenerateConfig cfg;
  cfg.M = o.M;
  cfg.seed = salted(ctx.seed, kDataSalt);
  cfg.per_segment = o.per_segment;
  cfg.box_upper = o.box;
  cfg.jobs = ctx.jobs;
  cfg.max_failure_fraction = o.max_failure_fraction;
  cfg.log = ctx.logger();
  const auto t0 = Clock::now();
  GenerateResult result = generate(g.instance, cfg);
  const double gen_seconds = seconds_since(t0);

  std::vector<RawSample> raw;
  for (auto& s : result.solved) {
    raw.insert(raw.end(), std::make_move_iterator(s.samples.begin()),
               std::make_move_iterator(s.samples.end()));
  }
  std::vector<Control> labels;
  labels.reserve(raw.size());
  for (const auto& r : raw) labels.push_back(r.u);
  const AugmentationPlan plan = plan_augmentation(labels, g.instance);
  const LabeledDataset data = augment(raw, plan);

  const fs::path dir = o.out;
  io::write_json(dir / "instance.json", to_json(g));
  write_dataset_csv(dir / "dataset.csv", data);
  nlohmann::json side = dataset_sidecar(data);
  side["seed"] = ctx.seed;
  side["data_seed"] = cfg.seed;
  side["instance"] = "instance.json";
  side["M"] = o.M;
  side["per_segment"] = o.per_segment;
  side["num_solved"] = result.solved.size();
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& [index, error] : result.failures) {
    failures.push_back({{"index", index}, {"error", error}});
  }
  side["failures"] = std::move(failures);
  io::write_json(dir / "dataset.json", side);

  ctx.out << "solved " << result.solved.size() << " of " << o.M << " initial states ("
          << result.failures.size() << " failed)\n";
  ctx.out << "samples " << data.size() << ", classes " << data.class_table.size()
          << ", features " << data.feature_names.size() << '\n';

  RunManifest m = ctx.manifest("generate");
  m.config = instance_config(o.inst);
  m.config["M"] = o.M;
  m.config["per_segment"] = o.per_segment;
  m.config["box"] = o.box;
  m.config["max_failure_fraction"] = o.max_failure_fraction;
  m.seeds["data_seed"] = cfg.seed;
  if (!o.inst.path.empty()) m.inputs.push_back(o.inst.path);
  m.outputs = {"instance.json", "dataset.csv", "dataset.json"};
  m.timing["generate_seconds"] = gen_seconds;
  m.write(dir);
  return kOk;
}

// --- train -------------------------------------------------------------

struct TrainOpts {
  std::string data;
  std::vector<int> depths{5, 10, 15};
  int min_leaf = 20;
  int restarts = 10;
  double val_fraction = 0.2;
  bool axis_only = false;
  std::string out;
};

LabeledDataset load_dataset_dir(const fs::path& dir) {
  return read_dataset(dir / "dataset.csv", io::read_json(dir / "dataset.json"));
}

int cmd_train(const TrainOpts& o, Context& ctx) {
  const fs::path data_dir = o.data;
  const LabeledDataset data = load_dataset_dir(data_dir);
  TrainConfig cfg;
  cfg.depth_grid = o.depths;
  cfg.min_leaf = o.min_leaf;
  cfg.restarts_per_node = o.restarts;
  cfg.val_fraction = o.val_fraction;
  cfg.axis_parallel_only = o.axis_only;
  cfg.seed = ctx.seed;
  cfg.jobs = ctx.jobs;
  const auto t0 = Clock::now();
  const ObliquePolicyTree tree = train(data, cfg);
  const double train_seconds = seconds_since(t0);

  const fs::path dir = o.out;
  save(tree, dir / "model.json");
  std::vector<std::string> outputs{"model.json"};
  if (fs::exists(data_dir / "instance.json")) {
    io::write_file(dir / "instance.json", io::read_file(data_dir / "instance.json"));
    outputs.push_back("instance.json");
  }

  const auto& meta = tree.train_meta;
  for (std::size_t i = 0; i < meta.depth_grid.size(); ++i) {
    char line[96];
    std::snprintf(line, sizeof line, "depth %3d  train accuracy %.4f  validation accuracy %.4f",
                  meta.depth_grid[i], meta.train_accuracy[i], meta.val_accuracy[i]);
    ctx.out << line << '\n';
  }
  ctx.out << "selected depth " << meta.selected_depth << " (tree depth " << tree.depth << ", "
          << tree.num_leaves() << " leaves)\n";

  RunManifest m = ctx.manifest("train");
  m.config = {{"depths", o.depths},
              {"min_leaf", o.min_leaf},
              {"restarts", o.restarts},
              {"val_fraction", o.val_fraction},
              {"axis_only", o.axis_only}};
  m.inputs = {(data_dir / "dataset.csv").string(), (data_dir / "dataset.json").string()};
  m.outputs = outputs;
  m.timing["training_seconds"] = train_seconds;
  m.write(dir);
  return kOk;
}

// --- eval --------------------------------------------------------------

struct EvalOpts {
  std::string model;
  InstanceOpts inst;
  int n_instances = 100;
  int points = 1000;
  int per_segment = 10;
  double box = 10.0;
  double dt_eval = 0.0;
  std::string out;
  bool plot = false;
};

void write_eval_plots(const fs::path& dir, const FrmabInstance& inst,
                      const ObliquePolicyTree& tree, std::span<const double> x0,
                      std::uint64_t seed, double dt, std::vector<std::string>& outputs) {
  SolveOptions options;
  options.seed = seed;
  const PiecewiseTrajectory traj = solve(inst, x0, options);
  std::vector<ClosedLoopPoint> trace;
  closed_loop_objective(inst, x0, tree_policy(tree), dt, &trace);

  const std::size_t n = inst.n();
  LinePlot states{"State trajectories: optimal vs tree policy", "t", "x_i", {}, {}};
  const auto gi = plot_indices(traj.grid.size(), 1000);
  const auto ti = plot_indices(trace.size(), 1000);
  for (std::size_t i = 0; i < n; ++i) {
    Series opt{"x_" + std::to_string(i + 1) + " optimal", {}, {}, false};
    for (std::size_t k : gi) {
      opt.xs.push_back(traj.grid[k].t);
      opt.ys.push_back(traj.grid[k].x[i]);
    }
    Series pol{"x_" + std::to_string(i + 1) + " tree", {}, {}, false};
    for (std::size_t k : ti) {
      pol.xs.push_back(trace[k].t);
      pol.ys.push_back(trace[k].x[i]);
    }
    states.series.push_back(std::move(opt));
    states.series.push_back(std::move(pol));
  }
  for (std::size_t s = 1; s < traj.segments.size(); ++s) states.vlines.push_back(traj.segments[s].t_start);
  io::write_file(dir / "closed_loop.svg", render_svg(states));
  outputs.push_back("closed_loop.svg");

  // Tree decision over (t, x_1) with the other arms held at x0.
  ClassMap map;
  map.title = "Tree control over (t, x_1), other arms at x0";
  map.xlabel = "t";
  map.ylabel = "x_1";
  const double hi = std::isfinite(inst.projects[0].h_bound) ? inst.projects[0].h_bound : 10.0;
  constexpr int kCells = 80;
  for (int j = 0; j < kCells; ++j) map.xs.push_back(inst.horizon * (j + 0.5) / kCells);
  for (int i = 0; i < kCells; ++i) map.ys.push_back(hi * (i + 0.5) / kCells);
  std::vector<double> x(x0.begin(), x0.end()), scratch;
  for (double xv : map.ys) {
    std::vector<int> row;
    x[0] = xv;
    for (double t : map.xs) {
      scratch.resize(tree.plan.num_features(n));
      tree.plan.features_into(t, x, scratch);
      row.push_back(tree.predict_class(scratch));
    }
    map.values.push_back(std::move(row));
  }
  for (const auto& u : tree.class_table.controls()) map.class_names.push_back("u = " + control_text(u));
  io::write_file(dir / "decision_map.svg", render_svg(map));
  outputs.push_back("decision_map.svg");
}

double training_seconds_of(const fs::path& model_path) {
  const fs::path manifest = model_path.parent_path() / "manifest.json";
  if (!fs::exists(manifest)) return 0.0;
  try {
    const RunManifest m = RunManifest::read(manifest);
    return m.timing.value("training_seconds", 0.0);
  } catch (const Error&) {
    return 0.0;
  }
}

int cmd_eval(const EvalOpts& o, Context& ctx) {
  const fs::path model_path = o.model;
  const ObliquePolicyTree tree = load(model_path);
  InstanceOpts inst_opts = o.inst;
  if (inst_opts.path.empty() && inst_opts.family.empty()) {
    const fs::path beside = model_path.parent_path() / "instance.json";
    if (!fs::exists(beside)) usage("no instance.json next to the model; give --instance or --family");
    inst_opts.path = beside.string();
  }
  const GeneratedInstance g = resolve_instance(inst_opts, ctx.seed);
  const std::size_t n = g.instance.n();
  if (tree.plan.num_features(n) != tree.num_features()) {
    throw Error(ErrorKind::DimensionMismatch, "model features do not match an instance with n = " +
                                                  std::to_string(n));
  }

  const std::uint64_t heldout_seed = salted(ctx.seed, kHeldoutSalt);
  const std::uint64_t test_seed = salted(ctx.seed, kTestSalt);
  const LabeledDataset heldout = heldout_dataset(g.instance, tree, o.points, heldout_seed,
                                                 o.per_segment, ctx.jobs, o.box);
  EvalConfig cfg;
  cfg.n_instances = o.n_instances;
  cfg.seed = test_seed;
  cfg.dt_eval = o.dt_eval;
  cfg.box_upper = o.box;
  cfg.jobs = ctx.jobs;
  cfg.log = ctx.logger();
  EvalReport report = evaluate(g.instance, tree, heldout, cfg);
  report.training_seconds = training_seconds_of(model_path);

  const fs::path dir = o.out;
  io::write_json(dir / "report.json", report.to_json());
  const std::string table = table_header() + "\n" + table_row(report) + "\n";
  io::write_file(dir / "report.txt", table);
  std::vector<std::string> outputs{"report.json", "report.txt"};
  if (o.plot) {
    Rng rng(test_seed, 0);
    const auto x0 = sample_initial_state(g.instance, rng, o.box);
    write_eval_plots(dir, g.instance, tree, x0, test_seed,
                     o.dt_eval > 0.0 ? o.dt_eval : default_dt_eval(g.instance), outputs);
  }
  ctx.out << table;

  RunManifest m = ctx.manifest("eval");
  m.config = instance_config(inst_opts);
  m.config["model"] = o.model;
  m.config["n_instances"] = o.n_instances;
  m.config["points"] = o.points;
  m.config["per_segment"] = o.per_segment;
  m.config["box"] = o.box;
  m.config["dt_eval"] = o.dt_eval;
  m.seeds["heldout_seed"] = heldout_seed;
  m.seeds["test_seed"] = test_seed;
  m.inputs = {o.model, inst_opts.path};
  m.outputs = outputs;
  m.timing = report.to_json().at("timing");
  m.write(dir);
  return kOk;
}

// --- bench -------------------------------------------------------------

struct BenchCell {
  std::string family;
  int n = 5;
  double horizon = 1.0;
};

struct BenchOpts {
  std::string config;
  std::vector<std::string> families;
  std::vector<std::string> sizes;  // "n:T"
  int M = 3000;
  int points = 1000;
  int n_instances = 100;
  int per_segment = 10;
  std::vector<int> depths{5, 10, 15};
  int min_leaf = 20;
  int restarts = 10;
  std::string out;
};

std::vector<BenchCell> bench_cells(BenchOpts& o) {
  std::vector<BenchCell> cells;
  if (!o.config.empty()) {
    const nlohmann::json j = io::read_json(o.config);
    try {
      for (const auto& c : j.value("cells", nlohmann::json::array())) {
        cells.push_back({c.at("family").get<std::string>(), c.value("n", 5), c.value("T", 1.0)});
      }
      o.M = j.value("M", o.M);
      o.points = j.value("points", o.points);
      o.n_instances = j.value("n_instances", o.n_instances);
      o.per_segment = j.value("per_segment", o.per_segment);
      o.depths = j.value("depths", o.depths);
      o.min_leaf = j.value("min_leaf", o.min_leaf);
      o.restarts = j.value("restarts", o.restarts);
    } catch (const nlohmann::json::exception& e) {
      usage(std::string("malformed bench config: ") + e.what());
    }
    return cells;
  }
  for (const auto& family : o.families) {
    for (const auto& size : o.sizes) {
      const auto colon = size.find(':');
      if (colon == std::string::npos) usage("sizes are n:T, got '" + size + "'");
      try {
        cells.push_back({family, std::stoi(size.substr(0, colon)), std::stod(size.substr(colon + 1))});
      } catch (const std::exception&) {
        usage("sizes are n:T, got '" + size + "'");
      }
    }
  }
  return cells;
}

int cmd_bench(BenchOpts o, Context& ctx) {
  const std::vector<BenchCell> cells = bench_cells(o);
  const fs::path dir = o.out;
  std::string table = "family    " + table_header() + "\n";
  nlohmann::json rows = nlohmann::json::array();
  ctx.out << table;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& cell = cells[c];
    nlohmann::json row = {{"family", cell.family}, {"n", cell.n}, {"T", cell.horizon}};
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%-10s", cell.family.c_str());
    std::string line;
    try {
      InstanceOpts io_opts;
      io_opts.family = cell.family;
      io_opts.n = cell.n;
      io_opts.horizon = cell.horizon;
      const GeneratedInstance g = resolve_instance(io_opts, ctx.seed);

      GenerateConfig gc;
      gc.M = o.M;
      gc.seed = salted(ctx.seed, kDataSalt);
      gc.per_segment = o.per_segment;
      gc.jobs = ctx.jobs;
      gc.log = ctx.logger();
      GenerateResult gen = generate(g.instance, gc);
      std::vector<RawSample> raw;
      for (auto& s : gen.solved) raw.insert(raw.end(), s.samples.begin(), s.samples.end());
      std::vector<Control> labels;
      for (const auto& r : raw) labels.push_back(r.u);
      const LabeledDataset data = augment(raw, plan_augmentation(labels, g.instance));

      TrainConfig tc;
      tc.depth_grid = o.depths;
      tc.min_leaf = o.min_leaf;
      tc.restarts_per_node = o.restarts;
      tc.seed = ctx.seed;
      tc.jobs = ctx.jobs;
      const auto t0 = Clock::now();
      const ObliquePolicyTree tree = train(data, tc);
      const double train_seconds = seconds_since(t0);

      const LabeledDataset heldout = heldout_dataset(
          g.instance, tree, o.points, salted(ctx.seed, kHeldoutSalt), o.per_segment, ctx.jobs);
      EvalConfig ec;
      ec.n_instances = o.n_instances;
      ec.seed = salted(ctx.seed, kTestSalt);
      ec.jobs = ctx.jobs;
      ec.log = ctx.logger();
      EvalReport report = evaluate(g.instance, tree, heldout, ec);
      report.training_seconds = train_seconds;
      row["status"] = "ok";
      row["report"] = report.to_json();
      row["train_failures"] = gen.failures.size();
      row["depth"] = tree.depth;
      line = prefix + table_row(report);
    } catch (const std::exception& e) {
      row["status"] = "FAILED";
      row["error"] = e.what();
      ctx.err << "cell " << c << " (" << cell.family << ", n = " << cell.n << ", T = "
              << cell.horizon << ") failed: " << e.what() << '\n';
      char buf[128];
      std::snprintf(buf, sizeof buf, "%4d %6g %14s", cell.n, cell.horizon, "FAILED");
      line = prefix + std::string(buf);
    }
    ctx.out << line << '\n';
    table += line + "\n";
    rows.push_back(std::move(row));
  }
  io::write_file(dir / "table.txt", table);
  io::write_json(dir / "bench.json", {{"cells", rows}});

  RunManifest m = ctx.manifest("bench");
  m.config = {{"config", o.config},       {"M", o.M},
              {"points", o.points},       {"n_instances", o.n_instances},
              {"per_segment", o.per_segment}, {"depths", o.depths},
              {"min_leaf", o.min_leaf},   {"restarts", o.restarts}};
  if (!o.config.empty()) m.inputs.push_back(o.config);
  m.outputs = {"table.txt", "bench.json"};
  m.write(dir);
  return kOk;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
             bool allow_replay);

int cmd_replay(const std::string& manifest_path, const std::string& out_override,
               std::ostream& out, std::ostream& err) {
  const RunManifest m = RunManifest::read(manifest_path);
  if (m.argv.empty()) usage("manifest has an empty argv");
  std::vector<std::string> args{"frmab"};
  args.insert(args.end(), m.argv.begin(), m.argv.end());
  if (!out_override.empty()) {
    auto it = std::find(args.begin(), args.end(), "--out");
    if (it != args.end() && std::next(it) != args.end()) {
      *std::next(it) = out_override;
    } else {
      args.push_back("--out");
      args.push_back(out_override);
    }
  }
  return dispatch(args, out, err, false);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
             bool allow_replay) {
  CLI::App app{"Fluid restless bandit solver and decision-tree policy learner", "frmab"};
  app.require_subcommand(1);
  std::string seed_text;
  int jobs = default_jobs();

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed_text, "Seed (falls back to FRMAB_SEED, then 0)");
    sub->add_option("--jobs", jobs, "Worker threads (1 = serial)");
  };

  SolveOpts so;
  auto* solve_cmd = app.add_subcommand("solve", "Solve one instance by shooting");
  add_instance_options(solve_cmd, so.inst);
  solve_cmd->add_option("--x0", so.x0, "Initial state, comma separated")->delimiter(',');
  solve_cmd->add_flag("--sample", so.sample, "Sample x0 uniformly from the state box");
  solve_cmd->add_option("--box", so.box, "Sampling box for unbounded arms");
  solve_cmd->add_option("--out", so.out, "Output directory")->required();
  solve_cmd->add_flag("--plot", so.plot, "Write SVG plots");
  common(solve_cmd);

  GenerateOpts go;
  auto* gen_cmd = app.add_subcommand("generate", "Solve sampled initial states and build a dataset");
  add_instance_options(gen_cmd, go.inst);
  gen_cmd->add_option("--M", go.M, "Number of initial states");
  gen_cmd->add_option("--per-segment", go.per_segment, "Samples per constant-control segment");
  gen_cmd->add_option("--box", go.box, "Sampling box for unbounded arms");
  gen_cmd->add_option("--max-failure-fraction", go.max_failure_fraction);
  gen_cmd->add_option("--out", go.out, "Output directory")->required();
  common(gen_cmd);

  TrainOpts to;
  auto* train_cmd = app.add_subcommand("train", "Train an oblique policy tree");
  train_cmd->add_option("--data", to.data, "Dataset directory from generate")->required();
  train_cmd->add_option("--depths", to.depths, "Depth grid, comma separated")->delimiter(',');
  train_cmd->add_option("--min-leaf", to.min_leaf);
  train_cmd->add_option("--restarts", to.restarts, "Random restarts per node");
  train_cmd->add_option("--val-fraction", to.val_fraction);
  train_cmd->add_flag("--axis-only", to.axis_only, "Axis-parallel splits only");
  train_cmd->add_option("--out", to.out, "Output directory")->required();
  common(train_cmd);

  EvalOpts eo;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained policy");
  eval_cmd->add_option("--model", eo.model, "model.json")->required();
  add_instance_options(eval_cmd, eo.inst);
  eval_cmd->add_option("--n-instances", eo.n_instances, "Test instances");
  eval_cmd->add_option("--points", eo.points, "Held-out accuracy points");
  eval_cmd->add_option("--per-segment", eo.per_segment);
  eval_cmd->add_option("--box", eo.box);
  eval_cmd->add_option("--dt-eval", eo.dt_eval, "Closed-loop step (default max(delta, T/10000))");
  eval_cmd->add_option("--out", eo.out, "Output directory")->required();
  eval_cmd->add_flag("--plot", eo.plot, "Write SVG plots");
  common(eval_cmd);

  BenchOpts bo;
  auto* bench_cmd = app.add_subcommand("bench", "generate, train and eval over a grid of cells");
  bench_cmd->add_option("--config", bo.config, "JSON config with cells and settings");
  bench_cmd->add_option("--families", bo.families)->delimiter(',');
  bench_cmd->add_option("--sizes", bo.sizes, "n:T pairs, comma separated")->delimiter(',');
  bench_cmd->add_option("--M", bo.M);
  bench_cmd->add_option("--points", bo.points);
  bench_cmd->add_option("--n-instances", bo.n_instances);
  bench_cmd->add_option("--per-segment", bo.per_segment);
  bench_cmd->add_option("--depths", bo.depths)->delimiter(',');
  bench_cmd->add_option("--min-leaf", bo.min_leaf);
  bench_cmd->add_option("--restarts", bo.restarts);
  bench_cmd->add_option("--out", bo.out, "Output directory")->required();
  common(bench_cmd);

  std::string manifest_path, replay_out;
  auto* replay_cmd = app.add_subcommand("replay", "Rerun a command from its manifest");
  replay_cmd->add_option("--manifest", manifest_path)->required();
  replay_cmd->add_option("--out", replay_out, "Override the output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  if (*replay_cmd) {
    if (!allow_replay) usage("a manifest cannot replay another replay");
    return cmd_replay(manifest_path, replay_out, out, err);
  }

  Context ctx{out, err, {}, 0, std::max(1, jobs), utc_timestamp(), Clock::now()};
  ctx.argv.assign(args.begin() + 1, args.end());
  if (!seed_text.empty()) {
    ctx.seed = parse_seed(seed_text, "--seed");
  } else {
    const char* env = std::getenv("FRMAB_SEED");
    ctx.seed = env && *env ? parse_seed(env, "FRMAB_SEED") : 0;
    ctx.argv.push_back("--seed");
    ctx.argv.push_back(std::to_string(ctx.seed));
  }

  if (*solve_cmd) return cmd_solve(so, ctx);
  if (*gen_cmd) return cmd_generate(go, ctx);
  if (*train_cmd) return cmd_train(to, ctx);
  if (*eval_cmd) return cmd_eval(eo, ctx);
  if (*bench_cmd) return cmd_bench(bo, ctx);
  return kInputError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err, true);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.is_numerical() ? kNumericalFailure : kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace frmab::cli
