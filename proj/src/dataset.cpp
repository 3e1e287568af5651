#include "frmab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

#include "frmab/benchmarks.hpp"
#include "frmab/errors.hpp"
#include "frmab/io.hpp"
#include "frmab/parallel.hpp"
#include "frmab/rng.hpp"

namespace frmab {

GenerateResult generate(const FrmabInstance& inst, const GenerateConfig& cfg) {
  if (cfg.M < 1) throw Error(ErrorKind::InvalidInstance, "M must be at least 1");
  if (cfg.per_segment < 1) throw Error(ErrorKind::InvalidInstance, "per_segment must be >= 1");
  validate(inst);
  const auto count = static_cast<std::size_t>(cfg.M);
  std::vector<SolvedInstance> slots(count);
  std::vector<std::string> errors(count);
  std::vector<char> ok(count, 0);

  parallel_for(count, cfg.jobs, [&](std::size_t j) {
    Rng rng(cfg.seed, j);
    SolvedInstance s;
    s.index = j;
    s.x0 = sample_initial_state(inst, rng, cfg.box_upper);
    SolveOptions options;
    options.seed = Rng::mix(cfg.seed ^ Rng::mix(j));
    try {
      PiecewiseTrajectory traj = solve(inst, s.x0, options);
      s.objective = traj.objective;
      s.info = traj.info;
      s.num_segments = traj.segments.size();
      s.samples = extract(traj, cfg.per_segment, j);
      if (cfg.keep_trajectories) s.trajectory = std::move(traj);
      ok[j] = 1;
    } catch (const Error& e) {
      if (!e.is_numerical()) throw;
      errors[j] = e.what();
    }
    slots[j] = std::move(s);
  });

  GenerateResult result;
  for (std::size_t j = 0; j < count; ++j) {
    if (ok[j]) {
      result.solved.push_back(std::move(slots[j]));
    } else {
      result.failures.emplace_back(j, errors[j]);
      const std::string line = "solve " + std::to_string(j) + " failed: " + errors[j];
      if (cfg.log) {
        cfg.log(line);
      } else {
        std::cerr << line << '\n';
      }
    }
  }
  const double fraction = static_cast<double>(result.failures.size()) / count;
  if (fraction > cfg.max_failure_fraction) {
    throw Error(ErrorKind::TooManyFailures,
                std::to_string(result.failures.size()) + " of " + std::to_string(count) +
                    " solves failed");
  }
  return result;
}

std::vector<RawSample> extract(const PiecewiseTrajectory& traj, int per_segment,
                               std::size_t instance) {
  if (per_segment < 1) throw Error(ErrorKind::InvalidInstance, "per_segment must be >= 1");
  std::vector<RawSample> out;
  if (traj.grid.empty()) return out;
  const std::size_t last = traj.grid.size() - 1;  // the t = T point
  const auto per = static_cast<std::size_t>(per_segment);
  for (const auto& seg : traj.segments) {
    const std::size_t first = seg.first_point;
    const std::size_t end = std::min(seg.end_point, last);
    if (end <= first) continue;
    const std::size_t count = end - first;
    auto take = [&](std::size_t k) {
      out.push_back({traj.grid[k].t, traj.grid[k].x, traj.controls[k], instance});
    };
    if (count <= per) {
      for (std::size_t k = first; k < end; ++k) take(k);
    } else if (per == 1) {
      take(first);
    } else {
      for (std::size_t j = 0; j < per; ++j) {
        // Rounded linspace over [first, end - 1]; count > per keeps it strictly
        // increasing.
        const std::size_t offset = (j * (count - 1) + (per - 1) / 2) / (per - 1);
        take(first + offset);
      }
    }
  }
  return out;
}

std::vector<RawSample> extract(std::span<const PiecewiseTrajectory> trajs,
                               int per_segment) {
  std::vector<RawSample> out;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    auto part = extract(trajs[i], per_segment, i);
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

std::string AugmentationTerm::name() const {
  const std::string x = "x_" + std::to_string(project + 1);
  if (kind == Kind::Square) return "sq(" + x + ")";
  if (shift == 0.0) return "inv(" + x + ")";
  return "inv(" + x + (shift > 0 ? "+" : "-") + io::format_double(std::abs(shift)) + ")";
}

double AugmentationTerm::evaluate(std::span<const double> x, bool* clamped) const {
  const double v = x[project];
  if (kind == Kind::Square) return v * v;
  const double denom = v + shift;
  if (std::abs(denom) < kPoleDistance) {
    if (clamped) *clamped = true;
    return denom < 0.0 ? -kPoleClamp : kPoleClamp;
  }
  return 1.0 / denom;
}

std::vector<std::string> AugmentationPlan::feature_names(std::size_t n) const {
  std::vector<std::string> names{"t"};
  for (std::size_t i = 1; i <= n; ++i) names.push_back("x_" + std::to_string(i));
  for (const auto& term : terms) names.push_back(term.name());
  return names;
}

std::vector<double> AugmentationPlan::features(double t, std::span<const double> x,
                                               bool* clamped) const {
  std::vector<double> f(num_features(x.size()));
  features_into(t, x, f, clamped);
  return f;
}

void AugmentationPlan::features_into(double t, std::span<const double> x,
                                     std::span<double> out, bool* clamped) const {
  out[0] = t;
  std::copy(x.begin(), x.end(), out.begin() + 1);
  std::size_t k = 1 + x.size();
  for (const auto& term : terms) out[k++] = term.evaluate(x, clamped);
}

nlohmann::json AugmentationPlan::to_json() const {
  nlohmann::json terms_json = nlohmann::json::array();
  for (const auto& term : terms) {
    terms_json.push_back({{"project", term.project},
                          {"kind", term.kind == AugmentationTerm::Kind::Square ? "square" : "pole"},
                          {"shift", term.shift},
                          {"name", term.name()}});
  }
  return {{"family", to_string(family)}, {"terms", std::move(terms_json)}};
}

AugmentationPlan AugmentationPlan::from_json(const nlohmann::json& j) {
  AugmentationPlan plan;
  try {
    plan.family = parse_family(j.at("family").get<std::string>());
    for (const auto& jt : j.at("terms")) {
      AugmentationTerm term;
      term.project = jt.at("project").get<std::size_t>();
      const auto kind = jt.at("kind").get<std::string>();
      if (kind == "square") {
        term.kind = AugmentationTerm::Kind::Square;
      } else if (kind == "pole") {
        term.kind = AugmentationTerm::Kind::Pole;
      } else {
        throw Error(ErrorKind::Io, "unknown augmentation kind '" + kind + "'");
      }
      term.shift = jt.at("shift").get<double>();
      plan.terms.push_back(term);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, std::string("malformed augmentation plan: ") + e.what());
  }
  return plan;
}

AugmentationPlan plan_augmentation(std::span<const Control> labels,
                                   const FrmabInstance& inst) {
  AugmentationPlan plan;
  plan.family = inst.family();
  const std::size_t n = inst.n();
  std::vector<std::set<int>> observed(n);
  for (const auto& u : labels) {
    if (u.size() != n) throw Error(ErrorKind::DimensionMismatch, "label length differs from n");
    for (std::size_t i = 0; i < n; ++i) observed[i].insert(u[i]);
  }
  auto add = [&](AugmentationTerm term) {
    if (term.kind == AugmentationTerm::Kind::Pole && term.shift == 0.0) term.shift = 0.0;  // drop -0
    if (std::find(plan.terms.begin(), plan.terms.end(), term) == plan.terms.end()) {
      plan.terms.push_back(term);
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = inst.projects[i];
    if (plan.family == Family::Quadratic) {
      add({i, AugmentationTerm::Kind::Pole, 0.0});
    }
    for (int u : observed[i]) {
      const MixedCoeffs k = mix_coeffs(d, u);
      if (plan.family == Family::Quadratic || std::abs(k.beta) >= kBetaZero) {
        add({i, AugmentationTerm::Kind::Pole, k.alpha / k.beta});
      } else if (k.r != 0.0) {
        add({i, AugmentationTerm::Kind::Square, 0.0});
      }
    }
  }
  return plan;
}

ClassTable::ClassTable(std::vector<Control> controls) : controls_(std::move(controls)) {
  std::sort(controls_.begin(), controls_.end());
  controls_.erase(std::unique(controls_.begin(), controls_.end()), controls_.end());
}

ClassTable ClassTable::from_labels(std::span<const Control> labels) {
  return ClassTable(std::vector<Control>(labels.begin(), labels.end()));
}

const Control& ClassTable::control(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= controls_.size()) {
    throw Error(ErrorKind::MalformedModel, "class id out of range");
  }
  return controls_[static_cast<std::size_t>(id)];
}

int ClassTable::id_of(const Control& u) const {
  const auto it = std::lower_bound(controls_.begin(), controls_.end(), u);
  if (it == controls_.end() || *it != u) return -1;
  return static_cast<int>(it - controls_.begin());
}

LabeledDataset augment(std::span<const RawSample> samples, const AugmentationPlan& plan,
                       const ClassTable& table) {
  LabeledDataset data;
  data.plan = plan;
  data.class_table = table;
  const std::size_t n = samples.empty() ? 0 : samples.front().x.size();
  data.feature_names = plan.feature_names(n);
  data.samples.reserve(samples.size());
  for (const auto& raw : samples) {
    if (raw.x.size() != n) throw Error(ErrorKind::DimensionMismatch, "ragged samples");
    Sample s;
    s.t = raw.t;
    s.x = raw.x;
    s.label = raw.u;
    s.class_id = table.id_of(raw.u);
    s.instance = raw.instance;
    s.features = plan.features(raw.t, raw.x, &s.clamped);
    data.samples.push_back(std::move(s));
  }
  return data;
}

LabeledDataset augment(std::span<const RawSample> samples, const AugmentationPlan& plan) {
  std::vector<Control> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.u);
  return augment(samples, plan, ClassTable::from_labels(labels));
}

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& data) {
  std::ostringstream out;
  for (const auto& name : data.feature_names) out << name << ',';
  out << "label\n";
  for (const auto& s : data.samples) {
    for (double v : s.features) out << io::format_double(v) << ',';
    out << s.class_id << '\n';
  }
  io::write_file(path, out.str());
}

nlohmann::json dataset_sidecar(const LabeledDataset& data) {
  std::size_t clamped = 0;
  std::vector<std::size_t> instances;
  instances.reserve(data.samples.size());
  for (const auto& s : data.samples) {
    clamped += s.clamped ? 1 : 0;
    instances.push_back(s.instance);
  }
  return {{"feature_names", data.feature_names},
          {"class_table", data.class_table.controls()},
          {"plan", data.plan.to_json()},
          {"num_samples", data.samples.size()},
          {"num_clamped", clamped},
          {"row_instance", std::move(instances)}};
}

LabeledDataset read_dataset(const std::filesystem::path& csv_path,
                            const nlohmann::json& sidecar) {
  LabeledDataset data;
  std::vector<std::size_t> row_instance;
  try {
    row_instance = sidecar.value("row_instance", std::vector<std::size_t>{});
    data.feature_names = sidecar.at("feature_names").get<std::vector<std::string>>();
    data.class_table = ClassTable(sidecar.at("class_table").get<std::vector<Control>>());
    data.plan = AugmentationPlan::from_json(sidecar.at("plan"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, std::string("malformed dataset sidecar: ") + e.what());
  }
  const auto table = io::read_csv(csv_path);
  const std::size_t d = data.feature_names.size();
  if (table.header.size() != d + 1 || table.header.back() != "label" ||
      !std::equal(data.feature_names.begin(), data.feature_names.end(), table.header.begin())) {
    throw Error(ErrorKind::Io, "dataset header does not match its sidecar");
  }
  if (d < 1 + data.plan.terms.size()) throw Error(ErrorKind::Io, "sidecar plan and feature names disagree");
  const std::size_t n = d - 1 - data.plan.terms.size();
  if (!row_instance.empty() && row_instance.size() != table.rows.size()) {
    throw Error(ErrorKind::Io, "sidecar row_instance length differs from the CSV");
  }
  for (const auto& row : table.rows) {
    Sample s;
    s.features.assign(row.begin(), row.end() - 1);
    s.t = row[0];
    s.x.assign(row.begin() + 1, row.begin() + 1 + static_cast<std::ptrdiff_t>(n));
    s.class_id = static_cast<int>(row.back());
    if (static_cast<double>(s.class_id) != row.back() || s.class_id < 0 ||
        static_cast<std::size_t>(s.class_id) >= data.class_table.size()) {
      throw Error(ErrorKind::Io, "dataset label is not a valid class id");
    }
    s.label = data.class_table.control(s.class_id);
    data.plan.features(s.t, s.x, &s.clamped);
    s.instance = row_instance.empty() ? 0 : row_instance[data.samples.size()];
    data.samples.push_back(std::move(s));
  }
  return data;
}

}  // namespace frmab
