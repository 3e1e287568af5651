#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "frmab/dynamics.hpp"
#include "frmab/pmp.hpp"
#include "frmab/shooting.hpp"

namespace frmab {

// One extracted (t, x) -> u pair before augmentation.
struct RawSample {
  double t = 0.0;
  std::vector<double> x;
  Control u;
  std::size_t instance = 0;  // index of the solved initial state
};

// Result of solving one sampled initial state. The full grid is dropped once
// samples are extracted unless GenerateConfig::keep_trajectories is set.
struct SolvedInstance {
  std::size_t index = 0;
  std::vector<double> x0;
  double objective = 0.0;
  SolveInfo info;
  std::size_t num_segments = 0;
  std::vector<RawSample> samples;
  PiecewiseTrajectory trajectory;  // empty unless kept
};

struct GenerateConfig {
  int M = 3000;
  std::uint64_t seed = 0;
  int per_segment = 10;
  // Sampling box for arms with H = inf.
  double box_upper = 10.0;
  int jobs = 1;
  double max_failure_fraction = 0.05;
  bool keep_trajectories = false;
  // Receives one line per failed solve; nullptr writes to stderr.
  std::function<void(const std::string&)> log;
};

struct GenerateResult {
  std::vector<SolvedInstance> solved;  // ordered by index
  std::vector<std::pair<std::size_t, std::string>> failures;
};

// Samples M initial states uniformly from prod (0, H_i) (stream j of the seed
// for state j), solves each, extracts samples. Failed solves are reported and
// skipped; more than max_failure_fraction of them throws
// Error(TooManyFailures).
GenerateResult generate(const FrmabInstance& inst, const GenerateConfig& cfg);

// per_segment grid points per constant-control segment, equally spaced over
// the segment's grid points and including its first and last one. The point
// at t = T is never extracted.
std::vector<RawSample> extract(const PiecewiseTrajectory& traj, int per_segment,
                               std::size_t instance = 0);
std::vector<RawSample> extract(std::span<const PiecewiseTrajectory> trajs,
                               int per_segment);

struct AugmentationTerm {
  enum class Kind { Square, Pole };
  std::size_t project = 0;
  Kind kind = Kind::Pole;
  // Pole terms are 1 / (x + shift), shift = alpha(u) / beta(u); 1 / x has
  // shift 0.
  double shift = 0.0;

  std::string name() const;
  // Sets *clamped when the pole is closer than 1e-9 and the value is clamped
  // to +-1e9.
  double evaluate(std::span<const double> x, bool* clamped) const;

  bool operator==(const AugmentationTerm&) const = default;
};

struct AugmentationPlan {
  Family family = Family::Affine;
  std::vector<AugmentationTerm> terms;

  std::vector<std::string> feature_names(std::size_t n) const;
  // (t, x_1..x_n, terms...).
  std::vector<double> features(double t, std::span<const double> x,
                               bool* clamped = nullptr) const;
  // Writes the same values into an existing buffer of the right size.
  void features_into(double t, std::span<const double> x, std::span<double> out,
                     bool* clamped = nullptr) const;
  std::size_t num_features(std::size_t n) const { return 1 + n + terms.size(); }

  nlohmann::json to_json() const;
  static AugmentationPlan from_json(const nlohmann::json& j);
};

inline constexpr double kPoleClamp = 1e9;
inline constexpr double kPoleDistance = 1e-9;

// Data-driven term selection from the control values observed in `labels`.
AugmentationPlan plan_augmentation(std::span<const Control> labels,
                                   const FrmabInstance& inst);

// Distinct control vectors <-> class ids, ordered lexicographically.
class ClassTable {
 public:
  ClassTable() = default;
  explicit ClassTable(std::vector<Control> controls);

  static ClassTable from_labels(std::span<const Control> labels);

  std::size_t size() const { return controls_.size(); }
  const Control& control(int id) const;
  // -1 when absent.
  int id_of(const Control& u) const;
  const std::vector<Control>& controls() const { return controls_; }

  bool operator==(const ClassTable&) const = default;

 private:
  std::vector<Control> controls_;
};

struct Sample {
  double t = 0.0;
  std::vector<double> x;
  std::vector<double> features;
  Control label;
  int class_id = 0;
  bool clamped = false;
  std::size_t instance = 0;  // solved initial state the sample came from
};

struct LabeledDataset {
  std::vector<Sample> samples;
  std::vector<std::string> feature_names;
  ClassTable class_table;
  AugmentationPlan plan;

  std::size_t size() const { return samples.size(); }
};

// Base features are always (t, x); the plan appends its terms.
LabeledDataset augment(std::span<const RawSample> samples, const AugmentationPlan& plan);
// As above, but with a fixed class table (held-out data scored against a
// model). Labels missing from the table get class id -1.
LabeledDataset augment(std::span<const RawSample> samples, const AugmentationPlan& plan,
                       const ClassTable& table);

// CSV header t,x_1..x_n,<term names>,label; label is the class id.
void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& data);
// Sidecar: feature names, class id -> control, plan, plus caller metadata.
nlohmann::json dataset_sidecar(const LabeledDataset& data);
// Reads the CSV and its sidecar; throws Error(Io) on malformed input.
LabeledDataset read_dataset(const std::filesystem::path& csv_path,
                            const nlohmann::json& sidecar);

}  // namespace frmab
