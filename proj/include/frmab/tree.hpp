#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "frmab/dataset.hpp"
#include "json.hpp"

namespace frmab {

// Internal nodes send f to `left` when w . standardize(f) < threshold. Every
// node carries the majority class of the training samples that reached it,
// which is what a truncated copy predicts.
struct TreeNode {
  std::vector<double> weights;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int class_id = 0;

  bool is_leaf() const { return left < 0; }
};

struct TrainMeta {
  std::uint64_t seed = 0;
  std::vector<int> depth_grid;
  std::vector<double> val_accuracy;    // per depth_grid entry
  std::vector<double> train_accuracy;  // per depth_grid entry
  int selected_depth = 0;
  int min_leaf = 0;
  int restarts_per_node = 0;
  bool axis_parallel_only = false;
  std::size_t num_train = 0;
  std::size_t num_val = 0;
};

class ObliquePolicyTree {
 public:
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int depth = 0;
  std::vector<std::string> feature_names;
  ClassTable class_table;
  // Maps raw (t, x) to the feature vector the tree was trained on.
  AugmentationPlan plan;
  std::vector<double> means;
  std::vector<double> stds;
  TrainMeta train_meta;

  std::size_t num_features() const { return feature_names.size(); }
  std::size_t num_leaves() const;

  // Index of the leaf reached by raw (unstandardized) features.
  int route(std::span<const double> features) const;
  int predict_class(std::span<const double> features) const;
  const Control& predict(std::span<const double> features) const;
  // Builds features from raw state with the stored plan; `scratch` avoids
  // allocation on repeated queries.
  const Control& predict_state(double t, std::span<const double> x,
                               std::vector<double>& scratch) const;

  // Same tree keeping only the top `max_depth` levels.
  ObliquePolicyTree truncated(int max_depth) const;

  // Throws Error(MalformedModel) on bad links, cycles, sizes or values.
  void check() const;
};

struct TrainConfig {
  std::vector<int> depth_grid{5, 10, 15};
  int min_leaf = 20;
  double val_fraction = 0.2;
  int restarts_per_node = 10;
  std::uint64_t seed = 0;
  bool axis_parallel_only = false;
  int jobs = 1;
};

// Greedy top-down induction. Each split minimizes weighted Gini by coordinate
// descent over (weights, threshold), started from the best axis-parallel split
// and from restarts_per_node random projections. One tree is grown to the
// deepest grid entry; each grid depth is its truncation, scored on the held
// out split, and the best (ties to the smaller depth) is returned.
ObliquePolicyTree train(const LabeledDataset& data, const TrainConfig& cfg);

double accuracy_on(const ObliquePolicyTree& tree, const LabeledDataset& data,
                   std::span<const std::size_t> rows);

nlohmann::json to_json(const ObliquePolicyTree& tree);
ObliquePolicyTree tree_from_json(const nlohmann::json& j);
void save(const ObliquePolicyTree& tree, const std::filesystem::path& path);
ObliquePolicyTree load(const std::filesystem::path& path);

}  // namespace frmab
