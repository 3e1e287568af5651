#include "frmab/tree.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "frmab/errors.hpp"
#include "frmab/io.hpp"
#include "frmab/parallel.hpp"
#include "frmab/rng.hpp"

namespace frmab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kScoreTolerance = 1e-9;
constexpr double kZeroWeight = 1e-8;
constexpr int kMaxPasses = 8;

double standardize(double f, double mean, double sd) { return (f - mean) / sd; }

// w . z - threshold with z = standardized features. Training and prediction
// both go through here so a stored split reproduces its training partition.
double margin(const std::vector<double>& w, double threshold, const double* z) {
  double s = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * z[j];
  return s - threshold;
}

// Left/right class counts with running sums of squared counts, so the
// weighted Gini of a partition updates in O(1) per moved sample.
struct Partition {
  std::vector<double> left, right;
  double nl = 0, nr = 0, sql = 0, sqr = 0;

  explicit Partition(std::size_t k) : left(k, 0.0), right(k, 0.0) {}

  void add(int c, bool to_left) {
    auto& cnt = to_left ? left : right;
    (to_left ? sql : sqr) += 2.0 * cnt[c] + 1.0;
    (to_left ? nl : nr) += 1.0;
    cnt[c] += 1.0;
  }
  void move_to_right(int c) {
    sql -= 2.0 * left[c] - 1.0;
    left[c] -= 1.0;
    nl -= 1.0;
    add(c, false);
  }
  void move_to_left(int c) {
    sqr -= 2.0 * right[c] - 1.0;
    right[c] -= 1.0;
    nr -= 1.0;
    add(c, true);
  }
  // n_l * gini_l + n_r * gini_r, or inf when a side is below min_leaf.
  double score(double min_leaf) const {
    if (nl < min_leaf || nr < min_leaf) return kInf;
    return (nl - sql / nl) + (nr - sqr / nr);
  }
};

struct Hyperplane {
  std::vector<double> w;
  double threshold = 0.0;
  double score = kInf;
};

// Samples of one node, copied contiguously.
struct NodeData {
  std::size_t n = 0, d = 0;
  std::vector<double> z;  // n x d, row-major
  std::vector<int> y;
  std::size_t k = 0;
  double min_leaf = 1;

  const double* row(std::size_t i) const { return z.data() + i * d; }
};

double partition_score(const NodeData& nd, const std::vector<double>& v) {
  Partition p(nd.k);
  for (std::size_t i = 0; i < nd.n; ++i) p.add(nd.y[i], v[i] < 0.0);
  return p.score(nd.min_leaf);
}

struct SweepItem {
  double u;
  int cls;
  bool moves_right;
};

// Best value for one coordinate of (w, -threshold) with the rest held fixed.
// v holds the current margins, f the coordinate's coefficient per sample and
// c its current value. Candidates are midpoints between consecutive
// breakpoints plus one value beyond each end.
std::pair<double, double> sweep(const NodeData& nd, const std::vector<double>& v,
                                const std::vector<double>& f, double c,
                                std::vector<SweepItem>& items) {
  items.clear();
  Partition p(nd.k);
  for (std::size_t i = 0; i < nd.n; ++i) {
    if (f[i] > 0.0) {
      p.add(nd.y[i], true);
      items.push_back({c - v[i] / f[i], nd.y[i], true});
    } else if (f[i] < 0.0) {
      p.add(nd.y[i], false);
      items.push_back({c - v[i] / f[i], nd.y[i], false});
    } else {
      p.add(nd.y[i], v[i] < 0.0);
    }
  }
  if (items.empty()) return {c, kInf};
  std::sort(items.begin(), items.end(),
            [](const SweepItem& a, const SweepItem& b) { return a.u < b.u; });
  double best_c = items.front().u - 1.0;
  double best = p.score(nd.min_leaf);
  for (std::size_t i = 0; i < items.size();) {
    const double u = items[i].u;
    for (; i < items.size() && items[i].u == u; ++i) {
      if (items[i].moves_right) {
        p.move_to_right(items[i].cls);
      } else {
        p.move_to_left(items[i].cls);
      }
    }
    const double s = p.score(nd.min_leaf);
    if (s < best - kScoreTolerance) {
      best = s;
      best_c = i < items.size() ? 0.5 * (u + items[i].u) : u + 1.0;
    }
  }
  return {best_c, best};
}

void margins(const NodeData& nd, const Hyperplane& h, std::vector<double>& v) {
  v.resize(nd.n);
  for (std::size_t i = 0; i < nd.n; ++i) v[i] = margin(h.w, h.threshold, nd.row(i));
}

// Coordinate descent over the d weights and the threshold.
void local_search(const NodeData& nd, Hyperplane& h) {
  std::vector<double> v, f(nd.n);
  std::vector<SweepItem> items;
  margins(nd, h, v);
  h.score = partition_score(nd, v);
  for (int pass = 0; pass < kMaxPasses; ++pass) {
    bool improved = false;
    for (std::size_t k = 0; k <= nd.d; ++k) {
      const bool is_threshold = k == nd.d;
      for (std::size_t i = 0; i < nd.n; ++i) f[i] = is_threshold ? -1.0 : nd.row(i)[k];
      double& coord = is_threshold ? h.threshold : h.w[k];
      const auto [value, score] = sweep(nd, v, f, coord, items);
      if (score < h.score - kScoreTolerance && std::isfinite(value)) {
        const double change = value - coord;
        for (std::size_t i = 0; i < nd.n; ++i) v[i] += change * f[i];
        coord = value;
        h.score = score;
        improved = true;
      }
    }
    if (!improved) break;
  }
}

// Rescales to max |w_j| = 1, zeroes negligible weights and rescores exactly.
void finalize(const NodeData& nd, Hyperplane& h) {
  double scale = 0.0;
  for (double w : h.w) scale = std::max(scale, std::abs(w));
  if (scale > 0.0) {
    for (double& w : h.w) {
      w /= scale;
      if (std::abs(w) < kZeroWeight) w = 0.0;
    }
    h.threshold /= scale;
  }
  std::vector<double> v;
  margins(nd, h, v);
  h.score = partition_score(nd, v);
}

Hyperplane best_axis_split(const NodeData& nd) {
  Hyperplane best;
  std::vector<double> v(nd.n), f(nd.n, -1.0);
  std::vector<SweepItem> items;
  for (std::size_t j = 0; j < nd.d; ++j) {
    for (std::size_t i = 0; i < nd.n; ++i) v[i] = nd.row(i)[j];
    const auto [value, score] = sweep(nd, v, f, 0.0, items);
    if (score < best.score - kScoreTolerance) {
      best.w.assign(nd.d, 0.0);
      best.w[j] = 1.0;
      best.threshold = value;
      best.score = score;
    }
  }
  if (std::isfinite(best.score)) finalize(nd, best);
  return best;
}

// Ridge logistic regression of class a against class b (b < 0: all others)
// by Newton steps; the fitted boundary seeds a local search. Standardized
// features are clipped so clamped poles do not dominate the fit.
constexpr std::size_t kMaxFitRows = 2000;
constexpr double kFitRidge = 1e-2;
constexpr double kFitClip = 10.0;

std::optional<Hyperplane> pair_start(const NodeData& nd, int a, int b) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < nd.n; ++i) {
    if (nd.y[i] == a || b < 0 || nd.y[i] == b) rows.push_back(i);
  }
  if (rows.size() > kMaxFitRows) {
    std::vector<std::size_t> thinned;
    const double stride = static_cast<double>(rows.size()) / kMaxFitRows;
    for (std::size_t j = 0; j < kMaxFitRows; ++j) {
      thinned.push_back(rows[static_cast<std::size_t>(j * stride)]);
    }
    rows = std::move(thinned);
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(nd.d);
  Eigen::MatrixXd X(m, d + 1);
  Eigen::VectorXd target(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const double* z = nd.row(rows[static_cast<std::size_t>(r)]);
    for (Eigen::Index j = 0; j < d; ++j) X(r, j) = std::clamp(z[j], -kFitClip, kFitClip);
    X(r, d) = 1.0;
    target[r] = nd.y[rows[static_cast<std::size_t>(r)]] == a ? 1.0 : 0.0;
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
  Eigen::MatrixXd ridge = kFitRidge * Eigen::MatrixXd::Identity(d + 1, d + 1);
  ridge(d, d) = 0.0;
  for (int iter = 0; iter < 25; ++iter) {
    const Eigen::VectorXd p = (1.0 + (-(X * beta).array()).exp()).inverse().matrix();
    const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).max(1e-10).matrix();
    const Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X + ridge;
    const Eigen::VectorXd g = X.transpose() * (target - p) - ridge * beta;
    const Eigen::VectorXd step = H.ldlt().solve(g);
    if (!step.allFinite()) return std::nullopt;
    beta += step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-8) break;
  }
  if (!beta.allFinite()) return std::nullopt;
  Hyperplane h;
  h.w.assign(beta.data(), beta.data() + d);
  h.threshold = -beta[d];
  return h;
}

struct Builder {
  const std::vector<double>& z;  // all training rows, standardized
  const std::vector<int>& y;
  std::size_t d, k;
  int max_depth;
  const TrainConfig& cfg;
  bool oblique;
  std::vector<TreeNode> nodes;

  int majority(std::span<const std::size_t> rows, double* impurity) const {
    std::vector<double> counts(k, 0.0);
    for (std::size_t r : rows) counts[static_cast<std::size_t>(y[r])] += 1.0;
    double sq = 0.0;
    for (double c : counts) sq += c * c;
    *impurity = static_cast<double>(rows.size()) - sq / static_cast<double>(rows.size());
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }

  Hyperplane find_split(std::span<const std::size_t> rows, std::uint64_t heap_id) const {
    NodeData nd;
    nd.n = rows.size();
    nd.d = d;
    nd.k = k;
    nd.min_leaf = std::max(1, cfg.min_leaf);
    nd.z.resize(nd.n * d);
    nd.y.resize(nd.n);
    for (std::size_t i = 0; i < nd.n; ++i) {
      std::copy_n(z.data() + rows[i] * d, d, nd.z.data() + i * d);
      nd.y[i] = y[rows[i]];
    }
    Hyperplane axis = best_axis_split(nd);
    if (!oblique || !std::isfinite(axis.score)) return axis;

    // Starts: the axis split, one-vs-rest and pairwise fits over classes
    // with at least min_leaf samples here, then random projections.
    std::vector<double> counts(k, 0.0);
    for (int c : nd.y) counts[static_cast<std::size_t>(c)] += 1.0;
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t a = 0; a < k; ++a) {
      if (counts[a] < nd.min_leaf) continue;
      pairs.push_back({static_cast<int>(a), -1});
      for (std::size_t b = a + 1; b < k; ++b) {
        if (counts[b] >= nd.min_leaf) pairs.push_back({static_cast<int>(a), static_cast<int>(b)});
      }
    }
    const std::size_t informed = 1 + pairs.size();
    std::vector<Hyperplane> found(informed + static_cast<std::size_t>(std::max(0, cfg.restarts_per_node)));
    parallel_for(found.size(), cfg.jobs, [&](std::size_t s) {
      Hyperplane h;
      if (s == 0) {
        h = axis;
      } else if (s < informed) {
        auto fit = pair_start(nd, pairs[s - 1].first, pairs[s - 1].second);
        if (!fit) return;
        h = std::move(*fit);
      } else {
        Rng rng(cfg.seed ^ Rng::mix(heap_id), s);
        h.w.resize(d);
        for (double& w : h.w) w = rng.uniform(-1.0, 1.0);
      }
      local_search(nd, h);
      finalize(nd, h);
      found[s] = std::move(h);
    });
    Hyperplane best = axis;
    for (auto& h : found) {
      if (h.score < best.score - kScoreTolerance) best = std::move(h);
    }
    return best;
  }

  int build(std::vector<std::size_t> rows, int level, std::uint64_t heap_id) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    double impurity = 0.0;
    nodes[id].class_id = majority(rows, &impurity);
    if (level >= max_depth || impurity <= kScoreTolerance ||
        rows.size() < 2 * static_cast<std::size_t>(std::max(1, cfg.min_leaf))) {
      return id;
    }
    Hyperplane h = find_split(rows, heap_id);
    if (!(h.score < impurity - kScoreTolerance)) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) {
      (margin(h.w, h.threshold, z.data() + r * d) < 0.0 ? left : right).push_back(r);
    }
    if (left.empty() || right.empty()) return id;
    rows.clear();
    rows.shrink_to_fit();
    nodes[id].weights = std::move(h.w);
    nodes[id].threshold = h.threshold;
    const int l = build(std::move(left), level + 1, 2 * heap_id);
    nodes[id].left = l;
    const int r = build(std::move(right), level + 1, 2 * heap_id + 1);
    nodes[id].right = r;
    return id;
  }
};

int measure_depth(const std::vector<TreeNode>& nodes, int id) {
  const auto& node = nodes[static_cast<std::size_t>(id)];
  if (node.is_leaf()) return 0;
  return 1 + std::max(measure_depth(nodes, node.left), measure_depth(nodes, node.right));
}

int copy_truncated(const std::vector<TreeNode>& from, int id, int levels_left,
                   std::vector<TreeNode>& to) {
  const auto& node = from[static_cast<std::size_t>(id)];
  const int out = static_cast<int>(to.size());
  to.push_back({});
  to[out].class_id = node.class_id;
  if (node.is_leaf() || levels_left == 0) return out;
  to[out].weights = node.weights;
  to[out].threshold = node.threshold;
  const int l = copy_truncated(from, node.left, levels_left - 1, to);
  to[out].left = l;
  const int r = copy_truncated(from, node.right, levels_left - 1, to);
  to[out].right = r;
  return out;
}

[[noreturn]] void malformed(const std::string& what) {
  throw Error(ErrorKind::MalformedModel, what);
}

}  // namespace

std::size_t ObliquePolicyTree::num_leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int ObliquePolicyTree::route(std::span<const double> features) const {
  if (features.size() != feature_names.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "expected " + std::to_string(feature_names.size()) + " features, got " +
                    std::to_string(features.size()));
  }
  int id = 0;
  while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const auto& node = nodes[static_cast<std::size_t>(id)];
    double s = 0.0;
    for (std::size_t j = 0; j < node.weights.size(); ++j) {
      s += node.weights[j] * standardize(features[j], means[j], stds[j]);
    }
    id = s - node.threshold < 0.0 ? node.left : node.right;
  }
  return id;
}

int ObliquePolicyTree::predict_class(std::span<const double> features) const {
  return nodes[static_cast<std::size_t>(route(features))].class_id;
}

const Control& ObliquePolicyTree::predict(std::span<const double> features) const {
  return class_table.control(predict_class(features));
}

const Control& ObliquePolicyTree::predict_state(double t, std::span<const double> x,
                                                std::vector<double>& scratch) const {
  scratch.resize(plan.num_features(x.size()));
  plan.features_into(t, x, scratch);
  return predict(scratch);
}

ObliquePolicyTree ObliquePolicyTree::truncated(int max_depth) const {
  ObliquePolicyTree out = *this;
  out.nodes.clear();
  copy_truncated(nodes, 0, std::max(0, max_depth), out.nodes);
  out.depth = measure_depth(out.nodes, 0);
  return out;
}

void ObliquePolicyTree::check() const {
  const std::size_t d = feature_names.size();
  if (nodes.empty()) malformed("tree has no nodes");
  if (class_table.size() == 0) malformed("empty class table");
  if (means.size() != d || stds.size() != d) malformed("standardization size mismatch");
  for (std::size_t j = 0; j < d; ++j) {
    if (!std::isfinite(means[j]) || !std::isfinite(stds[j]) || !(stds[j] > 0.0)) {
      malformed("bad standardization for feature " + std::to_string(j));
    }
  }
  std::vector<char> seen(nodes.size(), 0);
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    const auto [id, level] = stack.back();
    stack.pop_back();
    if (id < 0 || static_cast<std::size_t>(id) >= nodes.size()) malformed("node link out of range");
    if (seen[static_cast<std::size_t>(id)]) malformed("node " + std::to_string(id) + " reached twice (cycle)");
    seen[static_cast<std::size_t>(id)] = 1;
    const auto& node = nodes[static_cast<std::size_t>(id)];
    if (node.class_id < 0 || static_cast<std::size_t>(node.class_id) >= class_table.size()) {
      malformed("class id out of range at node " + std::to_string(id));
    }
    deepest = std::max(deepest, level);
    if (node.is_leaf()) {
      if (node.right >= 0) malformed("leaf with a right child at node " + std::to_string(id));
      continue;
    }
    if (node.weights.size() != d) malformed("weight length mismatch at node " + std::to_string(id));
    for (double w : node.weights) {
      if (!std::isfinite(w)) malformed("non-finite weight at node " + std::to_string(id));
    }
    if (!std::isfinite(node.threshold)) malformed("non-finite threshold");
    stack.push_back({node.right, level + 1});
    stack.push_back({node.left, level + 1});
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) malformed("unreachable node");
  if (deepest > depth) malformed("path longer than the declared depth");
}

double accuracy_on(const ObliquePolicyTree& tree, const LabeledDataset& data,
                   std::span<const std::size_t> rows) {
  if (rows.empty()) throw Error(ErrorKind::EmptyDataset, "no samples to score");
  std::size_t hits = 0;
  for (std::size_t r : rows) {
    const auto& s = data.samples[r];
    hits += tree.predict_class(s.features) == s.class_id ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

ObliquePolicyTree train(const LabeledDataset& data, const TrainConfig& cfg) {
  if (cfg.depth_grid.empty()) throw Error(ErrorKind::InvalidInstance, "empty depth grid");
  for (int depth : cfg.depth_grid) {
    if (depth < 1) throw Error(ErrorKind::InvalidInstance, "depths must be positive");
  }
  if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidInstance, "val_fraction must lie in (0, 1)");
  }
  if (cfg.min_leaf < 1) throw Error(ErrorKind::InvalidInstance, "min_leaf must be >= 1");
  if (data.samples.empty()) throw Error(ErrorKind::EmptyDataset, "no samples to train on");

  const std::size_t d = data.feature_names.size();
  const std::size_t k = data.class_table.size();
  for (const auto& s : data.samples) {
    if (s.features.size() != d) throw Error(ErrorKind::DimensionMismatch, "feature length mismatch");
    if (s.class_id < 0 || static_cast<std::size_t>(s.class_id) >= k) {
      throw Error(ErrorKind::DimensionMismatch, "sample label missing from the class table");
    }
  }
  const auto& first = data.samples.front();
  const bool identical = std::all_of(data.samples.begin(), data.samples.end(),
                                     [&](const Sample& s) { return s.features == first.features; });
  const bool conflicting = std::any_of(data.samples.begin(), data.samples.end(),
                                       [&](const Sample& s) { return s.class_id != first.class_id; });
  if (identical && conflicting) {
    throw Error(ErrorKind::DegenerateData, "all feature rows are identical but labels differ");
  }

  // Validation holds out whole instances (samples of one trajectory are
  // strongly correlated), shuffled, until val_fraction of the rows is reached.
  const std::size_t total = data.samples.size();
  std::vector<std::size_t> groups;
  for (const auto& s : data.samples) groups.push_back(s.instance);
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
  Rng rng(cfg.seed);
  for (std::size_t i = groups.size(); i > 1; --i) std::swap(groups[i - 1], groups[rng.below(i)]);
  const auto target = static_cast<std::size_t>(std::floor(cfg.val_fraction * total));
  std::vector<char> held(total, 0);
  std::size_t n_val = 0;
  if (groups.size() > 1) {
    std::vector<std::vector<std::size_t>> members;
    std::vector<std::size_t> slot(groups.size());
    std::vector<std::size_t> sorted_groups = groups;
    std::sort(sorted_groups.begin(), sorted_groups.end());
    members.resize(groups.size());
    for (std::size_t r = 0; r < total; ++r) {
      const auto it = std::lower_bound(sorted_groups.begin(), sorted_groups.end(),
                                       data.samples[r].instance);
      members[static_cast<std::size_t>(it - sorted_groups.begin())].push_back(r);
    }
    for (std::size_t g = 0; g + 1 < groups.size() && n_val < target; ++g) {
      const auto it = std::lower_bound(sorted_groups.begin(), sorted_groups.end(), groups[g]);
      for (std::size_t r : members[static_cast<std::size_t>(it - sorted_groups.begin())]) {
        held[r] = 1;
        ++n_val;
      }
    }
  } else {
    // One trajectory: fall back to a row split.
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = total; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t i = 0; i < target && i + 1 < total; ++i) {
      held[order[i]] = 1;
      ++n_val;
    }
  }
  std::vector<std::size_t> val_rows, train_rows;
  for (std::size_t r = 0; r < total; ++r) (held[r] ? val_rows : train_rows).push_back(r);
  if (val_rows.empty()) val_rows = train_rows;

  ObliquePolicyTree base;
  base.feature_names = data.feature_names;
  base.class_table = data.class_table;
  base.plan = data.plan;
  base.means.assign(d, 0.0);
  base.stds.assign(d, 0.0);
  const double nt = static_cast<double>(train_rows.size());
  for (std::size_t r : train_rows) {
    for (std::size_t j = 0; j < d; ++j) base.means[j] += data.samples[r].features[j];
  }
  for (double& m : base.means) m /= nt;
  for (std::size_t r : train_rows) {
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = data.samples[r].features[j] - base.means[j];
      base.stds[j] += dev * dev;
    }
  }
  for (double& s : base.stds) {
    s = std::sqrt(s / nt);
    if (!(s > 1e-12) || !std::isfinite(s)) s = 1.0;
  }

  std::vector<double> z(train_rows.size() * d);
  std::vector<int> y(train_rows.size());
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    const auto& s = data.samples[train_rows[i]];
    for (std::size_t j = 0; j < d; ++j) {
      z[i * d + j] = standardize(s.features[j], base.means[j], base.stds[j]);
    }
    y[i] = s.class_id;
  }
  std::vector<std::size_t> local(train_rows.size());
  std::iota(local.begin(), local.end(), std::size_t{0});

  const int max_depth = *std::max_element(cfg.depth_grid.begin(), cfg.depth_grid.end());
  auto grow = [&](bool oblique) {
    Builder b{z, y, d, k, max_depth, cfg, oblique, {}};
    b.build(local, 0, 1);
    ObliquePolicyTree t = base;
    t.nodes = std::move(b.nodes);
    t.depth = measure_depth(t.nodes, 0);
    return t;
  };
  const ObliquePolicyTree axis = grow(false);
  const ObliquePolicyTree oblique = cfg.axis_parallel_only ? axis : grow(true);

  TrainMeta meta;
  meta.seed = cfg.seed;
  meta.depth_grid = cfg.depth_grid;
  meta.min_leaf = cfg.min_leaf;
  meta.restarts_per_node = cfg.restarts_per_node;
  meta.axis_parallel_only = cfg.axis_parallel_only;
  meta.num_train = train_rows.size();
  meta.num_val = n_val;

  ObliquePolicyTree best;
  double best_val = -1.0;
  int best_depth = 0;
  for (int depth : cfg.depth_grid) {
    ObliquePolicyTree candidate = oblique.truncated(depth);
    double train_acc = accuracy_on(candidate, data, train_rows);
    if (!cfg.axis_parallel_only) {
      // Greedy oblique growth can lose to the axis-parallel tree it started
      // from; keep whichever fits the training split better.
      ObliquePolicyTree fallback = axis.truncated(depth);
      const double fallback_acc = accuracy_on(fallback, data, train_rows);
      if (fallback_acc > train_acc) {
        candidate = std::move(fallback);
        train_acc = fallback_acc;
      }
    }
    const double val_acc = accuracy_on(candidate, data, val_rows);
    meta.train_accuracy.push_back(train_acc);
    meta.val_accuracy.push_back(val_acc);
    if (val_acc > best_val || (val_acc == best_val && depth < best_depth)) {
      best_val = val_acc;
      best_depth = depth;
      best = std::move(candidate);
    }
  }
  meta.selected_depth = best_depth;
  best.train_meta = std::move(meta);
  return best;
}

nlohmann::json to_json(const ObliquePolicyTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& node : tree.nodes) {
    nlohmann::json jn = {{"class_id", node.class_id}};
    if (!node.is_leaf()) {
      jn["weights"] = node.weights;
      jn["threshold"] = node.threshold;
      jn["left"] = node.left;
      jn["right"] = node.right;
    }
    nodes.push_back(std::move(jn));
  }
  const auto& m = tree.train_meta;
  return {{"feature_names", tree.feature_names},
          {"standardization", {{"means", tree.means}, {"stds", tree.stds}}},
          {"nodes", std::move(nodes)},
          {"class_table", tree.class_table.controls()},
          {"depth", tree.depth},
          {"plan", tree.plan.to_json()},
          {"train_meta",
           {{"seed", m.seed},
            {"depth_grid", m.depth_grid},
            {"val_accuracy", m.val_accuracy},
            {"train_accuracy", m.train_accuracy},
            {"selected_depth", m.selected_depth},
            {"min_leaf", m.min_leaf},
            {"restarts_per_node", m.restarts_per_node},
            {"axis_parallel_only", m.axis_parallel_only},
            {"num_train", m.num_train},
            {"num_val", m.num_val}}}};
}

ObliquePolicyTree tree_from_json(const nlohmann::json& j) {
  ObliquePolicyTree tree;
  try {
    tree.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    tree.means = j.at("standardization").at("means").get<std::vector<double>>();
    tree.stds = j.at("standardization").at("stds").get<std::vector<double>>();
    std::vector<Control> controls = j.at("class_table").get<std::vector<Control>>();
    tree.class_table = ClassTable(controls);
    if (tree.class_table.controls() != controls) malformed("class table not in canonical order");
    tree.depth = j.at("depth").get<int>();
    for (const auto& jn : j.at("nodes")) {
      TreeNode node;
      node.class_id = jn.at("class_id").get<int>();
      if (jn.contains("left") || jn.contains("right")) {
        node.weights = jn.at("weights").get<std::vector<double>>();
        node.threshold = jn.at("threshold").get<double>();
        node.left = jn.at("left").get<int>();
        node.right = jn.at("right").get<int>();
        if (node.left < 0 || node.right < 0) malformed("internal node with a negative link");
      }
      tree.nodes.push_back(std::move(node));
    }
    if (j.contains("plan")) {
      try {
        tree.plan = AugmentationPlan::from_json(j.at("plan"));
      } catch (const Error& e) {
        malformed(e.what());
      }
    }
    if (j.contains("train_meta")) {
      const auto& jm = j.at("train_meta");
      auto& m = tree.train_meta;
      m.seed = jm.value("seed", std::uint64_t{0});
      m.depth_grid = jm.value("depth_grid", std::vector<int>{});
      m.val_accuracy = jm.value("val_accuracy", std::vector<double>{});
      m.train_accuracy = jm.value("train_accuracy", std::vector<double>{});
      m.selected_depth = jm.value("selected_depth", 0);
      m.min_leaf = jm.value("min_leaf", 0);
      m.restarts_per_node = jm.value("restarts_per_node", 0);
      m.axis_parallel_only = jm.value("axis_parallel_only", false);
      m.num_train = jm.value("num_train", std::size_t{0});
      m.num_val = jm.value("num_val", std::size_t{0});
    }
  } catch (const nlohmann::json::exception& e) {
    malformed(std::string("model schema: ") + e.what());
  }
  const std::size_t n = tree.feature_names.size() - std::min(tree.feature_names.size(),
                                                             1 + tree.plan.terms.size());
  if (tree.plan.num_features(n) != tree.feature_names.size()) {
    malformed("plan does not match the feature names");
  }
  tree.check();
  return tree;
}

void save(const ObliquePolicyTree& tree, const std::filesystem::path& path) {
  io::write_json(path, to_json(tree));
}

ObliquePolicyTree load(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = io::read_json(path);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Io && std::filesystem::exists(path)) malformed(e.what());
    throw;
  }
  return tree_from_json(j);
}

}  // namespace frmab
