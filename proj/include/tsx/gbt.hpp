#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "tsx/common.hpp"
#include "tsx/features.hpp"

namespace tsx::gbt {

struct GbtHyperParams {
  int n_trees = 600;
  int max_depth = 3;
  double learning_rate = 0.05;
  double row_subsample = 0.9;
  double col_subsample = 0.9;
  double l2_leaf = 1.0;  // lambda in the gain / leaf-weight formulas
  double min_split_gain = 0.0;
  int min_samples_leaf = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_trees < 0) throw ValidationError("GbtHyperParams: n_trees must be >= 0");
    if (max_depth < 0) throw ValidationError("GbtHyperParams: max_depth must be >= 0");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw ValidationError("GbtHyperParams: learning_rate must be >= 0");
    if (!(row_subsample > 0.0 && row_subsample <= 1.0)) throw ValidationError("GbtHyperParams: row_subsample must be in (0,1]");
    if (!(col_subsample > 0.0 && col_subsample <= 1.0)) throw ValidationError("GbtHyperParams: col_subsample must be in (0,1]");
    if (!(l2_leaf >= 0.0)) throw ValidationError("GbtHyperParams: l2_leaf must be >= 0");
    if (!(min_split_gain >= 0.0)) throw ValidationError("GbtHyperParams: min_split_gain must be >= 0");
    if (min_samples_leaf < 1) throw ValidationError("GbtHyperParams: min_samples_leaf must be >= 1");
  }
};

/// Flat node record. Leaves have feature == -1.
/// Internal nodes send x[feature] < threshold left, everything else right.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  double cover = 0.0;

  bool is_leaf() const { return feature < 0; }
};

/// Binary regression tree; node 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  std::size_t leaf_index(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
      const auto& n = nodes[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
    }
    return i;
  }

  double predict(std::span<const double> x) const { return nodes[leaf_index(x)].value; }

  int depth(std::size_t i = 0) const {
    const auto& n = nodes[i];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth(static_cast<std::size_t>(n.left)), depth(static_cast<std::size_t>(n.right)));
  }
};

/// prediction = base_score + learning_rate * sum of tree outputs.
struct GbtModel {
  double base_score = 0.0;
  double learning_rate = 0.05;
  std::vector<std::string> columns;
  std::vector<Tree> trees;

  std::size_t n_features() const { return columns.size(); }

  double predict(std::span<const double> row) const {
    if (row.size() != columns.size())
      throw ValidationError("GbtModel::predict: row has " + std::to_string(row.size()) + " values, model expects " +
                            std::to_string(columns.size()));
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(row);
    return base_score + learning_rate * s;
  }

  std::vector<double> predict_batch(const features::FeatureMatrix& fm) const {
    if (fm.cols() != columns.size()) throw ValidationError("GbtModel::predict_batch: column count mismatch");
    std::vector<double> out(fm.rows());
    for (std::size_t i = 0; i < fm.rows(); ++i) out[i] = predict(fm.row(i));
    return out;
  }
};

/// Train RMSE before any tree (index 0) and after each boosting round.
struct TrainingTrace {
  std::vector<double> rmse;
};

namespace detail {

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const features::FeatureMatrix& x, std::span<const double> grad, const GbtHyperParams& hp,
              std::vector<std::size_t> features)
      : x_(x), grad_(grad), hp_(hp), features_(std::move(features)) {}

  Tree build(std::vector<std::size_t> rows) {
    Tree tree;
    grow(tree, std::move(rows), 0);
    return tree;
  }

 private:
  double score(double g, double h) const { return g * g / (h + hp_.l2_leaf); }

  int grow(Tree& tree, std::vector<std::size_t> rows, int depth) {
    double g = 0.0;
    for (std::size_t r : rows) g += grad_[r];
    const auto h = static_cast<double>(rows.size());
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{});
    tree.nodes[static_cast<std::size_t>(id)].cover = h;
    tree.nodes[static_cast<std::size_t>(id)].value = -g / (h + hp_.l2_leaf);

    if (depth >= hp_.max_depth) return id;
    const SplitCandidate best = find_split(rows, g, h);
    if (best.feature < 0 || !(best.gain > hp_.min_split_gain)) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) (x_.at(r, static_cast<std::size_t>(best.feature)) < best.threshold ? left : right).push_back(r);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.value = 0.0;
    const int l = grow(tree, std::move(left), depth + 1);
    const int r = grow(tree, std::move(right), depth + 1);
    tree.nodes[static_cast<std::size_t>(id)].left = l;
    tree.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  // Exact greedy search. Features are scanned in ascending index and
  // thresholds ascending; only a strictly larger gain replaces the incumbent.
  SplitCandidate find_split(const std::vector<std::size_t>& rows, double g_total, double h_total) const {
    SplitCandidate best;
    const double parent = score(g_total, h_total);
    const auto min_leaf = static_cast<std::size_t>(hp_.min_samples_leaf);
    std::vector<std::pair<double, double>> vals(rows.size());
    for (std::size_t f : features_) {
      for (std::size_t i = 0; i < rows.size(); ++i) vals[i] = {x_.at(rows[i], f), grad_[rows[i]]};
      std::sort(vals.begin(), vals.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      double gl = 0.0;
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        gl += vals[i].second;
        if (vals[i].first == vals[i + 1].first) continue;
        const std::size_t nl = i + 1;
        const std::size_t nr = vals.size() - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double hl = static_cast<double>(nl);
        const double gain = 0.5 * (score(gl, hl) + score(g_total - gl, h_total - hl) - parent);
        if (best.feature < 0 || gain > best.gain) {
          double thr = 0.5 * (vals[i].first + vals[i + 1].first);
          if (!(thr > vals[i].first)) thr = vals[i + 1].first;
          best = {static_cast<int>(f), thr, gain};
        }
      }
    }
    return best;
  }

  const features::FeatureMatrix& x_;
  std::span<const double> grad_;
  const GbtHyperParams& hp_;
  std::vector<std::size_t> features_;
};

inline double rmse(std::span<const double> pred, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (pred[i] - y[i]) * (pred[i] - y[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

}  // namespace detail

/// Squared-error boosting with second-order split gain and L2 leaf penalty.
/// A fresh row subsample (without replacement) and column subsample is drawn
/// for every tree from a stream derived from (seed, round).
inline GbtModel fit_gbt(const features::FeatureMatrix& train, const GbtHyperParams& hp, TrainingTrace* trace = nullptr) {
  hp.validate();
  if (train.rows() == 0 || train.cols() == 0) throw ValidationError("fit_gbt: empty training matrix");
  const auto& y = train.target;
  const std::size_t n = train.rows();
  const std::size_t p = train.cols();

  GbtModel model;
  model.columns = train.columns;
  model.learning_rate = hp.learning_rate;
  model.base_score = tsx::mean(y);

  std::vector<double> pred(n, model.base_score);
  if (trace) trace->rmse = {detail::rmse(pred, y)};

  const bool constant_target = std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); });
  if (constant_target || hp.max_depth == 0) {
    if (trace) trace->rmse.resize(static_cast<std::size_t>(hp.n_trees) + 1, trace->rmse.front());
    return model;
  }

  const auto n_rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(hp.row_subsample * static_cast<double>(n))));
  const auto n_cols = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(hp.col_subsample * static_cast<double>(p))));
  std::vector<double> grad(n);
  for (int round = 0; round < hp.n_trees; ++round) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = pred[i] - y[i];
    Rng rng(derive_seed(hp.seed, static_cast<std::uint64_t>(round)));
    auto rows = rng.sample_without_replacement(n, std::min(n_rows, n));
    auto cols = rng.sample_without_replacement(p, std::min(n_cols, p));
    detail::TreeBuilder builder(train, grad, hp, std::move(cols));
    Tree tree = builder.build(std::move(rows));
    for (std::size_t i = 0; i < n; ++i) pred[i] += hp.learning_rate * tree.predict(train.row(i));
    model.trees.push_back(std::move(tree));
    if (trace) trace->rmse.push_back(detail::rmse(pred, y));
  }
  return model;
}

inline std::vector<double> predict_batch(const GbtModel& model, const features::FeatureMatrix& fm) {
  return model.predict_batch(fm);
}

// --- serialization --------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json to_json(const GbtModel& m) {
  nlohmann::json j;
  j["format"] = "tsx-gbt";
  j["version"] = kModelFormatVersion;
  j["base_score"] = m.base_score;
  j["learning_rate"] = m.learning_rate;
  j["columns"] = m.columns;
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const auto& t : m.trees) {
    nlohmann::json jt;
    std::vector<int> feature, left, right;
    std::vector<double> threshold, value, cover;
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.value);
      cover.push_back(n.cover);
    }
    jt["feature"] = feature;
    jt["threshold"] = threshold;
    jt["left"] = left;
    jt["right"] = right;
    jt["value"] = value;
    jt["cover"] = cover;
    trees.push_back(std::move(jt));
  }
  return j;
}

inline GbtModel gbt_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "tsx-gbt") throw DataError("model JSON: not a tsx-gbt document");
  if (j.value("version", 0) != kModelFormatVersion)
    throw DataError("model JSON: unsupported version " + std::to_string(j.value("version", 0)));
  GbtModel m;
  m.base_score = j.at("base_score").get<double>();
  m.learning_rate = j.at("learning_rate").get<double>();
  m.columns = j.at("columns").get<std::vector<std::string>>();
  for (const auto& jt : j.at("trees")) {
    const auto feature = jt.at("feature").get<std::vector<int>>();
    const auto threshold = jt.at("threshold").get<std::vector<double>>();
    const auto left = jt.at("left").get<std::vector<int>>();
    const auto right = jt.at("right").get<std::vector<int>>();
    const auto value = jt.at("value").get<std::vector<double>>();
    const auto cover = jt.at("cover").get<std::vector<double>>();
    const std::size_t k = feature.size();
    if (threshold.size() != k || left.size() != k || right.size() != k || value.size() != k || cover.size() != k || k == 0)
      throw DataError("model JSON: inconsistent node arrays");
    Tree t;
    for (std::size_t i = 0; i < k; ++i) {
      if (feature[i] >= static_cast<int>(m.columns.size())) throw DataError("model JSON: feature index out of range");
      if (feature[i] >= 0 && (left[i] <= static_cast<int>(i) || right[i] <= static_cast<int>(i) ||
                              left[i] >= static_cast<int>(k) || right[i] >= static_cast<int>(k)))
        throw DataError("model JSON: bad child index");
      t.nodes.push_back({feature[i], threshold[i], left[i], right[i], value[i], cover[i]});
    }
    m.trees.push_back(std::move(t));
  }
  return m;
}

}  // namespace tsx::gbt
