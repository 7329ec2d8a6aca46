// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#include "tasksim/gbt.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

#include "json.hpp"
#include "tasksim/common.h"
#include "tasksim/parallel.h"
#include "tasksim/text_io.h"

namespace tasksim {

using nlohmann::json;

void GbtConfig::Validate() const {
  if (rounds < 0) throw ValidationError("rounds must be >= 0");
  if (max_depth < 0) throw ValidationError("max_depth must be >= 0");
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw ValidationError(fmt::format("eta must be in (0,1], got {}", eta));
  }
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
  if (!(gamma >= 0.0)) throw ValidationError("gamma must be >= 0");
  if (!(min_child_weight >= 0.0)) {
    throw ValidationError("min_child_weight must be >= 0");
  }
  if (base_score && !std::isfinite(*base_score)) {
    throw ValidationError("base_score must be finite");
  }
}

double RegressionTree::Predict(std::span<const double> features) const {
  if (nodes.empty()) return 0.0;
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(
        features[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left
                                                                    : n.right);
  }
  return nodes[i].leaf;
}

int RegressionTree::Depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> depth(nodes.size(), 0);
  int max_depth = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    max_depth = std::max(max_depth, depth[i]);
    if (!nodes[i].is_leaf()) {
      depth[static_cast<std::size_t>(nodes[i].left)] = depth[i] + 1;
      depth[static_cast<std::size_t>(nodes[i].right)] = depth[i] + 1;
    }
  }
  return max_depth;
}

double GradientBoostedEnsemble::PredictRaw(
    std::span<const double> features) const {
  if (features.size() != n_features) {
    throw ValidationError(fmt::format("model expects {} features, got {}",
                                      n_features, features.size()));
  }
  double sum = 0.0;
  for (const auto& tree : trees) sum += tree.Predict(features);
  return base_score + eta * sum;
}

double GradientBoostedEnsemble::Predict(
    std::span<const double> features) const {
  return std::clamp(PredictRaw(features), 0.0, 1.0);
}

std::string GradientBoostedEnsemble::ToJson() const {
  json j;
  j["base_score"] = base_score;
  j["eta"] = eta;
  j["n_features"] = n_features;
  j["trees"] = json::array();
  for (const auto& tree : trees) {
    json nodes = json::array();
    for (const auto& n : tree.nodes) {
      if (n.is_leaf()) {
        nodes.push_back({{"leaf", n.leaf}});
      } else {
        nodes.push_back({{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right}});
      }
    }
    j["trees"].push_back({{"nodes", nodes}});
  }
  return j.dump(1);
}

GradientBoostedEnsemble GradientBoostedEnsemble::FromJson(
    std::string_view text) {
  GradientBoostedEnsemble model;
  try {
    auto j = json::parse(text);
    model.base_score = j.at("base_score").get<double>();
    model.eta = j.at("eta").get<double>();
    model.n_features = j.at("n_features").get<std::size_t>();
    for (const auto& t : j.at("trees")) {
      RegressionTree tree;
      for (const auto& n : t.at("nodes")) {
        TreeNode node;
        if (n.contains("leaf")) {
          node.leaf = n.at("leaf").get<double>();
        } else {
          node.feature = n.at("feature").get<int>();
          node.threshold = n.at("threshold").get<double>();
          node.left = n.at("left").get<int>();
          node.right = n.at("right").get<int>();
        }
        tree.nodes.push_back(node);
      }
      model.trees.push_back(std::move(tree));
    }
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("bad model JSON: {}", e.what()));
  }
  for (const auto& tree : model.trees) {
    for (const auto& n : tree.nodes) {
      if (n.is_leaf()) continue;
      const auto size = static_cast<int>(tree.nodes.size());
      if (static_cast<std::size_t>(n.feature) >= model.n_features ||
          n.left <= 0 || n.right <= 0 || n.left >= size || n.right >= size) {
        throw ValidationError("model JSON has an invalid node");
      }
    }
  }
  return model;
}

void Dataset::AddRow(std::span<const double> features, double label) {
  if (y.empty() && n_features == 0) n_features = features.size();
  if (features.size() != n_features) {
    throw ValidationError(fmt::format("row has {} features, dataset has {}",
                                      features.size(), n_features));
  }
  x.insert(x.end(), features.begin(), features.end());
  y.push_back(label);
}

void Dataset::Validate() const {
  if (x.size() != y.size() * n_features) {
    throw ValidationError("dataset matrix shape mismatch");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw ValidationError(fmt::format("non-finite feature at row {} col {}",
                                        i / n_features, i % n_features));
    }
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) {
      throw ValidationError(fmt::format("non-finite label at row {}", i));
    }
  }
}

namespace {

double Score(double g, double h, double lambda) { return g * g / (h + lambda); }

double Midpoint(double lo, double hi) {
  double mid = lo + (hi - lo) / 2.0;
  // Adjacent doubles can round the midpoint down onto `lo`, which would put
  // `lo` on the right-hand side.
  return mid > lo ? mid : hi;
}

// Scans one feature's rows, already in ascending (value, row) order.
// `grad_total`/`hess_total` are the node sums in ascending row order so that
// every search path computes identical right-hand sums.
SplitCandidate ScanFeature(int feature, std::span<const double> values,
                           std::span<const double> grad,
                           std::span<const double> hess, double grad_total,
                           double hess_total, const GbtConfig& cfg) {
  SplitCandidate best;
  const double parent = Score(grad_total, hess_total, cfg.lambda);
  double gl = 0.0;
  double hl = 0.0;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    gl += grad[i];
    hl += hess[i];
    if (values[i] == values[i + 1]) continue;
    const double gr = grad_total - gl;
    const double hr = hess_total - hl;
    if (hl < cfg.min_child_weight || hr < cfg.min_child_weight) continue;
    const double gain =
        0.5 * (Score(gl, hl, cfg.lambda) + Score(gr, hr, cfg.lambda) - parent) -
        cfg.gamma;
    if (gain > best.gain) {
      best = {feature, Midpoint(values[i], values[i + 1]), gain, gl, hl, gr,
              hr};
    }
  }
  return best;
}

struct NodeTotals {
  double grad = 0.0;
  double hess = 0.0;
};

NodeTotals Totals(std::span<const double> grad, std::span<const double> hess,
                  std::span<const std::size_t> rows) {
  NodeTotals t;
  for (auto r : rows) {
    t.grad += grad[r];
    t.hess += hess[r];
  }
  return t;
}

// Ties across features keep the lower index: candidates are visited in
// feature order and only a strictly larger gain replaces the incumbent.
SplitCandidate Reduce(std::span<const SplitCandidate> per_feature) {
  SplitCandidate best;
  for (const auto& c : per_feature) {
    if (c.feature >= 0 && c.gain > best.gain) best = c;
  }
  return best;
}

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, std::span<const double> grad,
              std::span<const double> hess, const GbtConfig& cfg,
              const FitOptions& options,
              const std::vector<std::vector<std::size_t>>& presorted)
      : data_(data),
        grad_(grad),
        hess_(hess),
        cfg_(cfg),
        options_(options),
        presorted_(presorted),
        in_node_(data.rows(), 0) {}

  RegressionTree Build() {
    std::vector<std::size_t> rows(data_.rows());
    std::iota(rows.begin(), rows.end(), 0);
    RegressionTree tree;
    Grow(tree, rows, 0);
    return tree;
  }

 private:
  SplitCandidate FindSplit(std::span<const std::size_t> rows) {
    if (options_.reference_split_search) {
      return FindBestSplitReference(data_, grad_, hess_, rows, cfg_);
    }
    const auto totals = Totals(grad_, hess_, rows);
    for (auto r : rows) in_node_[r] = 1;
    std::vector<SplitCandidate> per_feature(data_.n_features);
    ParallelFor(data_.n_features, options_.jobs, [&](std::size_t f) {
      std::vector<double> values;
      std::vector<double> g;
      std::vector<double> h;
      values.reserve(rows.size());
      g.reserve(rows.size());
      h.reserve(rows.size());
      for (auto r : presorted_[f]) {
        if (!in_node_[r]) continue;
        values.push_back(data_.x[r * data_.n_features + f]);
        g.push_back(grad_[r]);
        h.push_back(hess_[r]);
      }
      per_feature[f] = ScanFeature(static_cast<int>(f), values, g, h,
                                   totals.grad, totals.hess, cfg_);
    });
    for (auto r : rows) in_node_[r] = 0;
    return Reduce(per_feature);
  }

  int Grow(RegressionTree& tree, const std::vector<std::size_t>& rows,
           int depth) {
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    SplitCandidate split;
    if (depth < cfg_.max_depth && rows.size() >= 2) split = FindSplit(rows);
    if (split.feature < 0) {
      const auto totals = Totals(grad_, hess_, rows);
      tree.nodes[index].leaf = -totals.grad / (totals.hess + cfg_.lambda);
      return index;
    }
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (auto r : rows) {
      const double v =
          data_.x[r * data_.n_features + static_cast<std::size_t>(split.feature)];
      (v < split.threshold ? left : right).push_back(r);
    }
    const int l = Grow(tree, left, depth + 1);
    const int r = Grow(tree, right, depth + 1);
    auto& node = tree.nodes[index];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return index;
  }

  const Dataset& data_;
  std::span<const double> grad_;
  std::span<const double> hess_;
  const GbtConfig& cfg_;
  const FitOptions& options_;
  const std::vector<std::vector<std::size_t>>& presorted_;
  std::vector<char> in_node_;
};

double TrainRmse(std::span<const double> pred, std::span<const double> y) {
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sum += (pred[i] - y[i]) * (pred[i] - y[i]);
  }
  return std::sqrt(sum / static_cast<double>(y.size()));
}

}  // namespace

SplitCandidate FindBestSplitReference(const Dataset& data,
                                      std::span<const double> grad,
                                      std::span<const double> hess,
                                      std::span<const std::size_t> rows,
                                      const GbtConfig& cfg) {
  std::vector<std::size_t> ordered(rows.begin(), rows.end());
  std::sort(ordered.begin(), ordered.end());
  const auto totals = Totals(grad, hess, ordered);
  std::vector<SplitCandidate> per_feature;
  for (std::size_t f = 0; f < data.n_features; ++f) {
    auto by_value = ordered;
    std::stable_sort(by_value.begin(), by_value.end(),
                     [&](std::size_t a, std::size_t b) {
                       return data.x[a * data.n_features + f] <
                              data.x[b * data.n_features + f];
                     });
    std::vector<double> values;
    std::vector<double> g;
    std::vector<double> h;
    for (auto r : by_value) {
      values.push_back(data.x[r * data.n_features + f]);
      g.push_back(grad[r]);
      h.push_back(hess[r]);
    }
    per_feature.push_back(ScanFeature(static_cast<int>(f), values, g, h,
                                      totals.grad, totals.hess, cfg));
  }
  return Reduce(per_feature);
}

GradientBoostedEnsemble FitGbt(const Dataset& data, const GbtConfig& cfg,
                               const FitOptions& options, FitTrace* trace) {
  cfg.Validate();
  data.Validate();
  if (data.rows() < 2) {
    throw ValidationError(
        fmt::format("need at least 2 samples, got {}", data.rows()));
  }
  const std::size_t n = data.rows();

  GradientBoostedEnsemble model;
  model.eta = cfg.eta;
  model.n_features = data.n_features;
  model.base_score =
      cfg.base_score.value_or(std::accumulate(data.y.begin(), data.y.end(), 0.0) /
                              static_cast<double>(n));

  std::vector<std::vector<std::size_t>> presorted(data.n_features);
  if (!options.reference_split_search) {
    for (std::size_t f = 0; f < data.n_features; ++f) {
      auto& order = presorted[f];
      order.resize(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) {
                         return data.x[a * data.n_features + f] <
                                data.x[b * data.n_features + f];
                       });
    }
  }

  std::vector<double> pred(n, model.base_score);
  std::vector<double> grad(n);
  std::vector<double> hess(n, 1.0);
  if (trace) trace->train_rmse = {TrainRmse(pred, data.y)};
  for (int round = 0; round < cfg.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = pred[i] - data.y[i];
    TreeBuilder builder(data, grad, hess, cfg, options, presorted);
    auto tree = builder.Build();
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] += cfg.eta * tree.Predict(data.row(i));
    }
    model.trees.push_back(std::move(tree));
    if (trace) trace->train_rmse.push_back(TrainRmse(pred, data.y));
  }
  return model;
}

void WriteModel(const GradientBoostedEnsemble& model,
                const std::filesystem::path& path) {
  WriteFileAtomic(path, model.ToJson() + "\n");
}

GradientBoostedEnsemble ReadModel(const std::filesystem::path& path) {
  return GradientBoostedEnsemble::FromJson(ReadFile(path));
}

}  // namespace tasksim
