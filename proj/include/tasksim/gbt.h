// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

// Exact-greedy gradient-boosted regression trees with squared-error loss.
//
// Each round fits one tree to g_i = yhat_i - y_i, h_i = 1. A node with
// gradient/hessian sums (G, H) splits where
//
//   gain = 1/2 [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)]
//          - gamma
//
// is largest and positive; leaves carry -G/(H+lambda) and the ensemble adds
// eta times the tree output. Rows with x[f] < threshold go left. Candidate
// thresholds are midpoints between consecutive distinct values; ties in gain
// keep the lowest feature index, then the lowest threshold.

#ifndef TASKSIM_GBT_H_
#define TASKSIM_GBT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tasksim {

struct GbtConfig {
  int rounds = 100;
  int max_depth = 3;
  double eta = 0.1;
  double lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;
  // Defaults to the mean label.
  std::optional<double> base_score;
  std::uint64_t seed = 0;

  void Validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double leaf = 0.0;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double Predict(std::span<const double> features) const;
  int Depth() const;
  friend bool operator==(const RegressionTree&,
                         const RegressionTree&) = default;
};

struct GradientBoostedEnsemble {
  double base_score = 0.0;
  double eta = 1.0;
  std::size_t n_features = 0;
  std::vector<RegressionTree> trees;

  // base_score + eta * sum of tree outputs. Throws on dimension mismatch.
  double PredictRaw(std::span<const double> features) const;
  // PredictRaw clamped into [0, 1] for reporting.
  double Predict(std::span<const double> features) const;

  std::string ToJson() const;
  static GradientBoostedEnsemble FromJson(std::string_view text);
  friend bool operator==(const GradientBoostedEnsemble&,
                         const GradientBoostedEnsemble&) = default;
};

// Dense row-major design matrix.
struct Dataset {
  std::size_t n_features = 0;
  std::vector<double> x;
  std::vector<double> y;

  std::size_t rows() const { return y.size(); }
  std::span<const double> row(std::size_t i) const {
    return {x.data() + i * n_features, n_features};
  }
  void AddRow(std::span<const double> features, double label);
  void Validate() const;
};

struct SplitCandidate {
  int feature = -1;  // -1: no split with positive gain
  double threshold = 0.0;
  double gain = 0.0;
  double grad_left = 0.0;
  double hess_left = 0.0;
  double grad_right = 0.0;
  double hess_right = 0.0;
};

// Reference split search for one node: sorts the node's rows per feature and
// scans every candidate threshold. Serial and allocation-heavy; the fitter
// uses a presorted parallel version and tests hold the two equal.
SplitCandidate FindBestSplitReference(const Dataset& data,
                                      std::span<const double> grad,
                                      std::span<const double> hess,
                                      std::span<const std::size_t> rows,
                                      const GbtConfig& cfg);

struct FitOptions {
  // OpenMP threads for the per-feature split search.
  int jobs = 1;
  // Use FindBestSplitReference for every node instead of the presorted path.
  bool reference_split_search = false;
};

struct FitTrace {
  // Training RMSE before any tree (index 0) and after each round.
  std::vector<double> train_rmse;
};

GradientBoostedEnsemble FitGbt(const Dataset& data, const GbtConfig& cfg,
                               const FitOptions& options = {},
                               FitTrace* trace = nullptr);

void WriteModel(const GradientBoostedEnsemble& model,
                const std::filesystem::path& path);
GradientBoostedEnsemble ReadModel(const std::filesystem::path& path);

}  // namespace tasksim

#endif  // TASKSIM_GBT_H_
