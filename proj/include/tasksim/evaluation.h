// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef TASKSIM_EVALUATION_H_
#define TASKSIM_EVALUATION_H_

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tasksim/regressor.h"

namespace tasksim {

// How the RMSE@k population is ranked: one global ranking of the whole
// prediction pool, or the top k of every target pooled together.
enum class RankingScope { kGlobal, kPerTarget };

struct RmseCurveRow {
  FeatureMode mode = FeatureMode::kF1;
  std::size_t k = 0;
  double rmse = 0.0;
};

using PredictionsByMode = std::map<FeatureMode, std::vector<CvPrediction>>;

std::vector<RmseCurveRow> RmseCurve(const PredictionsByMode& predictions,
                                    std::span<const std::size_t> ks,
                                    RankingScope scope = RankingScope::kGlobal);

// ceil(f * pool_size) for each fraction, deduplicated, ascending.
std::vector<std::size_t> KsFromFractions(std::size_t pool_size,
                                         std::span<const double> fractions);

// Measured runtimes of every combined run, keyed by (source, target).
using PairRuntimes =
    std::map<std::pair<std::string, std::string>, std::vector<double>>;

// What one "try" at depth k trains: the whole hyperparameter grid of a pair,
// or one run.
enum class BudgetUnit { kPairCollapsed, kPerRun };

struct BudgetCurvePoint {
  std::size_t k = 0;
  double mean_best_f1 = 0.0;
  double cumulative_runtime_seconds = 0.0;
};

struct BudgetCurve {
  FeatureMode mode = FeatureMode::kF1;
  std::vector<BudgetCurvePoint> points;
  // Mean over targets of the best actual F1 over all candidates.
  double oracle_f1 = 0.0;
  double full_runtime_seconds = 0.0;
};

// Per target, candidates are ranked by predicted F1 (descending, ties by
// source id); depth k tries the first k. Throws ValidationError if a
// prediction has no run in `runtimes`. `ks` empty means 1..max candidates.
BudgetCurve BudgetSearch(std::span<const CvPrediction> predictions,
                         const PairRuntimes& runtimes,
                         std::span<const std::size_t> ks = {},
                         BudgetUnit unit = BudgetUnit::kPairCollapsed);

struct ToleranceResult {
  double f1_loss_tolerance = 0.0;
  std::size_t k = 0;
  double mean_best_f1 = 0.0;
  double runtime_seconds = 0.0;
  double runtime_reduction_pct = 0.0;
};

// For each tolerance t, the smallest depth whose mean_best_f1 reaches
// (1 - t) * oracle, and the runtime saved relative to the full grid.
std::vector<ToleranceResult> RuntimeReductions(
    const BudgetCurve& curve, std::span<const double> tolerances);

inline constexpr double kDefaultTolerances[] = {0.0, 0.05, 0.10};

std::string SerializeRmseCurve(std::span<const RmseCurveRow> rows);
std::string SerializeBudgetCurves(std::span<const BudgetCurve> curves);

struct ReportInputs {
  std::vector<RmseCurveRow> rmse_curve;
  std::vector<BudgetCurve> budget_curves;
  std::vector<double> tolerances = {0.0, 0.05, 0.10};
  // Extra top-level summary fields, already JSON-encoded.
  std::map<std::string, std::string> extra_summary_json;
  // Manifest lines (seeds, configs) and files whose hashes are recorded.
  std::vector<std::string> manifest_lines;
  std::vector<std::filesystem::path> hashed_inputs;
};

// Summary document as written to summary.json.
std::string SerializeSummary(const ReportInputs& inputs);

// Writes rmse_curve.csv, budget_curve.csv, summary.json and manifest.txt to
// `out_dir`; returns their paths.
std::vector<std::filesystem::path> WriteReport(
    const ReportInputs& inputs, const std::filesystem::path& out_dir);

}  // namespace tasksim

#endif  // TASKSIM_EVALUATION_H_
