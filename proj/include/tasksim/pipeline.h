// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

// Stage orchestration: corpus -> single-task grid -> transfer grid ->
// attribution -> ANSAT -> regression -> evaluation -> report. Every stage
// reads and writes plain files under one output directory and records the
// SHA-256 of its inputs and outputs in `stages.json`.

#ifndef TASKSIM_PIPELINE_H_
#define TASKSIM_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tasksim/ansat.h"
#include "tasksim/attribution.h"
#include "tasksim/classifier.h"
#include "tasksim/evaluation.h"
#include "tasksim/gbt.h"
#include "tasksim/regressor.h"
#include "tasksim/synthetic.h"

namespace tasksim {

enum class RegressionRows { kPerRun, kBestPerPair };

struct PipelineConfig {
  std::uint64_t seed = 1;
  int jobs = 1;

  // Exactly one corpus source: a JSONL path (with optional split CSV) or
  // the synthetic generator.
  std::optional<std::string> corpus_path;
  std::optional<std::string> split_path;
  SyntheticConfig synthetic;
  double test_fraction = 0.3;

  std::vector<double> learning_rates = {0.5, 1.0};
  std::vector<int> epochs = {1, 2};
  std::vector<int> batch_sizes = {8, 32};
  ModelDims dims;
  double init_scale = 0.1;
  bool save_pair_checkpoints = false;
  // Transfer runs keep the source embeddings and hidden layer but draw a
  // fresh output layer for the target task.
  bool reset_head = false;

  IGConfig ig;
  TatGrid tat = TatGrid::Default();
  Split ansat_split = Split::kTest;

  GbtConfig gbt;
  std::vector<FeatureMode> feature_modes = {FeatureMode::kF1,
                                            FeatureMode::kF1Ansat};
  RegressionRows regression_rows = RegressionRows::kPerRun;
  std::vector<double> rmse_k_fractions = {0.1, 0.2, 0.3, 0.4, 0.5,
                                          0.6, 0.7, 0.8, 0.9, 1.0};
  RankingScope ranking = RankingScope::kGlobal;
  BudgetUnit budget_unit = BudgetUnit::kPairCollapsed;
  std::vector<double> tolerances = {0.0, 0.05, 0.10};

  // Pipeline gate on the attribution stage.
  double max_mean_completeness_gap = 1e-3;

  void Validate() const;
  std::vector<Hyperparams> Grid() const;
  // The generator config with the global seed applied.
  SyntheticConfig SeededSynthetic() const;
};

// JSON round trip. Unknown keys are rejected so that typos fail loudly.
PipelineConfig ParsePipelineConfig(std::string_view json_text);
PipelineConfig LoadPipelineConfig(const std::filesystem::path& path);
std::string PipelineConfigToJson(const PipelineConfig& config);

// Eight tasks on a ring with graded vocabulary overlap (0.30 to neighbours,
// 0.15 at distance two, 0.05 at distance three).
PipelineConfig ReferenceConfig(std::uint64_t seed = 1);

enum class Stage {
  kSynth,
  kTrainSingles,
  kTrainPairs,
  kAttribute,
  kAnsat,
  kFit,
  kEvaluate,
  kReport,
};
std::string_view StageName(Stage stage);
Stage ParseStage(std::string_view name);
inline constexpr Stage kAllStages[] = {
    Stage::kSynth,    Stage::kTrainSingles, Stage::kTrainPairs,
    Stage::kAttribute, Stage::kAnsat,       Stage::kFit,
    Stage::kEvaluate, Stage::kReport};

// Artifact names inside the output directory.
namespace artifacts {
inline constexpr char kCorpus[] = "corpus.jsonl";
inline constexpr char kSplit[] = "split.csv";
inline constexpr char kSinglesLedger[] = "singles_ledger.csv";
inline constexpr char kSinglesBest[] = "singles_best.csv";
inline constexpr char kPairsLedger[] = "pairs_ledger.csv";
inline constexpr char kTimings[] = "timings.csv";
inline constexpr char kAttributionDir[] = "attr";
inline constexpr char kAttributionSummary[] = "attribution_summary.json";
inline constexpr char kAnsat[] = "ansat.csv";
inline constexpr char kPredictions[] = "predictions.csv";
inline constexpr char kModelsDir[] = "models";
inline constexpr char kTransfer[] = "transfer_gain.csv";
inline constexpr char kRmseCurve[] = "rmse_curve.csv";
inline constexpr char kBudgetCurve[] = "budget_curve.csv";
inline constexpr char kSummary[] = "summary.json";
inline constexpr char kManifest[] = "manifest.txt";
inline constexpr char kStages[] = "stages.json";
}  // namespace artifacts

// `attr_<task>.jsonl`.
std::string AttributionFileName(const std::string& task);

// Ledger CSV:
// run_id,target,source,lr,epochs,batch,seed,runtime_seconds,positive_f1,
// accuracy,checkpoint_path
struct LedgerRow {
  std::string run_id;
  TrainRun run;
};
inline constexpr char kLedgerHeader[] =
    "run_id,target,source,lr,epochs,batch,seed,runtime_seconds,positive_f1,"
    "accuracy,checkpoint_path";
std::string FormatLedgerRow(const LedgerRow& row);
std::vector<LedgerRow> ReadLedger(const std::filesystem::path& path);

struct BestSingle {
  std::string task;
  std::string run_id;
  double positive_f1 = 0.0;
  std::string checkpoint_path;
};
std::vector<BestSingle> ReadSinglesBest(const std::filesystem::path& path);

// Matched-hyperparameter transfer gain of each ordered pair: the mean over
// grid points of combined F1 minus the target's from-scratch F1 at the same
// point, next to ANSAT over D_AB at the lowest threshold.
struct TransferGain {
  std::string source;
  std::string target;
  double ansat_dab = 0.0;
  double gain = 0.0;
};

struct PipelineResult {
  std::vector<RmseCurveRow> rmse_curve;
  std::vector<BudgetCurve> budget_curves;
  PredictionsByMode predictions;
  std::vector<TransferGain> transfer;
  double transfer_spearman = 0.0;
  double mean_completeness_gap = 0.0;
  std::vector<std::filesystem::path> report_files;
};

struct StageOutcome {
  Stage stage;
  bool skipped = false;  // inputs unchanged and outputs intact
};

// Runs one stage. Throws ValidationError if an upstream artifact is missing
// or no longer matches the hash recorded when it was produced.
StageOutcome RunStage(Stage stage, const PipelineConfig& config,
                      const std::filesystem::path& out_dir);

// Runs every stage in order and gathers the headline numbers.
PipelineResult RunPipeline(const PipelineConfig& config,
                           const std::filesystem::path& out_dir);

// Recomputes the evaluation tables from the artifacts in `out_dir`.
PipelineResult LoadResults(const PipelineConfig& config,
                           const std::filesystem::path& out_dir);

}  // namespace tasksim

#endif  // TASKSIM_PIPELINE_H_
