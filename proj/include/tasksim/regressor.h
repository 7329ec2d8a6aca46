// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef TASKSIM_REGRESSOR_H_
#define TASKSIM_REGRESSOR_H_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tasksim/gbt.h"

namespace tasksim {

// One trained source -> target combined run.
struct PairSample {
  std::string id;
  std::string source;
  std::string target;
  double f1_source = 0.0;
  double f1_target = 0.0;
  // DA, DB, DAB blocks over the TAT grid.
  std::vector<double> ansat_features;
  double label_f1 = 0.0;
  // Carried for the budget analysis; never a feature.
  double runtime_seconds = 0.0;
};

enum class FeatureMode { kF1, kF1Ansat };
inline constexpr FeatureMode kFeatureModes[] = {FeatureMode::kF1,
                                                FeatureMode::kF1Ansat};
std::string_view FeatureModeName(FeatureMode mode);  // "F1", "F1+ANSAT"
FeatureMode ParseFeatureMode(std::string_view name);

// [f1_source, f1_target] followed by the ANSAT block in kF1Ansat mode.
std::vector<double> FeatureVector(const PairSample& sample, FeatureMode mode);

// Rows in (source, target, id) order, independent of input order.
Dataset BuildDataset(std::span<const PairSample> samples, FeatureMode mode);

GradientBoostedEnsemble FitPairs(std::span<const PairSample> samples,
                                 FeatureMode mode, const GbtConfig& cfg,
                                 const FitOptions& options = {});

// One sample per (source, target): the best label over that pair's runs and
// the summed runtime. Features are taken from the first run (all runs of a
// pair share them).
std::vector<PairSample> CollapseBestPerPair(
    std::span<const PairSample> samples);

struct CvPrediction {
  std::string sample_id;
  std::string source;
  std::string target;
  std::string fold;  // held-out target
  FeatureMode mode = FeatureMode::kF1;
  double predicted_raw = 0.0;
  double predicted = 0.0;  // clamped into [0, 1]
  double actual = 0.0;
  double runtime_seconds = 0.0;
};

// Leave-one-target-out: for every target T, fit on samples whose target is
// not T and predict those whose target is T. Output is in (source, target,
// id) order. Folds run on up to `jobs` OpenMP threads.
std::vector<CvPrediction> CrossValidate(std::span<const PairSample> samples,
                                        FeatureMode mode, const GbtConfig& cfg,
                                        int jobs = 1);

// CSV `source,target,fold,feature_mode,predicted_f1,actual_f1,runtime_seconds`.
std::string SerializePredictions(std::span<const CvPrediction> predictions);
void WritePredictions(std::span<const CvPrediction> predictions,
                      const std::filesystem::path& path);
std::vector<CvPrediction> ReadPredictions(const std::filesystem::path& path);

}  // namespace tasksim

#endif  // TASKSIM_REGRESSOR_H_
