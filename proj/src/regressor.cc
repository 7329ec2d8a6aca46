// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#include "tasksim/regressor.h"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include <fmt/core.h>

#include "tasksim/common.h"
#include "tasksim/parallel.h"
#include "tasksim/text_io.h"

namespace tasksim {

std::string_view FeatureModeName(FeatureMode mode) {
  return mode == FeatureMode::kF1 ? "F1" : "F1+ANSAT";
}

FeatureMode ParseFeatureMode(std::string_view name) {
  if (name == "F1") return FeatureMode::kF1;
  if (name == "F1+ANSAT") return FeatureMode::kF1Ansat;
  throw ValidationError(fmt::format("unknown feature mode '{}'", name));
}

std::vector<double> FeatureVector(const PairSample& sample, FeatureMode mode) {
  std::vector<double> features = {sample.f1_source, sample.f1_target};
  if (mode == FeatureMode::kF1Ansat) {
    features.insert(features.end(), sample.ansat_features.begin(),
                    sample.ansat_features.end());
  }
  return features;
}

namespace {

bool CanonicalLess(const PairSample* a, const PairSample* b) {
  return std::tie(a->source, a->target, a->id) <
         std::tie(b->source, b->target, b->id);
}

std::vector<const PairSample*> Canonical(std::span<const PairSample> samples) {
  std::vector<const PairSample*> order;
  order.reserve(samples.size());
  for (const auto& s : samples) order.push_back(&s);
  std::sort(order.begin(), order.end(), CanonicalLess);
  return order;
}

Dataset BuildFrom(const std::vector<const PairSample*>& samples,
                  FeatureMode mode) {
  Dataset data;
  for (const auto* s : samples) {
    if (!(s->label_f1 >= 0.0 && s->label_f1 <= 1.0)) {
      throw ValidationError(fmt::format("sample '{}' label {} outside [0,1]",
                                        s->id, s->label_f1));
    }
    auto features = FeatureVector(*s, mode);
    if (!data.y.empty() && features.size() != data.n_features) {
      throw ValidationError(fmt::format(
          "sample '{}' has {} features, expected {}", s->id, features.size(),
          data.n_features));
    }
    data.AddRow(features, s->label_f1);
  }
  data.Validate();
  return data;
}

}  // namespace

Dataset BuildDataset(std::span<const PairSample> samples, FeatureMode mode) {
  return BuildFrom(Canonical(samples), mode);
}

GradientBoostedEnsemble FitPairs(std::span<const PairSample> samples,
                                 FeatureMode mode, const GbtConfig& cfg,
                                 const FitOptions& options) {
  return FitGbt(BuildDataset(samples, mode), cfg, options);
}

std::vector<PairSample> CollapseBestPerPair(
    std::span<const PairSample> samples) {
  std::map<std::pair<std::string, std::string>, PairSample> best;
  for (const auto* s : Canonical(samples)) {
    auto key = std::make_pair(s->source, s->target);
    auto it = best.find(key);
    if (it == best.end()) {
      PairSample collapsed = *s;
      collapsed.id = s->source + "->" + s->target;
      best.emplace(key, std::move(collapsed));
      continue;
    }
    it->second.label_f1 = std::max(it->second.label_f1, s->label_f1);
    it->second.runtime_seconds += s->runtime_seconds;
  }
  std::vector<PairSample> out;
  for (auto& [key, sample] : best) out.push_back(std::move(sample));
  return out;
}

std::vector<CvPrediction> CrossValidate(std::span<const PairSample> samples,
                                        FeatureMode mode, const GbtConfig& cfg,
                                        int jobs) {
  const auto ordered = Canonical(samples);
  std::set<std::string> target_set;
  for (const auto* s : ordered) target_set.insert(s->target);
  if (target_set.size() < 2) {
    throw ValidationError(
        "leave-one-target-out needs at least 2 distinct targets");
  }
  const std::vector<std::string> targets(target_set.begin(), target_set.end());

  std::vector<std::vector<CvPrediction>> per_fold(targets.size());
  ParallelFor(targets.size(), jobs, [&](std::size_t f) {
    const auto& held_out = targets[f];
    std::vector<const PairSample*> train;
    for (const auto* s : ordered) {
      if (s->target != held_out) train.push_back(s);
    }
    if (train.empty()) {
      throw ValidationError(
          fmt::format("fold '{}' has an empty training set", held_out));
    }
    auto model = FitGbt(BuildFrom(train, mode), cfg);
    for (const auto* s : ordered) {
      if (s->target != held_out) continue;
      auto features = FeatureVector(*s, mode);
      CvPrediction p;
      p.sample_id = s->id;
      p.source = s->source;
      p.target = s->target;
      p.fold = held_out;
      p.mode = mode;
      p.predicted_raw = model.PredictRaw(features);
      p.predicted = model.Predict(features);
      p.actual = s->label_f1;
      p.runtime_seconds = s->runtime_seconds;
      per_fold[f].push_back(std::move(p));
    }
  });

  std::vector<CvPrediction> out;
  for (auto& fold : per_fold) {
    for (auto& p : fold) out.push_back(std::move(p));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const CvPrediction& a, const CvPrediction& b) {
                     return std::tie(a.source, a.target, a.sample_id) <
                            std::tie(b.source, b.target, b.sample_id);
                   });
  return out;
}

std::string SerializePredictions(std::span<const CvPrediction> predictions) {
  std::string out =
      "source,target,fold,feature_mode,predicted_f1,actual_f1,"
      "runtime_seconds\n";
  for (const auto& p : predictions) {
    out += fmt::format("{},{},{},{},{},{},{}\n", p.source, p.target, p.fold,
                       FeatureModeName(p.mode), FormatFixed6(p.predicted),
                       FormatFixed6(p.actual), FormatFixed6(p.runtime_seconds));
  }
  return out;
}

void WritePredictions(std::span<const CvPrediction> predictions,
                      const std::filesystem::path& path) {
  WriteFileAtomic(path, SerializePredictions(predictions));
}

std::vector<CvPrediction> ReadPredictions(const std::filesystem::path& path) {
  std::vector<CvPrediction> out;
  std::map<std::tuple<std::string, std::string, std::string>, int> seen;
  for (const auto& row :
       ReadCsv(path,
               "source,target,fold,feature_mode,predicted_f1,actual_f1,"
               "runtime_seconds")) {
    CvPrediction p;
    p.source = row[0];
    p.target = row[1];
    p.fold = row[2];
    p.mode = ParseFeatureMode(row[3]);
    p.predicted = ParseDouble(row[4]);
    p.predicted_raw = p.predicted;
    p.actual = ParseDouble(row[5]);
    p.runtime_seconds = ParseDouble(row[6]);
    // Stable synthetic id: position among the pair's rows.
    p.sample_id = fmt::format("{}->{}#{}", p.source, p.target,
                              seen[{row[3], p.source, p.target}]++);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace tasksim
