// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#include "tasksim/evaluation.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include <fmt/core.h>

#include "json.hpp"
#include "tasksim/common.h"
#include "tasksim/metrics.h"
#include "tasksim/text_io.h"

namespace tasksim {

using nlohmann::json;

namespace {

std::vector<ScoredPrediction> Scored(std::span<const CvPrediction> preds) {
  std::vector<ScoredPrediction> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back({p.predicted, p.actual});
  return out;
}

double PerTargetRmseAtK(std::span<const CvPrediction> preds, std::size_t k) {
  std::map<std::string, std::vector<ScoredPrediction>> by_target;
  for (const auto& p : preds) by_target[p.target].push_back({p.predicted, p.actual});
  std::vector<ScoredPrediction> pooled;
  for (auto& [target, group] : by_target) {
    if (k > group.size()) {
      throw ValidationError(fmt::format(
          "k={} exceeds the {} predictions of target '{}'", k, group.size(),
          target));
    }
    std::stable_sort(group.begin(), group.end(),
                     [](const ScoredPrediction& a, const ScoredPrediction& b) {
                       return a.predicted > b.predicted;
                     });
    pooled.insert(pooled.end(), group.begin(), group.begin() + k);
  }
  return Rmse(pooled);
}

}  // namespace

std::vector<RmseCurveRow> RmseCurve(const PredictionsByMode& predictions,
                                    std::span<const std::size_t> ks,
                                    RankingScope scope) {
  if (ks.empty()) throw ValidationError("empty k list");
  std::vector<RmseCurveRow> rows;
  for (const auto& [mode, preds] : predictions) {
    if (preds.empty()) {
      throw ValidationError(fmt::format("no predictions for mode {}",
                                        FeatureModeName(mode)));
    }
    const auto scored = Scored(preds);
    for (auto k : ks) {
      const double rmse = scope == RankingScope::kGlobal
                              ? RmseAtK(scored, k)
                              : PerTargetRmseAtK(preds, k);
      rows.push_back({mode, k, rmse});
    }
  }
  return rows;
}

std::vector<std::size_t> KsFromFractions(std::size_t pool_size,
                                         std::span<const double> fractions) {
  std::set<std::size_t> ks;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw ValidationError(fmt::format("k fraction {} outside (0, 1]", f));
    }
    // The epsilon keeps e.g. 0.6 * 100 from rounding up to 61.
    auto k = static_cast<std::size_t>(
        std::ceil(f * static_cast<double>(pool_size) - 1e-9));
    ks.insert(std::clamp<std::size_t>(k, 1, pool_size));
  }
  return {ks.begin(), ks.end()};
}

BudgetCurve BudgetSearch(std::span<const CvPrediction> predictions,
                         const PairRuntimes& runtimes,
                         std::span<const std::size_t> ks, BudgetUnit unit) {
  if (predictions.empty()) throw ValidationError("no predictions");
  struct Candidate {
    std::string source;
    std::string tie;
    double predicted = 0.0;
    double actual = 0.0;
    double runtime = 0.0;
  };
  std::map<std::string, std::vector<Candidate>> by_target;
  const FeatureMode mode = predictions.front().mode;

  auto runtimes_of = [&](const CvPrediction& p) -> const std::vector<double>& {
    auto it = runtimes.find({p.source, p.target});
    if (it == runtimes.end() || it->second.empty()) {
      throw ValidationError(fmt::format(
          "prediction {} -> {} has no run in the ledger", p.source, p.target));
    }
    return it->second;
  };

  if (unit == BudgetUnit::kPerRun) {
    for (const auto& p : predictions) {
      runtimes_of(p);
      by_target[p.target].push_back(
          {p.source, p.sample_id, p.predicted, p.actual, p.runtime_seconds});
    }
  } else {
    struct Acc {
      double predicted_sum = 0.0;
      int count = 0;
      double best = 0.0;
    };
    std::map<std::pair<std::string, std::string>, Acc> pairs;
    for (const auto& p : predictions) {
      runtimes_of(p);
      auto& acc = pairs[{p.target, p.source}];
      acc.predicted_sum += p.predicted;
      acc.best = acc.count == 0 ? p.actual : std::max(acc.best, p.actual);
      ++acc.count;
    }
    for (const auto& [key, acc] : pairs) {
      const auto& [target, source] = key;
      double runtime = 0.0;
      for (double r : runtimes.at({source, target})) runtime += r;
      by_target[target].push_back({source, source,
                                   acc.predicted_sum / acc.count, acc.best,
                                   runtime});
    }
  }

  BudgetCurve curve;
  curve.mode = mode;
  std::size_t max_depth = 0;
  for (auto& [target, candidates] : by_target) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) {
                       if (a.predicted != b.predicted) {
                         return a.predicted > b.predicted;
                       }
                       return std::tie(a.source, a.tie) <
                              std::tie(b.source, b.tie);
                     });
    max_depth = std::max(max_depth, candidates.size());
    double best = 0.0;
    for (const auto& c : candidates) {
      best = std::max(best, c.actual);
      curve.full_runtime_seconds += c.runtime;
    }
    curve.oracle_f1 += best;
  }
  const double n_targets = static_cast<double>(by_target.size());
  curve.oracle_f1 /= n_targets;

  std::vector<std::size_t> depths(ks.begin(), ks.end());
  if (depths.empty()) {
    for (std::size_t k = 1; k <= max_depth; ++k) depths.push_back(k);
  }
  for (auto k : depths) {
    if (k < 1) throw ValidationError("budget depth must be >= 1");
    BudgetCurvePoint point;
    point.k = k;
    for (const auto& [target, candidates] : by_target) {
      const std::size_t depth = std::min(k, candidates.size());
      double best = 0.0;
      for (std::size_t i = 0; i < depth; ++i) {
        best = std::max(best, candidates[i].actual);
        point.cumulative_runtime_seconds += candidates[i].runtime;
      }
      point.mean_best_f1 += best;
    }
    point.mean_best_f1 /= n_targets;
    curve.points.push_back(point);
  }
  return curve;
}

std::vector<ToleranceResult> RuntimeReductions(
    const BudgetCurve& curve, std::span<const double> tolerances) {
  std::vector<ToleranceResult> out;
  for (double tol : tolerances) {
    if (!(tol >= 0.0 && tol < 1.0)) {
      throw ValidationError(fmt::format("tolerance {} outside [0, 1)", tol));
    }
    ToleranceResult r;
    r.f1_loss_tolerance = tol;
    const double goal = (1.0 - tol) * curve.oracle_f1 - 1e-12;
    const BudgetCurvePoint* hit = nullptr;
    for (const auto& p : curve.points) {
      if (p.mean_best_f1 >= goal) {
        hit = &p;
        break;
      }
    }
    if (hit == nullptr) {
      // Only possible when `points` stops short of the full depth.
      r.k = 0;
      r.runtime_seconds = curve.full_runtime_seconds;
      r.mean_best_f1 = curve.points.empty() ? 0.0
                                            : curve.points.back().mean_best_f1;
    } else {
      r.k = hit->k;
      r.runtime_seconds = hit->cumulative_runtime_seconds;
      r.mean_best_f1 = hit->mean_best_f1;
    }
    r.runtime_reduction_pct =
        curve.full_runtime_seconds > 0.0
            ? 100.0 * (1.0 - r.runtime_seconds / curve.full_runtime_seconds)
            : 0.0;
    out.push_back(r);
  }
  return out;
}

std::string SerializeRmseCurve(std::span<const RmseCurveRow> rows) {
  std::string out = "feature_mode,k,rmse\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{}\n", FeatureModeName(r.mode), r.k,
                       FormatFixed6(r.rmse));
  }
  return out;
}

std::string SerializeBudgetCurves(std::span<const BudgetCurve> curves) {
  std::string out =
      "feature_mode,k,mean_best_f1,cumulative_runtime_seconds,oracle_f1\n";
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      out += fmt::format("{},{},{},{},{}\n", FeatureModeName(c.mode), p.k,
                         FormatFixed6(p.mean_best_f1),
                         FormatFixed6(p.cumulative_runtime_seconds),
                         FormatFixed6(c.oracle_f1));
    }
  }
  return out;
}

namespace {

double Round6(double x) { return std::round(x * 1e6) / 1e6; }

}  // namespace

std::string SerializeSummary(const ReportInputs& inputs) {
  if (inputs.tolerances.empty()) throw ValidationError("empty tolerance list");
  json summary;
  json modes = json::object();
  for (const auto& curve : inputs.budget_curves) {
    json m;
    m["oracle_f1"] = Round6(curve.oracle_f1);
    m["full_grid_runtime_seconds"] = Round6(curve.full_runtime_seconds);
    json tolerances = json::array();
    for (const auto& r : RuntimeReductions(curve, inputs.tolerances)) {
      tolerances.push_back({{"f1_loss_tolerance", Round6(r.f1_loss_tolerance)},
                            {"k", r.k},
                            {"mean_best_f1", Round6(r.mean_best_f1)},
                            {"runtime_seconds", Round6(r.runtime_seconds)},
                            {"runtime_reduction_pct",
                             Round6(r.runtime_reduction_pct)}});
    }
    m["tolerances"] = tolerances;
    modes[std::string(FeatureModeName(curve.mode))] = m;
  }
  summary["budget"] = modes;

  json rmse = json::object();
  for (const auto& row : inputs.rmse_curve) {
    rmse[std::string(FeatureModeName(row.mode))][std::to_string(row.k)] =
        Round6(row.rmse);
  }
  summary["rmse_at_k"] = rmse;
  for (const auto& [key, encoded] : inputs.extra_summary_json) {
    summary[key] = json::parse(encoded);
  }
  return summary.dump(2) + "\n";
}

std::vector<std::filesystem::path> WriteReport(
    const ReportInputs& inputs, const std::filesystem::path& out_dir) {
  const auto rmse_path = out_dir / "rmse_curve.csv";
  const auto budget_path = out_dir / "budget_curve.csv";
  const auto summary_path = out_dir / "summary.json";
  const auto manifest_path = out_dir / "manifest.txt";
  WriteFileAtomic(rmse_path, SerializeRmseCurve(inputs.rmse_curve));
  WriteFileAtomic(budget_path, SerializeBudgetCurves(inputs.budget_curves));
  WriteFileAtomic(summary_path, SerializeSummary(inputs));

  std::string manifest;
  for (const auto& line : inputs.manifest_lines) manifest += line + "\n";
  auto hash_line = [&](const std::filesystem::path& p) {
    manifest += fmt::format("sha256 {} {}\n", Sha256File(p),
                            p.filename().string());
  };
  for (const auto& p : inputs.hashed_inputs) hash_line(p);
  for (const auto& p : {rmse_path, budget_path, summary_path}) hash_line(p);
  WriteFileAtomic(manifest_path, manifest);
  return {rmse_path, budget_path, summary_path, manifest_path};
}

}  // namespace tasksim
