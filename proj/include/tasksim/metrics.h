// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef TASKSIM_METRICS_H_
#define TASKSIM_METRICS_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace tasksim {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
  void Add(bool predicted, bool actual);
  ConfusionCounts& operator+=(const ConfusionCounts& other);
  friend bool operator==(const ConfusionCounts&,
                         const ConfusionCounts&) = default;
};

// Per-event counts; micro-averaging sums them before computing a metric.
using EventConfusion = std::map<std::string, ConfusionCounts>;

ConfusionCounts Aggregate(const EventConfusion& by_event);

// 2tp / (2tp + fp + fn), or 0 when nothing was predicted or expected.
double PositiveF1(const ConfusionCounts& counts);
double PositiveF1(const EventConfusion& by_event);

// Throws ValidationError for zero documents.
double Accuracy(const ConfusionCounts& counts);
double Accuracy(const EventConfusion& by_event);

struct ScoredPrediction {
  double predicted = 0.0;
  double actual = 0.0;
};

double Rmse(std::span<const ScoredPrediction> predictions);

// RMSE over the k highest-predicted entries. Ties keep input order.
double RmseAtK(std::span<const ScoredPrediction> predictions, std::size_t k);

// Pearson correlation of average ranks. Returns 0 if either side is
// constant.
double SpearmanCorrelation(std::span<const double> x,
                           std::span<const double> y);

}  // namespace tasksim

#endif  // TASKSIM_METRICS_H_
