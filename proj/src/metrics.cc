// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#include "tasksim/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

#include "tasksim/common.h"

namespace tasksim {

void ConfusionCounts::Add(bool predicted, bool actual) {
  if (predicted && actual) {
    ++tp;
  } else if (predicted) {
    ++fp;
  } else if (actual) {
    ++fn;
  } else {
    ++tn;
  }
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  tn += other.tn;
  return *this;
}

ConfusionCounts Aggregate(const EventConfusion& by_event) {
  ConfusionCounts total;
  for (const auto& [event, counts] : by_event) total += counts;
  return total;
}

double PositiveF1(const ConfusionCounts& counts) {
  const auto denominator = 2 * counts.tp + counts.fp + counts.fn;
  if (denominator == 0) return 0.0;
  return static_cast<double>(2 * counts.tp) /
         static_cast<double>(denominator);
}

double PositiveF1(const EventConfusion& by_event) {
  return PositiveF1(Aggregate(by_event));
}

double Accuracy(const ConfusionCounts& counts) {
  if (counts.total() == 0) {
    throw ValidationError("accuracy of zero documents is undefined");
  }
  return static_cast<double>(counts.tp + counts.tn) /
         static_cast<double>(counts.total());
}

double Accuracy(const EventConfusion& by_event) {
  return Accuracy(Aggregate(by_event));
}

double Rmse(std::span<const ScoredPrediction> predictions) {
  if (predictions.empty()) throw ValidationError("RMSE of zero predictions");
  double sum = 0.0;
  for (const auto& p : predictions) {
    const double e = p.predicted - p.actual;
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(predictions.size()));
}

double RmseAtK(std::span<const ScoredPrediction> predictions, std::size_t k) {
  if (k < 1 || k > predictions.size()) {
    throw ValidationError(fmt::format("k={} outside [1, {}]", k,
                                      predictions.size()));
  }
  std::vector<ScoredPrediction> ranked(predictions.begin(), predictions.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const ScoredPrediction& a, const ScoredPrediction& b) {
                     return a.predicted > b.predicted;
                   });
  return Rmse(std::span<const ScoredPrediction>(ranked.data(), k));
}

namespace {

std::vector<double> AverageRanks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) {
      ++j;
    }
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double SpearmanCorrelation(std::span<const double> x,
                           std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ValidationError("Spearman correlation needs two equal-length "
                          "samples of size >= 2");
  }
  auto rx = AverageRanks(x);
  auto ry = AverageRanks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace tasksim
