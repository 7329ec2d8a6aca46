// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference kernels against their OpenMP versions. The second
// benchmark argument is the thread count.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "tasksim/attribution.h"
#include "tasksim/classifier.h"
#include "tasksim/corpus.h"
#include "tasksim/gbt.h"
#include "tasksim/parallel.h"
#include "tasksim/synthetic.h"

namespace tasksim {
namespace {

Dataset MakeData(std::size_t rows, std::size_t features) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset data;
  data.n_features = features;
  std::vector<double> x(features);
  for (std::size_t i = 0; i < rows; ++i) {
    for (auto& v : x) v = u(rng);
    data.AddRow(x, 0.5 * x[0] + 0.2 * x[1] * x[2] + 0.05 * u(rng));
  }
  return data;
}

GbtConfig BenchGbt() {
  GbtConfig cfg;
  cfg.rounds = 20;
  cfg.max_depth = 3;
  return cfg;
}

void BM_GbtReferenceSplit(benchmark::State& state) {
  const auto data = MakeData(static_cast<std::size_t>(state.range(0)), 44);
  for (auto _ : state) {
    benchmark::DoNotOptimize(FitGbt(data, BenchGbt(), {1, true}));
  }
}
BENCHMARK(BM_GbtReferenceSplit)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_GbtPresortedSplit(benchmark::State& state) {
  const auto data = MakeData(static_cast<std::size_t>(state.range(0)), 44);
  const int jobs = static_cast<int>(state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(FitGbt(data, BenchGbt(), {jobs, false}));
  }
}
BENCHMARK(BM_GbtPresortedSplit)
    ->Args({400, 1})
    ->Args({400, HardwareJobs()})
    ->Unit(benchmark::kMillisecond);

Corpus BenchCorpus() {
  SyntheticConfig cfg;
  cfg.n_tasks = 4;
  cfg.docs_per_task = 100;
  cfg.negative_docs = 100;
  cfg.overlap_matrix = RingOverlap(4, {0.3, 0.15});
  cfg.seed = 1;
  return SplitCorpus(GenerateSynthetic(cfg), 0.5, 1);
}

void BM_AttributeCorpus(benchmark::State& state) {
  const auto corpus = BenchCorpus();
  ModelDims dims{corpus.vocabulary().size(), 16, 32};
  const auto params = ClassifierParams::Random(dims, 1, 0.5);
  std::vector<const Document*> docs;
  for (std::size_t i = 0; i < 64; ++i) docs.push_back(&corpus.documents()[i]);
  IGConfig cfg;
  const int jobs = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        AttributeCorpus(params, corpus.vocabulary(), docs, "t0", "m", cfg, jobs));
  }
}
BENCHMARK(BM_AttributeCorpus)
    ->Arg(1)
    ->Arg(HardwareJobs())
    ->Unit(benchmark::kMillisecond);

void BM_GridSearch(benchmark::State& state) {
  const auto corpus = BenchCorpus();
  const auto grid = MakeGrid({0.25, 0.5}, {1, 2}, {16, 64}, 1);
  TrainOptions options{{0, 16, 32}, 0.5};
  const int jobs = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        GridSearch(corpus, "t0", grid, nullptr, options, jobs));
  }
}
BENCHMARK(BM_GridSearch)
    ->Arg(1)
    ->Arg(HardwareJobs())
    ->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace tasksim

BENCHMARK_MAIN();
