// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef TASKSIM_SYNTHETIC_H_
#define TASKSIM_SYNTHETIC_H_

#include <cstdint>
#include <string>
#include <vector>

#include "tasksim/corpus.h"

namespace tasksim {

// Generator settings for a corpus with planted inter-task relatedness.
//
// Every task t owns a signal vocabulary V_t of `vocab_task_size` terms. For
// each pair (s, t), floor(overlap[s][t] * vocab_task_size) terms are shared
// between V_s and V_t and with no other task (tasks with overlap 1.0 share
// their whole vocabulary). Each of `docs_per_task` primary documents of task
// t is also labelled with s with probability co_label_rate * overlap[t][s].
// A positive document draws each token from the signal vocabulary of one of
// its tasks with probability `signal_fraction`, otherwise from the core
// vocabulary; the `negative_docs` all-negative documents draw from core only.
struct SyntheticConfig {
  int n_tasks = 4;
  int docs_per_task = 40;
  int negative_docs = 40;
  int vocab_core_size = 200;
  int vocab_task_size = 24;
  std::vector<std::vector<double>> overlap_matrix;
  int doc_length = 16;
  double signal_fraction = 0.3;
  double co_label_rate = 0.5;
  double label_noise = 0.0;
  int n_events = 4;
  std::uint64_t seed = 0;

  void Validate() const;
};

// n x n matrix with unit diagonal and `levels[d-1]` between tasks whose ring
// distance is d (0 beyond the listed levels).
std::vector<std::vector<double>> RingOverlap(int n_tasks,
                                             const std::vector<double>& levels);

// Signal vocabularies V_t as term strings, in task order. Exposed so tests
// can check the planted overlaps; GenerateSynthetic uses the same layout.
std::vector<std::vector<std::string>> SignalVocabularies(
    const SyntheticConfig& config);

// Task ids are "t0".."t{n-1}"; document ids are zero-padded so that id order
// equals generation order. Pure function of `config`.
Corpus GenerateSynthetic(const SyntheticConfig& config);

}  // namespace tasksim

#endif  // TASKSIM_SYNTHETIC_H_
