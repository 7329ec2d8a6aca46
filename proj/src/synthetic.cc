// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#include "tasksim/synthetic.h"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "tasksim/common.h"

namespace tasksim {
namespace {

void RequireProbability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ValidationError(fmt::format("{} must be in [0,1], got {}", name, p));
  }
}

int SharedCount(double overlap, int vocab_task_size) {
  return static_cast<int>(std::floor(overlap * vocab_task_size));
}

// Tasks with overlap exactly 1 share one vocabulary; returns the class
// representative (lowest member index) of every task.
std::vector<int> OverlapClasses(const SyntheticConfig& config) {
  const int n = config.n_tasks;
  const auto& m = config.overlap_matrix;
  std::vector<int> rep(n);
  for (int t = 0; t < n; ++t) {
    rep[t] = t;
    for (int s = 0; s < t; ++s) {
      if (m[s][t] == 1.0) {
        rep[t] = rep[s];
        break;
      }
    }
  }
  for (int s = 0; s < n; ++s) {
    for (int t = 0; t < n; ++t) {
      if (rep[s] != rep[t]) {
        if (m[s][t] == 1.0) {
          throw ValidationError(fmt::format(
              "overlap 1.0 between t{} and t{} is not transitive", s, t));
        }
        continue;
      }
      for (int u = 0; u < n; ++u) {
        if (rep[u] != rep[s] && m[s][u] != m[t][u]) {
          throw ValidationError(fmt::format(
              "t{} and t{} share a vocabulary but overlap t{} differently", s,
              t, u));
        }
      }
    }
  }
  return rep;
}

}  // namespace

void SyntheticConfig::Validate() const {
  if (n_tasks < 2) throw ValidationError("synthetic corpus needs >= 2 tasks");
  if (docs_per_task < 2 || negative_docs < 0 || vocab_core_size < 1 ||
      vocab_task_size < 1 || doc_length < 1 || n_events < 1) {
    throw ValidationError("synthetic corpus sizes must be positive");
  }
  RequireProbability(signal_fraction, "signal_fraction");
  RequireProbability(co_label_rate, "co_label_rate");
  RequireProbability(label_noise, "label_noise");
  if (overlap_matrix.size() != static_cast<std::size_t>(n_tasks)) {
    throw ValidationError(fmt::format("overlap matrix must be {}x{}", n_tasks,
                                      n_tasks));
  }
  for (int s = 0; s < n_tasks; ++s) {
    if (overlap_matrix[s].size() != static_cast<std::size_t>(n_tasks)) {
      throw ValidationError(fmt::format("overlap matrix must be {}x{}",
                                        n_tasks, n_tasks));
    }
    if (overlap_matrix[s][s] != 1.0) {
      throw ValidationError(
          fmt::format("overlap matrix diagonal must be 1 (row {})", s));
    }
    for (int t = 0; t < n_tasks; ++t) {
      RequireProbability(overlap_matrix[s][t], "overlap");
      if (overlap_matrix[s][t] != overlap_matrix[t][s]) {
        throw ValidationError(
            fmt::format("overlap matrix not symmetric at ({}, {})", s, t));
      }
    }
  }
  auto rep = OverlapClasses(*this);
  for (int c = 0; c < n_tasks; ++c) {
    if (rep[c] != c) continue;
    int shared = 0;
    for (int d = 0; d < n_tasks; ++d) {
      if (rep[d] == d && d != c) {
        shared += SharedCount(overlap_matrix[c][d], vocab_task_size);
      }
    }
    if (shared > vocab_task_size) {
      throw ValidationError(fmt::format(
          "task t{} needs {} shared signal terms but vocab_task_size is {}", c,
          shared, vocab_task_size));
    }
  }
}

std::vector<std::vector<double>> RingOverlap(
    int n_tasks, const std::vector<double>& levels) {
  std::vector<std::vector<double>> m(n_tasks, std::vector<double>(n_tasks));
  for (int s = 0; s < n_tasks; ++s) {
    for (int t = 0; t < n_tasks; ++t) {
      int d = std::abs(s - t);
      d = std::min(d, n_tasks - d);
      if (d == 0) {
        m[s][t] = 1.0;
      } else if (static_cast<std::size_t>(d) <= levels.size()) {
        m[s][t] = levels[d - 1];
      }
    }
  }
  return m;
}

std::vector<std::vector<std::string>> SignalVocabularies(
    const SyntheticConfig& config) {
  config.Validate();
  const int n = config.n_tasks;
  auto rep = OverlapClasses(config);
  std::vector<std::vector<std::string>> by_class(n);
  for (int c = 0; c < n; ++c) {
    if (rep[c] != c) continue;
    for (int d = c + 1; d < n; ++d) {
      if (rep[d] != d) continue;
      int k = SharedCount(config.overlap_matrix[c][d], config.vocab_task_size);
      for (int i = 0; i < k; ++i) {
        auto term = fmt::format("t{}t{}w{}", c, d, i);
        by_class[c].push_back(term);
        by_class[d].push_back(term);
      }
    }
  }
  for (int c = 0; c < n; ++c) {
    if (rep[c] != c) continue;
    for (int i = 0; by_class[c].size() <
                    static_cast<std::size_t>(config.vocab_task_size);
         ++i) {
      by_class[c].push_back(fmt::format("t{}w{}", c, i));
    }
    std::sort(by_class[c].begin(), by_class[c].end());
  }
  std::vector<std::vector<std::string>> vocab(n);
  for (int t = 0; t < n; ++t) vocab[t] = by_class[rep[t]];
  return vocab;
}

Corpus GenerateSynthetic(const SyntheticConfig& config) {
  auto signal = SignalVocabularies(config);
  const int n = config.n_tasks;
  std::vector<TaskSpec> tasks;
  for (int t = 0; t < n; ++t) {
    tasks.push_back({fmt::format("t{}", t), fmt::format("task {}", t)});
  }

  Rng rng(MixSeed(config.seed, "synthetic"));
  auto core_term = [&]() {
    return fmt::format("core{}", UniformIndex(rng, config.vocab_core_size));
  };

  const int n_primary = n * config.docs_per_task;
  const int n_docs = n_primary + config.negative_docs;
  std::vector<Document> docs;
  docs.reserve(n_docs);
  for (int i = 0; i < n_docs; ++i) {
    Document doc;
    doc.id = fmt::format("d{:06d}", i);
    doc.event_id = fmt::format("e{}", i % config.n_events);

    std::vector<int> label_tasks;
    if (i < n_primary) {
      const int primary = i % n;
      label_tasks.push_back(primary);
      for (int s = 0; s < n; ++s) {
        if (s == primary) continue;
        double p = config.co_label_rate * config.overlap_matrix[primary][s];
        if (UniformUnit(rng) < p) label_tasks.push_back(s);
      }
    }
    for (int k = 0; k < config.doc_length; ++k) {
      if (!label_tasks.empty() && UniformUnit(rng) < config.signal_fraction) {
        const auto& vocab =
            signal[label_tasks[UniformIndex(rng, label_tasks.size())]];
        doc.tokens.push_back(vocab[UniformIndex(rng, vocab.size())]);
      } else {
        doc.tokens.push_back(core_term());
      }
    }
    std::vector<bool> positive(n, false);
    for (int t : label_tasks) positive[t] = true;
    for (int t = 0; t < n; ++t) {
      if (config.label_noise > 0.0 && UniformUnit(rng) < config.label_noise) {
        positive[t] = !positive[t];
      }
      if (positive[t]) doc.labels.push_back(tasks[t].id);
    }
    docs.push_back(std::move(doc));
  }
  return Corpus::Create(std::move(tasks), std::move(docs));
}

}  // namespace tasksim
