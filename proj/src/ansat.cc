// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#include "tasksim/ansat.h"

#include <algorithm>
#include <cmath>
#include <tuple>

#include <fmt/core.h>

#include "tasksim/common.h"
#include "tasksim/parallel.h"
#include "tasksim/text_io.h"

namespace tasksim {

TatGrid TatGrid::Default() {
  TatGrid grid;
  for (int k = 1; k <= 14; ++k) grid.thresholds.push_back(k / 20.0);
  return grid;
}

void TatGrid::Validate() const {
  if (thresholds.empty()) throw ValidationError("empty TAT grid");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const double t = thresholds[i];
    if (!(t > 0.0 && t <= 1.0)) {
      throw ValidationError(fmt::format("TAT {} outside (0, 1]", t));
    }
    if (i > 0 && !(t > thresholds[i - 1])) {
      throw ValidationError("TAT grid must be strictly increasing");
    }
  }
}

std::string_view DocSetTag(DocSet docset) {
  switch (docset) {
    case DocSet::kA:
      return "DA";
    case DocSet::kB:
      return "DB";
    case DocSet::kAB:
      return "DAB";
  }
  return "";
}

DocSet ParseDocSet(std::string_view tag) {
  for (auto docset : kDocSets) {
    if (DocSetTag(docset) == tag) return docset;
  }
  throw ValidationError(fmt::format("unknown docset '{}'", tag));
}

AttributionSet IndexRecords(std::vector<AttributionRecord> records) {
  AttributionSet set;
  for (auto& r : records) {
    auto id = r.doc_id;
    if (!set.emplace(id, std::move(r)).second) {
      throw ValidationError(
          fmt::format("duplicate attribution record for document '{}'", id));
    }
  }
  return set;
}

std::set<std::string> ActiveTerms(const AttributionRecord& record,
                                  double tat) {
  if (!(tat > 0.0)) throw ValidationError("TAT must be > 0");
  std::set<std::string> active;
  for (const auto& [term, score] : record.term_scores) {
    if (score >= tat) active.insert(term);
  }
  return active;
}

namespace {

const AttributionRecord& Lookup(const AttributionSet& set,
                                const std::string& doc_id, const char* side) {
  auto it = set.find(doc_id);
  if (it == set.end()) {
    throw ValidationError(fmt::format(
        "no attribution record for document '{}' under model {}", doc_id,
        side));
  }
  return it->second;
}

double ScoreOr0(const AttributionRecord& record, const std::string& term) {
  auto it = record.term_scores.find(term);
  return it == record.term_scores.end() ? 0.0 : it->second;
}

}  // namespace

AnsatValue Ansat(const AttributionSet& records_a,
                 const AttributionSet& records_b,
                 std::span<const Document* const> docs, double tat) {
  if (!(tat > 0.0)) throw ValidationError("TAT must be > 0");
  if (docs.empty()) return {0.0, true};
  long long shared = 0;
  for (const Document* doc : docs) {
    const auto& a = Lookup(records_a, doc->id, "A");
    const auto& b = Lookup(records_b, doc->id, "B");
    std::vector<const std::string*> unique;
    unique.reserve(doc->tokens.size());
    for (const auto& token : doc->tokens) unique.push_back(&token);
    std::sort(unique.begin(), unique.end(),
              [](const std::string* x, const std::string* y) { return *x < *y; });
    unique.erase(std::unique(unique.begin(), unique.end(),
                             [](const std::string* x, const std::string* y) {
                               return *x == *y;
                             }),
                 unique.end());
    for (const auto* term : unique) {
      if (ScoreOr0(a, *term) >= tat && ScoreOr0(b, *term) >= tat) ++shared;
    }
  }
  return {static_cast<double>(shared) / static_cast<double>(docs.size()),
          false};
}

double AnsatFeatures::At(DocSet docset, std::size_t tat_index) const {
  const std::size_t grid_size = values.size() / 3;
  return values[static_cast<std::size_t>(docset) * grid_size + tat_index];
}

void CheckCacheComplete(const Corpus& corpus, const AttributionCache& cache,
                        Split split) {
  // Every model must cover the positives of every task.
  std::vector<std::string> missing;
  for (const auto& task : corpus.task_ids()) {
    for (const Document* doc : PositiveDocuments(corpus, {task}, split)) {
      for (const auto& model : corpus.task_ids()) {
        auto it = cache.find(model);
        if (it == cache.end() || !it->second.count(doc->id)) {
          missing.push_back(fmt::format("({}, {})", model, doc->id));
        }
      }
    }
  }
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    std::string list;
    for (std::size_t i = 0; i < missing.size(); ++i) {
      if (i) list += ", ";
      list += missing[i];
    }
    throw ValidationError(fmt::format(
        "attribution cache incomplete; missing (model, doc): {}", list));
  }
}

std::vector<AnsatFeatures> FeatureTable(const Corpus& corpus,
                                        const AttributionCache& cache,
                                        const TatGrid& grid, Split split,
                                        int jobs) {
  grid.Validate();
  CheckCacheComplete(corpus, cache, split);
  auto tasks = corpus.task_ids();
  std::sort(tasks.begin(), tasks.end());

  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& a : tasks) {
    for (const auto& b : tasks) {
      if (a != b) pairs.emplace_back(a, b);
    }
  }
  std::vector<AnsatFeatures> table(pairs.size());
  ParallelFor(pairs.size(), jobs, [&](std::size_t p) {
    const auto& [a, b] = pairs[p];
    const auto& records_a = cache.at(a);
    const auto& records_b = cache.at(b);
    const std::vector<std::vector<const Document*>> sets = {
        PositiveDocuments(corpus, {a}, split),
        PositiveDocuments(corpus, {b}, split),
        PositiveDocuments(corpus, {a, b}, split)};
    auto& row = table[p];
    row.task_a = a;
    row.task_b = b;
    row.values.reserve(3 * grid.thresholds.size());
    for (std::size_t s = 0; s < sets.size(); ++s) {
      row.empty[s] = sets[s].empty();
      for (double tat : grid.thresholds) {
        row.values.push_back(Ansat(records_a, records_b, sets[s], tat).value);
      }
    }
  });
  return table;
}

std::string SerializeFeatureTable(std::span<const AnsatFeatures> table,
                                  const TatGrid& grid) {
  struct Row {
    std::string_view a, b, docset;
    double tat;
    double value;
  };
  std::vector<Row> rows;
  for (const auto& f : table) {
    for (auto docset : kDocSets) {
      for (std::size_t t = 0; t < grid.thresholds.size(); ++t) {
        rows.push_back({f.task_a, f.task_b, DocSetTag(docset),
                        grid.thresholds[t], f.At(docset, t)});
      }
    }
  }
  std::sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
    return std::tie(x.a, x.b, x.docset, x.tat) <
           std::tie(y.a, y.b, y.docset, y.tat);
  });
  std::string out = "task_a,task_b,docset,tat,ansat\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}\n", r.a, r.b, r.docset,
                       FormatFixed6(r.tat), FormatFixed6(r.value));
  }
  return out;
}

void WriteFeatureTable(std::span<const AnsatFeatures> table,
                       const TatGrid& grid, const std::filesystem::path& path) {
  WriteFileAtomic(path, SerializeFeatureTable(table, grid));
}

std::vector<AnsatFeatures> ReadFeatureTable(const std::filesystem::path& path,
                                            const TatGrid& grid) {
  grid.Validate();
  const std::size_t g = grid.thresholds.size();
  std::map<std::pair<std::string, std::string>, AnsatFeatures> by_pair;
  std::map<std::pair<std::string, std::string>, std::size_t> filled;
  for (const auto& row : ReadCsv(path, "task_a,task_b,docset,tat,ansat")) {
    auto docset = ParseDocSet(row[2]);
    const double tat = ParseDouble(row[3]);
    std::size_t t = 0;
    while (t < g && std::fabs(grid.thresholds[t] - tat) > 5e-7) ++t;
    if (t == g) {
      throw ValidationError(
          fmt::format("{}: TAT {} not in the configured grid", path.string(),
                      row[3]));
    }
    auto key = std::make_pair(row[0], row[1]);
    auto& f = by_pair[key];
    if (f.values.empty()) {
      f.task_a = row[0];
      f.task_b = row[1];
      f.values.assign(3 * g, -1.0);
    }
    auto& slot = f.values[static_cast<std::size_t>(docset) * g + t];
    if (slot >= 0.0) {
      throw ValidationError(fmt::format("{}: duplicate row {},{},{},{}",
                                        path.string(), row[0], row[1], row[2],
                                        row[3]));
    }
    slot = ParseDouble(row[4]);
    ++filled[key];
  }
  std::vector<AnsatFeatures> table;
  for (auto& [key, f] : by_pair) {
    if (filled[key] != 3 * g) {
      throw ValidationError(fmt::format("{}: pair ({}, {}) has {} of {} rows",
                                        path.string(), key.first, key.second,
                                        filled[key], 3 * g));
    }
    table.push_back(std::move(f));
  }
  return table;
}

}  // namespace tasksim
