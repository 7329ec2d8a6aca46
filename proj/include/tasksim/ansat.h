// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

// Average Number of Shared Active Terms between two single-task models.
//
// A term w of document d is active for a model at threshold tat when its
// layer-averaged, normalized conductance c_w >= tat. For a document set D,
//
//   ANSAT(M_A, M_B, D, tat) = (1/|D|) sum_{d in D} |{w in d : c^A_w >= tat
//                                                     and c^B_w >= tat}|
//
// with each term counted once per document. Because tat > 0, negatively
// attributed terms never count.

#ifndef TASKSIM_ANSAT_H_
#define TASKSIM_ANSAT_H_

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tasksim/attribution.h"
#include "tasksim/corpus.h"

namespace tasksim {

struct TatGrid {
  std::vector<double> thresholds;

  // 0.05, 0.10, ..., 0.70.
  static TatGrid Default();
  void Validate() const;
};

enum class DocSet { kA = 0, kB = 1, kAB = 2 };
inline constexpr DocSet kDocSets[] = {DocSet::kA, DocSet::kB, DocSet::kAB};
std::string_view DocSetTag(DocSet docset);  // "DA", "DB", "DAB"
DocSet ParseDocSet(std::string_view tag);

// Attributions of one model, keyed by document id.
using AttributionSet = std::map<std::string, AttributionRecord>;
AttributionSet IndexRecords(std::vector<AttributionRecord> records);

std::set<std::string> ActiveTerms(const AttributionRecord& record, double tat);

struct AnsatValue {
  double value = 0.0;
  bool empty_docset = false;
};

// Throws ValidationError naming the document if either model lacks a record
// for one of `docs`.
AnsatValue Ansat(const AttributionSet& records_a,
                 const AttributionSet& records_b,
                 std::span<const Document* const> docs, double tat);

struct AnsatFeatures {
  std::string task_a;
  std::string task_b;
  // Docset-major: values[docset * grid size + tat index].
  std::vector<double> values;
  // Which of DA/DB/DAB were empty.
  std::array<bool, 3> empty{};

  double At(DocSet docset, std::size_t tat_index) const;
};

// Attribution sets of the single-task models, keyed by task id.
using AttributionCache = std::map<std::string, AttributionSet>;

// Features for every ordered pair of distinct tasks, in lexicographic
// (task_a, task_b) order. Document sets come from `split`. Pairs are computed
// on up to `jobs` OpenMP threads with identical results for any `jobs`.
std::vector<AnsatFeatures> FeatureTable(const Corpus& corpus,
                                        const AttributionCache& cache,
                                        const TatGrid& grid,
                                        Split split = Split::kTest,
                                        int jobs = 1);

// Throws ValidationError listing every (task, doc) the cache is missing for
// the positive documents of `split`.
void CheckCacheComplete(const Corpus& corpus, const AttributionCache& cache,
                        Split split);

// CSV `task_a,task_b,docset,tat,ansat`, rows sorted by
// (task_a, task_b, docset, tat), 6 decimals.
std::string SerializeFeatureTable(std::span<const AnsatFeatures> table,
                                  const TatGrid& grid);
void WriteFeatureTable(std::span<const AnsatFeatures> table,
                       const TatGrid& grid, const std::filesystem::path& path);
std::vector<AnsatFeatures> ReadFeatureTable(const std::filesystem::path& path,
                                            const TatGrid& grid);

}  // namespace tasksim

#endif  // TASKSIM_ANSAT_H_
