// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef TASKSIM_CORPUS_H_
#define TASKSIM_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tasksim {

enum class Split { kTrain, kTest };

std::string_view SplitName(Split split);
Split ParseSplit(std::string_view name);

struct TaskSpec {
  std::string id;
  std::string name;
};

struct Document {
  std::string id;
  std::string event_id;
  std::vector<std::string> tokens;
  // Sorted, unique task ids this document is positive for.
  std::vector<std::string> labels;
  // Vocabulary index of every token, filled in by Corpus.
  std::vector<std::int32_t> term_ids;

  bool IsPositive(std::string_view task) const;
};

// Lowercases, strips punctuation and splits on whitespace.
std::vector<std::string> Tokenize(std::string_view text);

// Normalizes a single pre-split token the same way Tokenize does. May return
// an empty string if the token was all punctuation.
std::string NormalizeToken(std::string_view token);

// An immutable, validated collection of labelled documents.
//
// The vocabulary is built in first-occurrence order over the documents as
// given. A split is optional at construction time; once set, every task must
// have at least one positive document in each half.
class Corpus {
 public:
  static Corpus Create(std::vector<TaskSpec> tasks,
                       std::vector<Document> documents,
                       std::optional<std::vector<Split>> split = std::nullopt);

  const std::vector<TaskSpec>& tasks() const { return tasks_; }
  const std::vector<Document>& documents() const { return documents_; }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  bool has_split() const { return !split_.empty(); }
  Split split_of(std::size_t doc_index) const { return split_.at(doc_index); }
  const std::vector<Split>& split() const { return split_; }

  std::vector<std::string> task_ids() const;
  bool HasTask(std::string_view task) const;
  std::optional<std::int32_t> TermId(std::string_view term) const;
  const Document& DocumentById(std::string_view id) const;
  std::size_t DocumentIndex(std::string_view id) const;

  // Returns a copy of this corpus carrying the given split.
  Corpus WithSplit(std::vector<Split> split) const;

  // Indices of documents in `split`, in corpus order.
  std::vector<std::size_t> IndicesIn(Split split) const;

 private:
  Corpus() = default;
  void Validate() const;
  void ValidateSplit() const;

  std::vector<TaskSpec> tasks_;
  std::vector<Document> documents_;
  std::vector<std::string> vocabulary_;
  std::unordered_map<std::string, std::int32_t> term_index_;
  std::unordered_map<std::string, std::size_t> doc_index_;
  std::vector<Split> split_;
};

// Documents of `split` that are positive for every task in `tasks`, ordered
// by document id. A two-task set yields the intersection of both positive
// sets, which may be empty.
std::vector<const Document*> PositiveDocuments(
    const Corpus& corpus, const std::vector<std::string>& tasks, Split split);

// Deterministic split stratified on each document's lowest positive task.
// Throws ValidationError naming the task if any task would end up without a
// positive document on either side.
Corpus SplitCorpus(const Corpus& corpus, double test_fraction,
                   std::uint64_t seed);

// JSONL: a header line {"tasks": [...]} followed by one document per line,
// {"id", "event", "tokens", "labels"}. Task names default to their ids; an
// optional "names" array in the header overrides them.
Corpus LoadCorpus(const std::filesystem::path& path);
Corpus ParseCorpus(std::string_view text);
void WriteCorpus(const Corpus& corpus, const std::filesystem::path& path);

// CSV `doc_id,split` with a header row.
std::vector<Split> LoadSplit(const Corpus& corpus,
                             const std::filesystem::path& path);
void WriteSplit(const Corpus& corpus, const std::filesystem::path& path);

}  // namespace tasksim

#endif  // TASKSIM_CORPUS_H_
