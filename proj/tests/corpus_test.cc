// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <string>
#include <vector>

#include "doctest.h"
#include "tasksim/common.h"
#include "tasksim/corpus.h"
#include "tasksim/synthetic.h"
#include "tasksim/text_io.h"
#include "test_util.h"

namespace tasksim {
namespace {

using testing::Doc;

std::vector<std::string> Ids(const std::vector<const Document*>& docs) {
  std::vector<std::string> ids;
  for (const auto* d : docs) ids.push_back(d->id);
  return ids;
}

Corpus SmallCorpus() {
  return Corpus::Create(
      {{"A", "A"}, {"B", "B"}},
      {Doc("d0", {"x"}, {"A", "B"}), Doc("d1", {"x", "y"}, {"A"}),
       Doc("d2", {"y"}, {}), Doc("d3", {"x", "z"}, {"A", "B"}),
       Doc("d4", {"z"}, {"B"})},
      std::vector<Split>{Split::kTrain, Split::kTest, Split::kTest,
                         Split::kTest, Split::kTest});
}

TEST_CASE("corpus file with 2 tasks and 4 docs") {
  const char* text =
      "{\"tasks\": [\"t1\", \"t2\"]}\n"
      "{\"id\": \"a\", \"event\": \"e\", \"tokens\": [\"Fire\"], "
      "\"labels\": [\"t1\"]}\n"
      "{\"id\": \"b\", \"event\": \"e\", \"tokens\": [\"water\"], "
      "\"labels\": []}\n"
      "{\"id\": \"c\", \"event\": \"f\", \"tokens\": [\"fire\", \"smoke\"], "
      "\"labels\": [\"t2\"]}\n"
      "{\"id\": \"d\", \"event\": \"f\", \"tokens\": [\"rain\"], "
      "\"labels\": [\"t1\", \"t2\"]}\n";
  auto corpus = ParseCorpus(text);
  CHECK(corpus.tasks().size() == 2);
  CHECK(corpus.documents().size() == 4);
  CHECK(corpus.DocumentById("c").tokens ==
        std::vector<std::string>{"fire", "smoke"});
}

TEST_CASE("undeclared label is rejected") {
  const char* text =
      "{\"tasks\": [\"t1\", \"t2\"]}\n"
      "{\"id\": \"a\", \"event\": \"e\", \"tokens\": [\"x\"], "
      "\"labels\": [\"t9\"]}\n";
  CHECK_THROWS_AS(ParseCorpus(text), ValidationError);
}

TEST_CASE("empty corpus file is rejected") {
  CHECK_THROWS_AS(ParseCorpus(""), ValidationError);
}

TEST_CASE("malformed line names its line number") {
  const char* text = "{\"tasks\": [\"t1\", \"t2\"]}\n{oops\n";
  try {
    ParseCorpus(text);
    FAIL("expected a parse error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("duplicate document id is rejected") {
  CHECK_THROWS_AS(Corpus::Create({{"A", "A"}, {"B", "B"}},
                                 {Doc("d1", {"x"}, {"A"}),
                                  Doc("d1", {"y"}, {"B"})}),
                  ValidationError);
}

TEST_CASE("positive documents") {
  auto corpus = SmallCorpus();
  CHECK(Ids(PositiveDocuments(corpus, {"A"}, Split::kTest)) ==
        std::vector<std::string>{"d1", "d3"});
  CHECK(Ids(PositiveDocuments(corpus, {"A", "B"}, Split::kTest)) ==
        std::vector<std::string>{"d3"});
  CHECK(Ids(PositiveDocuments(corpus, {"A"}, Split::kTrain)) ==
        std::vector<std::string>{"d0"});
  CHECK_THROWS_AS(PositiveDocuments(corpus, {"Q"}, Split::kTest),
                  ValidationError);

  auto disjoint = Corpus::Create(
      {{"A", "A"}, {"B", "B"}},
      {Doc("d0", {"x"}, {"A", "B"}), Doc("d1", {"x"}, {"A"}),
       Doc("d2", {"y"}, {"B"})},
      std::vector<Split>{Split::kTrain, Split::kTest, Split::kTest});
  CHECK(PositiveDocuments(disjoint, {"A", "B"}, Split::kTest).empty());
}

Corpus HundredDocs() {
  std::vector<Document> docs;
  for (int i = 0; i < 100; ++i) {
    std::vector<std::string> labels;
    if (i % 2 == 0) labels.push_back("A");
    if (i % 3 == 0) labels.push_back("B");
    docs.push_back(Doc("d" + std::to_string(i), {"w" + std::to_string(i % 7)},
                       labels));
  }
  return Corpus::Create({{"A", "A"}, {"B", "B"}}, std::move(docs));
}

TEST_CASE("split of 100 docs at 0.2 is 80/20 within one") {
  auto split = SplitCorpus(HundredDocs(), 0.2, 5);
  const auto test = split.IndicesIn(Split::kTest).size();
  CHECK(test >= 19);
  CHECK(test <= 21);
  CHECK(split.IndicesIn(Split::kTrain).size() == 100 - test);
}

TEST_CASE("split is deterministic in the seed") {
  auto a = SplitCorpus(HundredDocs(), 0.3, 11);
  auto b = SplitCorpus(HundredDocs(), 0.3, 11);
  CHECK(a.split() == b.split());
}

TEST_CASE("task with one positive cannot be stratified") {
  auto corpus = Corpus::Create(
      {{"A", "A"}, {"B", "B"}},
      {Doc("d1", {"x"}, {"A"}), Doc("d2", {"x"}, {"A"}),
       Doc("d3", {"y"}, {"B"}), Doc("d4", {"y"}, {})});
  try {
    SplitCorpus(corpus, 0.5, 1);
    FAIL("expected an infeasibility error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("B") != std::string::npos);
  }
}

TEST_CASE("corpus and split survive a file round trip") {
  auto dir = testing::TempDir("corpus_roundtrip");
  auto corpus = SplitCorpus(HundredDocs(), 0.25, 3);
  WriteCorpus(corpus, dir / "c.jsonl");
  WriteSplit(corpus, dir / "s.csv");
  auto back = LoadCorpus(dir / "c.jsonl");
  CHECK(back.documents().size() == corpus.documents().size());
  CHECK(back.vocabulary() == corpus.vocabulary());
  CHECK(LoadSplit(back, dir / "s.csv") == corpus.split());
}

SyntheticConfig TwoTaskConfig(double overlap) {
  SyntheticConfig cfg;
  cfg.n_tasks = 2;
  cfg.overlap_matrix = {{1.0, overlap}, {overlap, 1.0}};
  cfg.seed = 9;
  return cfg;
}

std::vector<std::string> Sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

TEST_CASE("overlap 1.0 gives identical signal vocabularies") {
  auto vocab = SignalVocabularies(TwoTaskConfig(1.0));
  CHECK(Sorted(vocab[0]) == Sorted(vocab[1]));
}

TEST_CASE("overlap 0.0 gives disjoint signal vocabularies") {
  auto vocab = SignalVocabularies(TwoTaskConfig(0.0));
  auto a = Sorted(vocab[0]);
  auto b = Sorted(vocab[1]);
  std::vector<std::string> shared;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(shared));
  CHECK(shared.empty());
}

TEST_CASE("synthetic generation is byte-identical for a fixed seed") {
  auto dir = testing::TempDir("synth_determinism");
  SyntheticConfig cfg = TwoTaskConfig(0.3);
  WriteCorpus(GenerateSynthetic(cfg), dir / "a.jsonl");
  WriteCorpus(GenerateSynthetic(cfg), dir / "b.jsonl");
  CHECK(ReadFile(dir / "a.jsonl") == ReadFile(dir / "b.jsonl"));
  cfg.seed = 10;
  WriteCorpus(GenerateSynthetic(cfg), dir / "c.jsonl");
  CHECK(ReadFile(dir / "a.jsonl") != ReadFile(dir / "c.jsonl"));
}

TEST_CASE("inconsistent synthetic configs are rejected") {
  auto cfg = TwoTaskConfig(0.3);
  cfg.overlap_matrix[0][1] = 0.4;
  CHECK_THROWS_AS(cfg.Validate(), ValidationError);

  SyntheticConfig crowded;
  crowded.n_tasks = 3;
  crowded.vocab_task_size = 4;
  crowded.overlap_matrix = {{1.0, 0.9, 0.9}, {0.9, 1.0, 0.9},
                            {0.9, 0.9, 1.0}};
  crowded.overlap_matrix[0][1] = crowded.overlap_matrix[1][0] = 0.75;
  crowded.overlap_matrix[0][2] = crowded.overlap_matrix[2][0] = 0.75;
  crowded.overlap_matrix[1][2] = crowded.overlap_matrix[2][1] = 0.5;
  CHECK_THROWS_AS(crowded.Validate(), ValidationError);
}

TEST_CASE("ring overlap levels by ring distance") {
  auto m = RingOverlap(8, {0.30, 0.15, 0.05});
  CHECK(m[0][0] == 1.0);
  CHECK(m[0][1] == 0.30);
  CHECK(m[0][7] == 0.30);
  CHECK(m[0][2] == 0.15);
  CHECK(m[0][3] == 0.05);
  CHECK(m[0][4] == 0.0);
}

}  // namespace
}  // namespace tasksim
