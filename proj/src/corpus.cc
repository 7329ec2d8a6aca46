// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#include "tasksim/corpus.h"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/core.h>

#include "json.hpp"
#include "tasksim/common.h"
#include "tasksim/text_io.h"

namespace tasksim {

using nlohmann::json;

std::string_view SplitName(Split split) {
  return split == Split::kTrain ? "train" : "test";
}

Split ParseSplit(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  throw ValidationError(fmt::format("unknown split '{}'", name));
}

bool Document::IsPositive(std::string_view task) const {
  return std::binary_search(labels.begin(), labels.end(), task);
}

std::string NormalizeToken(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  for (unsigned char c : token) {
    if (std::ispunct(c) || std::isspace(c)) continue;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (in >> raw) {
    auto token = NormalizeToken(raw);
    if (!token.empty()) tokens.push_back(std::move(token));
  }
  return tokens;
}

Corpus Corpus::Create(std::vector<TaskSpec> tasks,
                      std::vector<Document> documents,
                      std::optional<std::vector<Split>> split) {
  Corpus corpus;
  corpus.tasks_ = std::move(tasks);
  corpus.documents_ = std::move(documents);
  for (auto& doc : corpus.documents_) {
    std::sort(doc.labels.begin(), doc.labels.end());
    doc.labels.erase(std::unique(doc.labels.begin(), doc.labels.end()),
                     doc.labels.end());
  }
  corpus.Validate();

  for (std::size_t i = 0; i < corpus.documents_.size(); ++i) {
    auto& doc = corpus.documents_[i];
    corpus.doc_index_.emplace(doc.id, i);
    doc.term_ids.clear();
    doc.term_ids.reserve(doc.tokens.size());
    for (const auto& token : doc.tokens) {
      auto [it, inserted] = corpus.term_index_.emplace(
          token, static_cast<std::int32_t>(corpus.vocabulary_.size()));
      if (inserted) corpus.vocabulary_.push_back(token);
      doc.term_ids.push_back(it->second);
    }
  }
  if (split) {
    corpus.split_ = std::move(*split);
    corpus.ValidateSplit();
  }
  return corpus;
}

void Corpus::Validate() const {
  if (tasks_.size() < 2) {
    throw ValidationError(
        fmt::format("corpus needs at least 2 tasks, got {}", tasks_.size()));
  }
  std::set<std::string> task_ids;
  for (const auto& task : tasks_) {
    if (task.id.empty() || task.id.find(',') != std::string::npos) {
      throw ValidationError(fmt::format("invalid task id '{}'", task.id));
    }
    if (!task_ids.insert(task.id).second) {
      throw ValidationError(fmt::format("duplicate task id '{}'", task.id));
    }
  }
  std::set<std::string_view> doc_ids;
  for (const auto& doc : documents_) {
    if (doc.id.empty() || doc.id.find(',') != std::string::npos) {
      throw ValidationError(fmt::format("invalid document id '{}'", doc.id));
    }
    if (!doc_ids.insert(doc.id).second) {
      throw ValidationError(fmt::format("duplicate document id '{}'", doc.id));
    }
    if (doc.tokens.empty()) {
      throw ValidationError(fmt::format("document '{}' has no tokens", doc.id));
    }
    for (const auto& label : doc.labels) {
      if (!task_ids.count(label)) {
        throw ValidationError(fmt::format(
            "document '{}' labelled with undeclared task '{}'", doc.id, label));
      }
    }
  }
}

void Corpus::ValidateSplit() const {
  if (split_.size() != documents_.size()) {
    throw ValidationError(fmt::format("split covers {} of {} documents",
                                      split_.size(), documents_.size()));
  }
  for (const auto& task : tasks_) {
    int train = 0;
    int test = 0;
    for (std::size_t i = 0; i < documents_.size(); ++i) {
      if (!documents_[i].IsPositive(task.id)) continue;
      (split_[i] == Split::kTrain ? train : test)++;
    }
    if (train == 0 || test == 0) {
      throw ValidationError(fmt::format(
          "task '{}' has {} positive train and {} positive test documents; "
          "need at least one of each",
          task.id, train, test));
    }
  }
}

std::vector<std::string> Corpus::task_ids() const {
  std::vector<std::string> ids;
  ids.reserve(tasks_.size());
  for (const auto& task : tasks_) ids.push_back(task.id);
  return ids;
}

bool Corpus::HasTask(std::string_view task) const {
  return std::any_of(tasks_.begin(), tasks_.end(),
                     [&](const TaskSpec& t) { return t.id == task; });
}

std::optional<std::int32_t> Corpus::TermId(std::string_view term) const {
  auto it = term_index_.find(std::string(term));
  if (it == term_index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Corpus::DocumentIndex(std::string_view id) const {
  auto it = doc_index_.find(std::string(id));
  if (it == doc_index_.end()) {
    throw ValidationError(fmt::format("unknown document '{}'", id));
  }
  return it->second;
}

const Document& Corpus::DocumentById(std::string_view id) const {
  return documents_[DocumentIndex(id)];
}

Corpus Corpus::WithSplit(std::vector<Split> split) const {
  Corpus copy = *this;
  copy.split_ = std::move(split);
  copy.ValidateSplit();
  return copy;
}

std::vector<std::size_t> Corpus::IndicesIn(Split split) const {
  if (!has_split()) throw ValidationError("corpus has no train/test split");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split_.size(); ++i) {
    if (split_[i] == split) out.push_back(i);
  }
  return out;
}

std::vector<const Document*> PositiveDocuments(
    const Corpus& corpus, const std::vector<std::string>& tasks, Split split) {
  if (tasks.empty()) throw ValidationError("empty task set");
  for (const auto& task : tasks) {
    if (!corpus.HasTask(task)) {
      throw ValidationError(fmt::format("unknown task '{}'", task));
    }
  }
  std::vector<const Document*> out;
  for (auto i : corpus.IndicesIn(split)) {
    const auto& doc = corpus.documents()[i];
    if (std::all_of(tasks.begin(), tasks.end(),
                    [&](const std::string& t) { return doc.IsPositive(t); })) {
      out.push_back(&doc);
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Document* a, const Document* b) { return a->id < b->id; });
  return out;
}

Corpus SplitCorpus(const Corpus& corpus, double test_fraction,
                   std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError(
        fmt::format("test_fraction must be in (0,1), got {}", test_fraction));
  }
  const auto& docs = corpus.documents();
  const auto n = docs.size();

  // Seeded shuffle, then a stable regroup by stratum (lowest positive task,
  // "" for all-negative documents). Systematic sampling over the grouped
  // order puts floor((i+1)f) - floor(i f) documents into test at position i,
  // which keeps both the total and every stratum within one of its share.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(MixSeed(seed, "split"));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[UniformIndex(rng, i)]);
  }
  auto stratum = [&](std::size_t i) -> const std::string& {
    static const std::string kNone;
    return docs[i].labels.empty() ? kNone : docs[i].labels.front();
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return stratum(a) < stratum(b);
                   });

  std::vector<Split> split(n, Split::kTrain);
  for (std::size_t i = 0; i < n; ++i) {
    auto before = static_cast<long long>(static_cast<double>(i) * test_fraction);
    auto after =
        static_cast<long long>(static_cast<double>(i + 1) * test_fraction);
    if (after > before) split[order[i]] = Split::kTest;
  }

  for (const auto& task : corpus.tasks()) {
    int train = 0;
    int test = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!docs[i].IsPositive(task.id)) continue;
      (split[i] == Split::kTrain ? train : test)++;
    }
    if (train == 0 || test == 0) {
      throw ValidationError(fmt::format(
          "cannot stratify: task '{}' has {} positive documents, needs at "
          "least one in each split",
          task.id, train + test));
    }
  }
  return corpus.WithSplit(std::move(split));
}

Corpus ParseCorpus(std::string_view text) {
  auto lines = SplitLines(text);
  std::vector<TaskSpec> tasks;
  std::vector<Document> documents;
  bool have_header = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(
          fmt::format("line {}: malformed JSON: {}", i + 1, e.what()));
    }
    try {
      if (!have_header) {
        auto ids = row.at("tasks").get<std::vector<std::string>>();
        std::vector<std::string> names = ids;
        if (row.contains("names")) {
          names = row.at("names").get<std::vector<std::string>>();
          if (names.size() != ids.size()) {
            throw ValidationError(
                fmt::format("line {}: names/tasks length mismatch", i + 1));
          }
        }
        for (std::size_t t = 0; t < ids.size(); ++t) {
          tasks.push_back({ids[t], names[t]});
        }
        have_header = true;
        continue;
      }
      Document doc;
      doc.id = row.at("id").get<std::string>();
      doc.event_id = row.at("event").get<std::string>();
      for (const auto& raw : row.at("tokens").get<std::vector<std::string>>()) {
        auto token = NormalizeToken(raw);
        if (!token.empty()) doc.tokens.push_back(std::move(token));
      }
      doc.labels = row.at("labels").get<std::vector<std::string>>();
      documents.push_back(std::move(doc));
    } catch (const json::exception& e) {
      throw ValidationError(
          fmt::format("line {}: schema error: {}", i + 1, e.what()));
    }
  }
  return Corpus::Create(std::move(tasks), std::move(documents));
}

Corpus LoadCorpus(const std::filesystem::path& path) {
  return ParseCorpus(ReadFile(path));
}

void WriteCorpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::string out;
  json header;
  header["tasks"] = corpus.task_ids();
  std::vector<std::string> names;
  bool names_differ = false;
  for (const auto& task : corpus.tasks()) {
    names.push_back(task.name);
    names_differ |= task.name != task.id;
  }
  if (names_differ) header["names"] = names;
  out += header.dump();
  out += '\n';
  for (const auto& doc : corpus.documents()) {
    json row;
    row["id"] = doc.id;
    row["event"] = doc.event_id;
    row["tokens"] = doc.tokens;
    row["labels"] = doc.labels;
    out += row.dump();
    out += '\n';
  }
  WriteFileAtomic(path, out);
}

std::vector<Split> LoadSplit(const Corpus& corpus,
                             const std::filesystem::path& path) {
  std::vector<std::optional<Split>> assigned(corpus.documents().size());
  for (const auto& row : ReadCsv(path, "doc_id,split")) {
    auto index = corpus.DocumentIndex(row[0]);
    if (assigned[index]) {
      throw ValidationError(
          fmt::format("{}: document '{}' listed twice", path.string(), row[0]));
    }
    assigned[index] = ParseSplit(row[1]);
  }
  std::vector<Split> split;
  for (std::size_t i = 0; i < assigned.size(); ++i) {
    if (!assigned[i]) {
      throw ValidationError(fmt::format("{}: document '{}' not assigned",
                                        path.string(),
                                        corpus.documents()[i].id));
    }
    split.push_back(*assigned[i]);
  }
  return split;
}

void WriteSplit(const Corpus& corpus, const std::filesystem::path& path) {
  std::string out = "doc_id,split\n";
  for (std::size_t i = 0; i < corpus.documents().size(); ++i) {
    out += corpus.documents()[i].id;
    out += ',';
    out += SplitName(corpus.split_of(i));
    out += '\n';
  }
  WriteFileAtomic(path, out);
}

}  // namespace tasksim
