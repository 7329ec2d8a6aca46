// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#include "tasksim/pipeline.h"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <tuple>

#include <fmt/core.h>

#include "json.hpp"
#include "tasksim/common.h"
#include "tasksim/corpus.h"
#include "tasksim/metrics.h"
#include "tasksim/parallel.h"
#include "tasksim/text_io.h"

namespace tasksim {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

namespace {

void CheckKeys(const json& object, std::string_view where,
               std::initializer_list<std::string_view> allowed) {
  if (!object.is_object()) {
    throw ValidationError(fmt::format("config: '{}' must be an object", where));
  }
  for (const auto& [key, value] : object.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError(
          fmt::format("config: unknown key '{}' in '{}'", key, where));
    }
  }
}

template <typename T>
void Get(const json& object, const char* key, T& out) {
  if (!object.contains(key)) return;
  try {
    out = object.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("config: bad value for '{}': {}", key,
                                      e.what()));
  }
}

std::string_view RowsName(RegressionRows rows) {
  return rows == RegressionRows::kPerRun ? "per-run" : "best-per-pair";
}
std::string_view RankingName(RankingScope scope) {
  return scope == RankingScope::kGlobal ? "global" : "per-target";
}
std::string_view BudgetUnitName(BudgetUnit unit) {
  return unit == BudgetUnit::kPairCollapsed ? "pair-collapsed" : "per-run";
}
std::string_view RuleName(PathRule rule) {
  return rule == PathRule::kRight ? "right" : "midpoint";
}

template <typename E>
E ParseEnum(std::string_view what, const std::string& name,
            std::initializer_list<std::pair<std::string_view, E>> options) {
  for (const auto& [n, e] : options) {
    if (n == name) return e;
  }
  throw ValidationError(fmt::format("config: unknown {} '{}'", what, name));
}

}  // namespace

void PipelineConfig::Validate() const {
  if (jobs < 1) throw ValidationError("jobs must be >= 1");
  if (split_path && !corpus_path) {
    throw ValidationError("split_path given without corpus path");
  }
  if (!corpus_path) synthetic.Validate();
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError(
        fmt::format("test_fraction {} outside (0, 1)", test_fraction));
  }
  if (learning_rates.empty() || epochs.empty() || batch_sizes.empty()) {
    throw ValidationError("empty hyperparameter grid");
  }
  for (const auto& hp : Grid()) hp.Validate();
  if (dims.embed < 1 || dims.hidden < 1) {
    throw ValidationError("model dimensions must be >= 1");
  }
  if (!(init_scale > 0.0)) throw ValidationError("init_scale must be > 0");
  ig.Validate();
  tat.Validate();
  gbt.Validate();
  if (feature_modes.empty()) throw ValidationError("no feature modes");
  if (rmse_k_fractions.empty()) throw ValidationError("no rmse k fractions");
  for (double f : rmse_k_fractions) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw ValidationError(fmt::format("k fraction {} outside (0, 1]", f));
    }
  }
  if (tolerances.empty()) throw ValidationError("no tolerances");
  for (double t : tolerances) {
    if (!(t >= 0.0 && t < 1.0)) {
      throw ValidationError(fmt::format("tolerance {} outside [0, 1)", t));
    }
  }
  if (!(max_mean_completeness_gap >= 0.0)) {
    throw ValidationError("max_mean_completeness_gap must be >= 0");
  }
}

std::vector<Hyperparams> PipelineConfig::Grid() const {
  return MakeGrid(learning_rates, epochs, batch_sizes, seed);
}

SyntheticConfig PipelineConfig::SeededSynthetic() const {
  SyntheticConfig s = synthetic;
  s.seed = MixSeed(seed, "corpus");
  return s;
}

PipelineConfig ParsePipelineConfig(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("config: {}", e.what()));
  }
  CheckKeys(root, "<root>",
            {"seed", "jobs", "corpus", "training", "attribution", "ansat",
             "regressor", "evaluation"});
  PipelineConfig c;
  Get(root, "seed", c.seed);
  Get(root, "jobs", c.jobs);

  if (root.contains("corpus")) {
    const auto& j = root["corpus"];
    CheckKeys(j, "corpus", {"path", "split_path", "test_fraction", "synthetic"});
    if (j.contains("path")) c.corpus_path = j["path"].get<std::string>();
    if (j.contains("split_path")) {
      c.split_path = j["split_path"].get<std::string>();
    }
    Get(j, "test_fraction", c.test_fraction);
    if (j.contains("synthetic")) {
      const auto& s = j["synthetic"];
      CheckKeys(s, "corpus.synthetic",
                {"n_tasks", "docs_per_task", "negative_docs", "vocab_core_size",
                 "vocab_task_size", "overlap_matrix", "ring_overlap",
                 "doc_length", "signal_fraction", "co_label_rate",
                 "label_noise", "n_events"});
      auto& sc = c.synthetic;
      Get(s, "n_tasks", sc.n_tasks);
      Get(s, "docs_per_task", sc.docs_per_task);
      Get(s, "negative_docs", sc.negative_docs);
      Get(s, "vocab_core_size", sc.vocab_core_size);
      Get(s, "vocab_task_size", sc.vocab_task_size);
      Get(s, "doc_length", sc.doc_length);
      Get(s, "signal_fraction", sc.signal_fraction);
      Get(s, "co_label_rate", sc.co_label_rate);
      Get(s, "label_noise", sc.label_noise);
      Get(s, "n_events", sc.n_events);
      if (s.contains("overlap_matrix") && s.contains("ring_overlap")) {
        throw ValidationError(
            "config: give overlap_matrix or ring_overlap, not both");
      }
      Get(s, "overlap_matrix", sc.overlap_matrix);
      if (s.contains("ring_overlap")) {
        std::vector<double> levels;
        Get(s, "ring_overlap", levels);
        sc.overlap_matrix = RingOverlap(sc.n_tasks, levels);
      }
    }
  }
  if (root.contains("training")) {
    const auto& j = root["training"];
    CheckKeys(j, "training",
              {"learning_rates", "epochs", "batch_sizes", "embed_dim",
               "hidden_dim", "init_scale", "save_pair_checkpoints",
               "reset_head"});
    Get(j, "learning_rates", c.learning_rates);
    Get(j, "epochs", c.epochs);
    Get(j, "batch_sizes", c.batch_sizes);
    Get(j, "embed_dim", c.dims.embed);
    Get(j, "hidden_dim", c.dims.hidden);
    Get(j, "init_scale", c.init_scale);
    Get(j, "save_pair_checkpoints", c.save_pair_checkpoints);
    Get(j, "reset_head", c.reset_head);
  }
  if (root.contains("attribution")) {
    const auto& j = root["attribution"];
    CheckKeys(j, "attribution",
              {"steps", "baseline", "rule", "max_mean_completeness_gap"});
    Get(j, "steps", c.ig.steps);
    if (j.contains("baseline")) {
      c.ig.baseline = ParseBaseline(j["baseline"].get<std::string>());
    }
    if (j.contains("rule")) {
      c.ig.rule = ParseEnum<PathRule>(
          "path rule", j["rule"].get<std::string>(),
          {{"right", PathRule::kRight}, {"midpoint", PathRule::kMidpoint}});
    }
    Get(j, "max_mean_completeness_gap", c.max_mean_completeness_gap);
  }
  if (root.contains("ansat")) {
    const auto& j = root["ansat"];
    CheckKeys(j, "ansat", {"tat", "split"});
    Get(j, "tat", c.tat.thresholds);
    if (j.contains("split")) {
      c.ansat_split = ParseSplit(j["split"].get<std::string>());
    }
  }
  if (root.contains("regressor")) {
    const auto& j = root["regressor"];
    CheckKeys(j, "regressor",
              {"rounds", "max_depth", "eta", "lambda", "gamma",
               "min_child_weight", "feature_modes", "rows"});
    Get(j, "rounds", c.gbt.rounds);
    Get(j, "max_depth", c.gbt.max_depth);
    Get(j, "eta", c.gbt.eta);
    Get(j, "lambda", c.gbt.lambda);
    Get(j, "gamma", c.gbt.gamma);
    Get(j, "min_child_weight", c.gbt.min_child_weight);
    if (j.contains("feature_modes")) {
      c.feature_modes.clear();
      for (const auto& m : j["feature_modes"]) {
        c.feature_modes.push_back(ParseFeatureMode(m.get<std::string>()));
      }
    }
    if (j.contains("rows")) {
      c.regression_rows = ParseEnum<RegressionRows>(
          "regression rows", j["rows"].get<std::string>(),
          {{"per-run", RegressionRows::kPerRun},
           {"best-per-pair", RegressionRows::kBestPerPair}});
    }
  }
  if (root.contains("evaluation")) {
    const auto& j = root["evaluation"];
    CheckKeys(j, "evaluation",
              {"rmse_k_fractions", "ranking", "budget_unit", "tolerances"});
    Get(j, "rmse_k_fractions", c.rmse_k_fractions);
    Get(j, "tolerances", c.tolerances);
    if (j.contains("ranking")) {
      c.ranking = ParseEnum<RankingScope>(
          "ranking", j["ranking"].get<std::string>(),
          {{"global", RankingScope::kGlobal},
           {"per-target", RankingScope::kPerTarget}});
    }
    if (j.contains("budget_unit")) {
      c.budget_unit = ParseEnum<BudgetUnit>(
          "budget unit", j["budget_unit"].get<std::string>(),
          {{"pair-collapsed", BudgetUnit::kPairCollapsed},
           {"per-run", BudgetUnit::kPerRun}});
    }
  }
  c.gbt.seed = c.seed;
  c.Validate();
  return c;
}

PipelineConfig LoadPipelineConfig(const fs::path& path) {
  return ParsePipelineConfig(ReadFile(path));
}

namespace {

json ConfigJson(const PipelineConfig& c, bool include_jobs) {
  json root;
  root["seed"] = c.seed;
  if (include_jobs) root["jobs"] = c.jobs;
  json corpus;
  if (c.corpus_path) corpus["path"] = *c.corpus_path;
  if (c.split_path) corpus["split_path"] = *c.split_path;
  corpus["test_fraction"] = c.test_fraction;
  if (!c.corpus_path) {
    const auto& s = c.synthetic;
    corpus["synthetic"] = {{"n_tasks", s.n_tasks},
                           {"docs_per_task", s.docs_per_task},
                           {"negative_docs", s.negative_docs},
                           {"vocab_core_size", s.vocab_core_size},
                           {"vocab_task_size", s.vocab_task_size},
                           {"overlap_matrix", s.overlap_matrix},
                           {"doc_length", s.doc_length},
                           {"signal_fraction", s.signal_fraction},
                           {"co_label_rate", s.co_label_rate},
                           {"label_noise", s.label_noise},
                           {"n_events", s.n_events}};
  }
  root["corpus"] = corpus;
  root["training"] = {{"learning_rates", c.learning_rates},
                      {"epochs", c.epochs},
                      {"batch_sizes", c.batch_sizes},
                      {"embed_dim", c.dims.embed},
                      {"hidden_dim", c.dims.hidden},
                      {"init_scale", c.init_scale},
                      {"save_pair_checkpoints", c.save_pair_checkpoints},
                      {"reset_head", c.reset_head}};
  root["attribution"] = {
      {"steps", c.ig.steps},
      {"baseline", std::string(BaselineName(c.ig.baseline))},
      {"rule", std::string(RuleName(c.ig.rule))},
      {"max_mean_completeness_gap", c.max_mean_completeness_gap}};
  root["ansat"] = {{"tat", c.tat.thresholds},
                   {"split", std::string(SplitName(c.ansat_split))}};
  json modes = json::array();
  for (auto m : c.feature_modes) modes.push_back(std::string(FeatureModeName(m)));
  root["regressor"] = {{"rounds", c.gbt.rounds},
                       {"max_depth", c.gbt.max_depth},
                       {"eta", c.gbt.eta},
                       {"lambda", c.gbt.lambda},
                       {"gamma", c.gbt.gamma},
                       {"min_child_weight", c.gbt.min_child_weight},
                       {"feature_modes", modes},
                       {"rows", std::string(RowsName(c.regression_rows))}};
  root["evaluation"] = {
      {"rmse_k_fractions", c.rmse_k_fractions},
      {"ranking", std::string(RankingName(c.ranking))},
      {"budget_unit", std::string(BudgetUnitName(c.budget_unit))},
      {"tolerances", c.tolerances}};
  return root;
}

// Hash of everything that can change an artifact; `jobs` cannot.
std::string ConfigDigest(const PipelineConfig& c) {
  return Sha256Hex(ConfigJson(c, false).dump());
}

}  // namespace

std::string PipelineConfigToJson(const PipelineConfig& config) {
  return ConfigJson(config, true).dump(2) + "\n";
}

PipelineConfig ReferenceConfig(std::uint64_t seed) {
  PipelineConfig c;
  c.seed = seed;
  c.test_fraction = 0.5;
  auto& s = c.synthetic;
  s.n_tasks = 8;
  s.docs_per_task = 300;
  s.negative_docs = 300;
  s.vocab_core_size = 300;
  s.vocab_task_size = 24;
  s.overlap_matrix = RingOverlap(8, {0.30, 0.15, 0.05});
  s.doc_length = 16;
  s.signal_fraction = 0.5;
  s.co_label_rate = 1.0;
  s.n_events = 4;
  c.learning_rates = {0.25, 0.5, 1.0};
  c.epochs = {1, 3};
  c.batch_sizes = {16, 64};
  c.init_scale = 0.5;
  c.gbt.seed = seed;
  return c;
}

// ---------------------------------------------------------------------------
// Names

std::string_view StageName(Stage stage) {
  switch (stage) {
    case Stage::kSynth: return "synth";
    case Stage::kTrainSingles: return "train-singles";
    case Stage::kTrainPairs: return "train-pairs";
    case Stage::kAttribute: return "attribute";
    case Stage::kAnsat: return "ansat";
    case Stage::kFit: return "fit";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kReport: return "report";
  }
  return "?";
}

Stage ParseStage(std::string_view name) {
  for (auto s : kAllStages) {
    if (StageName(s) == name) return s;
  }
  throw ValidationError(fmt::format("unknown stage '{}'", name));
}

std::string AttributionFileName(const std::string& task) {
  return "attr_" + task + ".jsonl";
}

// ---------------------------------------------------------------------------
// Ledgers

std::string FormatLedgerRow(const LedgerRow& row) {
  const auto& r = row.run;
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{}", row.run_id,
                     r.target_task, r.source_task.value_or(""),
                     r.hyperparams.learning_rate, r.hyperparams.epochs,
                     r.hyperparams.batch_size, r.hyperparams.seed,
                     FormatFixed6(r.runtime_seconds),
                     FormatFixed6(r.positive_f1), FormatFixed6(r.accuracy),
                     r.params_ref);
}

std::vector<LedgerRow> ReadLedger(const fs::path& path) {
  std::vector<LedgerRow> out;
  for (const auto& f : ReadCsv(path, kLedgerHeader)) {
    LedgerRow row;
    row.run_id = f[0];
    row.run.target_task = f[1];
    if (!f[2].empty()) row.run.source_task = f[2];
    row.run.hyperparams.learning_rate = ParseDouble(f[3]);
    row.run.hyperparams.epochs = static_cast<int>(ParseInt(f[4]));
    row.run.hyperparams.batch_size = static_cast<int>(ParseInt(f[5]));
    row.run.hyperparams.seed = static_cast<std::uint64_t>(ParseInt(f[6]));
    row.run.runtime_seconds = ParseDouble(f[7]);
    row.run.positive_f1 = ParseDouble(f[8]);
    row.run.accuracy = ParseDouble(f[9]);
    row.run.params_ref = f[10];
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<BestSingle> ReadSinglesBest(const fs::path& path) {
  std::vector<BestSingle> out;
  for (const auto& f :
       ReadCsv(path, "task,run_id,positive_f1,checkpoint_path")) {
    out.push_back({f[0], f[1], ParseDouble(f[2]), f[3]});
  }
  return out;
}

namespace {

std::string SingleRunId(const std::string& task, std::size_t grid_index) {
  return fmt::format("single:{}:{:02d}", task, grid_index);
}
std::string PairRunId(const std::string& source, const std::string& target,
                      std::size_t grid_index) {
  return fmt::format("pair:{}:{}:{:02d}", source, target, grid_index);
}
std::string CheckpointName(const std::string& run_id) {
  std::string name = run_id;
  std::replace(name.begin(), name.end(), ':', '_');
  return "checkpoints/" + name + ".ckpt";
}
// Grid index is the last field of every run id.
std::size_t GridIndexOf(const std::string& run_id) {
  return static_cast<std::size_t>(
      ParseInt(run_id.substr(run_id.rfind(':') + 1)));
}

// ---------------------------------------------------------------------------
// Stage bookkeeping

struct StageRecord {
  std::string config;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
};

using StageBook = std::map<std::string, StageRecord>;

StageBook ReadBook(const fs::path& out_dir) {
  StageBook book;
  const auto path = out_dir / artifacts::kStages;
  if (!fs::exists(path)) return book;
  json root;
  try {
    root = json::parse(ReadFile(path));
    for (const auto& [stage, rec] : root.items()) {
      StageRecord r;
      r.config = rec.at("config").get<std::string>();
      r.inputs = rec.at("inputs").get<std::map<std::string, std::string>>();
      r.outputs = rec.at("outputs").get<std::map<std::string, std::string>>();
      book[stage] = std::move(r);
    }
  } catch (const json::exception& e) {
    throw ValidationError(
        fmt::format("{}: corrupt stage manifest: {}", path.string(), e.what()));
  }
  return book;
}

void WriteBook(const StageBook& book, const fs::path& out_dir) {
  json root = json::object();
  for (const auto& [stage, r] : book) {
    root[stage] = {{"config", r.config},
                   {"inputs", r.inputs},
                   {"outputs", r.outputs}};
  }
  WriteFileAtomic(out_dir / artifacts::kStages, root.dump(2) + "\n");
}

std::vector<Stage> Dependencies(Stage stage) {
  switch (stage) {
    case Stage::kSynth: return {};
    case Stage::kTrainSingles: return {Stage::kSynth};
    case Stage::kTrainPairs: return {Stage::kSynth, Stage::kTrainSingles};
    case Stage::kAttribute: return {Stage::kSynth, Stage::kTrainSingles};
    case Stage::kAnsat: return {Stage::kSynth, Stage::kAttribute};
    case Stage::kFit:
      return {Stage::kTrainSingles, Stage::kTrainPairs, Stage::kAnsat};
    case Stage::kEvaluate: return {Stage::kTrainPairs, Stage::kFit};
    case Stage::kReport:
      return {Stage::kSynth,  Stage::kTrainSingles, Stage::kTrainPairs,
              Stage::kAttribute, Stage::kAnsat,     Stage::kFit,
              Stage::kEvaluate};
  }
  return {};
}

// Hash of every upstream output, checked against what its producer recorded.
std::map<std::string, std::string> CheckInputs(Stage stage,
                                               const StageBook& book,
                                               const fs::path& out_dir) {
  std::map<std::string, std::string> inputs;
  for (Stage dep : Dependencies(stage)) {
    auto it = book.find(std::string(StageName(dep)));
    if (it == book.end()) {
      throw ValidationError(fmt::format("stage '{}' needs '{}' to run first",
                                        StageName(stage), StageName(dep)));
    }
    for (const auto& [rel, recorded] : it->second.outputs) {
      const auto path = out_dir / rel;
      if (!fs::exists(path)) {
        throw ValidationError(fmt::format(
            "{} is missing; rerun stage '{}'", path.string(), StageName(dep)));
      }
      const auto current = Sha256File(path);
      if (current != recorded) {
        throw ValidationError(fmt::format(
            "{} changed since stage '{}' wrote it; rerun that stage",
            path.string(), StageName(dep)));
      }
      inputs[rel] = current;
    }
  }
  return inputs;
}

bool OutputsIntact(const StageRecord& record, const fs::path& out_dir) {
  for (const auto& [rel, recorded] : record.outputs) {
    const auto path = out_dir / rel;
    if (!fs::exists(path) || Sha256File(path) != recorded) return false;
  }
  return true;
}

std::string Rel(const fs::path& path, const fs::path& out_dir) {
  return fs::relative(path, out_dir).generic_string();
}

struct Context {
  const PipelineConfig& config;
  fs::path out;
  // Digest of config + inputs; guards ledger reuse across changed inputs.
  std::string input_key;
};

Corpus LoadStageCorpus(const fs::path& out) {
  auto corpus = LoadCorpus(out / artifacts::kCorpus);
  return corpus.WithSplit(LoadSplit(corpus, out / artifacts::kSplit));
}

// --- synth -----------------------------------------------------------------

std::vector<fs::path> StageSynth(const Context& ctx) {
  const auto& c = ctx.config;
  Corpus corpus = [&] {
    if (!c.corpus_path) {
      return SplitCorpus(GenerateSynthetic(c.SeededSynthetic()),
                         c.test_fraction, MixSeed(c.seed, "split"));
    }
    auto loaded = LoadCorpus(*c.corpus_path);
    if (c.split_path) return loaded.WithSplit(LoadSplit(loaded, *c.split_path));
    return SplitCorpus(loaded, c.test_fraction, MixSeed(c.seed, "split"));
  }();
  const auto corpus_path = ctx.out / artifacts::kCorpus;
  const auto split_path = ctx.out / artifacts::kSplit;
  WriteCorpus(corpus, corpus_path);
  WriteSplit(corpus, split_path);
  return {corpus_path, split_path};
}

// --- training --------------------------------------------------------------

struct PlannedRun {
  std::string run_id;
  std::string target;
  std::optional<std::string> source;
  Hyperparams hp;
  bool save_checkpoint = false;
};

// Ledger rows from an earlier, interrupted attempt with identical inputs.
std::map<std::string, LedgerRow> Resumable(const fs::path& ledger,
                                           const std::string& key,
                                           const fs::path& out) {
  std::map<std::string, LedgerRow> done;
  const fs::path key_path = ledger.string() + ".key";
  if (!fs::exists(ledger) || !fs::exists(key_path) ||
      ReadFile(key_path) != key) {
    return done;
  }
  std::vector<LedgerRow> rows;
  try {
    rows = ReadLedger(ledger);
  } catch (const ValidationError&) {
    return done;  // torn final line; start over
  }
  for (auto& row : rows) {
    if (!row.run.params_ref.empty() && !fs::exists(out / row.run.params_ref)) {
      continue;
    }
    done.emplace(row.run_id, std::move(row));
  }
  return done;
}

std::vector<LedgerRow> RunLedger(const Context& ctx, const Corpus& corpus,
                                 const std::vector<PlannedRun>& plan,
                                 const fs::path& ledger_path,
                                 const std::function<const ClassifierParams*(
                                     const PlannedRun&)>& init_of) {
  const auto& c = ctx.config;
  auto done = Resumable(ledger_path, ctx.input_key, ctx.out);
  WriteFileAtomic(fs::path(ledger_path.string() + ".key"), ctx.input_key);

  std::vector<std::optional<LedgerRow>> rows(plan.size());
  std::vector<double> wall(plan.size(), 0.0);
  {
    std::string text = std::string(kLedgerHeader) + "\n";
    for (std::size_t i = 0; i < plan.size(); ++i) {
      auto it = done.find(plan[i].run_id);
      if (it != done.end() && it->second.run.hyperparams == plan[i].hp) {
        rows[i] = it->second;
        text += FormatLedgerRow(*rows[i]) + "\n";
      }
    }
    WriteFileAtomic(ledger_path, text);
  }

  std::mutex append_mutex;
  std::ofstream append(ledger_path, std::ios::app | std::ios::binary);
  TrainOptions options{c.dims, c.init_scale};
  ParallelFor(plan.size(), c.jobs, [&](std::size_t i) {
    if (rows[i]) return;
    const auto& p = plan[i];
    auto outcome = Train(corpus, p.target, p.hp, init_of(p), options);
    outcome.run.source_task = p.source;
    if (p.save_checkpoint) {
      outcome.run.params_ref = CheckpointName(p.run_id);
      WriteCheckpoint(outcome.params, ctx.out / outcome.run.params_ref);
    } else {
      outcome.run.params_ref.clear();
    }
    wall[i] = outcome.run.wall_seconds;
    LedgerRow row{p.run_id, outcome.run};
    std::lock_guard lock(append_mutex);
    append << FormatLedgerRow(row) << "\n" << std::flush;
    rows[i] = std::move(row);
  });
  append.close();

  // Canonical order for the final ledger; wall clock goes to a side file.
  std::vector<LedgerRow> out;
  std::string text = std::string(kLedgerHeader) + "\n";
  for (auto& r : rows) {
    text += FormatLedgerRow(*r) + "\n";
    out.push_back(std::move(*r));
  }
  WriteFileAtomic(ledger_path, text);
  {
    std::lock_guard lock(append_mutex);
    std::ofstream timings(ctx.out / artifacts::kTimings, std::ios::app);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      if (wall[i] > 0.0) {
        timings << fmt::format("{},{:.6f}\n", plan[i].run_id, wall[i]);
      }
    }
  }
  return out;
}

std::vector<fs::path> StageTrainSingles(const Context& ctx) {
  const auto corpus = LoadStageCorpus(ctx.out);
  const auto grid = ctx.config.Grid();
  std::vector<PlannedRun> plan;
  for (const auto& task : corpus.task_ids()) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
      plan.push_back({SingleRunId(task, g), task, std::nullopt, grid[g], true});
    }
  }
  const auto ledger_path = ctx.out / artifacts::kSinglesLedger;
  auto rows = RunLedger(ctx, corpus, plan, ledger_path,
                        [](const PlannedRun&) { return nullptr; });

  // Best run per task; ties keep the lowest grid index.
  std::map<std::string, const LedgerRow*> best;
  for (const auto& r : rows) {
    auto& slot = best[r.run.target_task];
    if (slot == nullptr || r.run.positive_f1 > slot->run.positive_f1) {
      slot = &r;
    }
  }
  std::string text = "task,run_id,positive_f1,checkpoint_path\n";
  std::vector<fs::path> outputs = {ledger_path};
  for (const auto& task : corpus.task_ids()) {
    const auto* r = best.at(task);
    text += fmt::format("{},{},{},{}\n", task, r->run_id,
                        FormatFixed6(r->run.positive_f1), r->run.params_ref);
  }
  const auto best_path = ctx.out / artifacts::kSinglesBest;
  WriteFileAtomic(best_path, text);
  outputs.push_back(best_path);
  for (const auto& r : rows) outputs.push_back(ctx.out / r.run.params_ref);
  return outputs;
}

std::map<std::string, ClassifierParams> LoadBestModels(
    const fs::path& out, const std::vector<BestSingle>& best) {
  std::map<std::string, ClassifierParams> models;
  for (const auto& b : best) {
    models.emplace(b.task, ReadCheckpoint(out / b.checkpoint_path));
  }
  return models;
}

std::vector<fs::path> StageTrainPairs(const Context& ctx) {
  const auto& c = ctx.config;
  const auto corpus = LoadStageCorpus(ctx.out);
  const auto best = ReadSinglesBest(ctx.out / artifacts::kSinglesBest);
  auto models = LoadBestModels(ctx.out, best);
  if (c.reset_head) {
    for (auto& [task, params] : models) {
      const auto fresh = ClassifierParams::Random(
          params.dims, MixSeed(c.seed, "head:" + task), c.init_scale,
          params.activation);
      params.out_weights = fresh.out_weights;
      params.out_bias = fresh.out_bias;
    }
  }
  const auto grid = c.Grid();
  std::vector<PlannedRun> plan;
  const auto tasks = corpus.task_ids();
  for (const auto& source : tasks) {
    for (const auto& target : tasks) {
      if (source == target) continue;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        plan.push_back({PairRunId(source, target, g), target, source, grid[g],
                        c.save_pair_checkpoints});
      }
    }
  }
  const auto ledger_path = ctx.out / artifacts::kPairsLedger;
  auto rows = RunLedger(
      ctx, corpus, plan, ledger_path,
      [&](const PlannedRun& p) { return &models.at(*p.source); });
  std::vector<fs::path> outputs = {ledger_path};
  for (const auto& r : rows) {
    if (!r.run.params_ref.empty()) outputs.push_back(ctx.out / r.run.params_ref);
  }
  return outputs;
}

// --- attribution -----------------------------------------------------------

// Documents attributed under every model: positives of any task in `split`.
std::vector<const Document*> AttributionDocs(const Corpus& corpus,
                                             Split split) {
  std::vector<const Document*> docs;
  for (auto i : corpus.IndicesIn(split)) {
    const auto& doc = corpus.documents()[i];
    if (!doc.labels.empty()) docs.push_back(&doc);
  }
  std::sort(docs.begin(), docs.end(),
            [](const Document* a, const Document* b) { return a->id < b->id; });
  return docs;
}

std::vector<fs::path> StageAttribute(const Context& ctx) {
  const auto& c = ctx.config;
  const auto corpus = LoadStageCorpus(ctx.out);
  const auto best = ReadSinglesBest(ctx.out / artifacts::kSinglesBest);
  const auto models = LoadBestModels(ctx.out, best);
  const auto docs = AttributionDocs(corpus, c.ansat_split);

  std::vector<fs::path> outputs;
  double gap_sum = 0.0;
  double gap_max = 0.0;
  std::size_t n = 0;
  for (const auto& b : best) {
    auto records = AttributeCorpus(models.at(b.task), corpus.vocabulary(),
                                   docs, b.task, b.run_id, c.ig, c.jobs);
    for (const auto& r : records) {
      gap_sum += r.completeness_gap;
      gap_max = std::max(gap_max, r.completeness_gap);
      ++n;
    }
    const auto path =
        ctx.out / artifacts::kAttributionDir / AttributionFileName(b.task);
    WriteAttributionCache(records, path);
    outputs.push_back(path);
  }
  json summary = {
      {"records", n},
      {"mean_completeness_gap", n == 0 ? 0.0 : gap_sum / static_cast<double>(n)},
      {"max_completeness_gap", gap_max},
      {"steps", c.ig.steps},
      {"baseline", std::string(BaselineName(c.ig.baseline))}};
  const auto summary_path = ctx.out / artifacts::kAttributionSummary;
  WriteFileAtomic(summary_path, summary.dump(2) + "\n");
  outputs.push_back(summary_path);
  return outputs;
}

AttributionCache LoadCache(const fs::path& out,
                           const std::vector<std::string>& tasks) {
  AttributionCache cache;
  for (const auto& task : tasks) {
    cache[task] = IndexRecords(ReadAttributionCache(
        out / artifacts::kAttributionDir / AttributionFileName(task)));
  }
  return cache;
}

double ReadMeanGap(const fs::path& out) {
  auto j = json::parse(ReadFile(out / artifacts::kAttributionSummary));
  return j.at("mean_completeness_gap").get<double>();
}

// --- ANSAT -----------------------------------------------------------------

std::vector<fs::path> StageAnsat(const Context& ctx) {
  const auto& c = ctx.config;
  const auto corpus = LoadStageCorpus(ctx.out);
  const auto cache = LoadCache(ctx.out, corpus.task_ids());
  CheckCacheComplete(corpus, cache, c.ansat_split);
  const auto table = FeatureTable(corpus, cache, c.tat, c.ansat_split, c.jobs);
  const auto path = ctx.out / artifacts::kAnsat;
  WriteFeatureTable(table, c.tat, path);
  return {path};
}

// --- regression ------------------------------------------------------------

std::vector<PairSample> BuildSamples(const PipelineConfig& c,
                                     const fs::path& out) {
  std::map<std::string, double> single_f1;
  for (const auto& b : ReadSinglesBest(out / artifacts::kSinglesBest)) {
    single_f1[b.task] = b.positive_f1;
  }
  std::map<std::pair<std::string, std::string>, std::vector<double>> ansat;
  for (auto& f : ReadFeatureTable(out / artifacts::kAnsat, c.tat)) {
    ansat[{f.task_a, f.task_b}] = std::move(f.values);
  }
  std::vector<PairSample> samples;
  for (const auto& row : ReadLedger(out / artifacts::kPairsLedger)) {
    PairSample s;
    s.id = row.run_id;
    s.source = row.run.source_task.value_or("");
    s.target = row.run.target_task;
    auto fs_it = single_f1.find(s.source);
    auto ft_it = single_f1.find(s.target);
    auto a_it = ansat.find({s.source, s.target});
    if (fs_it == single_f1.end() || ft_it == single_f1.end() ||
        a_it == ansat.end()) {
      throw ValidationError(fmt::format(
          "run '{}' has no single-task F1 or ANSAT row", row.run_id));
    }
    s.f1_source = fs_it->second;
    s.f1_target = ft_it->second;
    s.ansat_features = a_it->second;
    s.label_f1 = row.run.positive_f1;
    s.runtime_seconds = row.run.runtime_seconds;
    samples.push_back(std::move(s));
  }
  if (c.regression_rows == RegressionRows::kBestPerPair) {
    return CollapseBestPerPair(samples);
  }
  return samples;
}

std::string ModelFileName(FeatureMode mode) {
  return mode == FeatureMode::kF1 ? "model_F1.json" : "model_F1_ANSAT.json";
}

std::vector<fs::path> StageFit(const Context& ctx) {
  const auto& c = ctx.config;
  const auto samples = BuildSamples(c, ctx.out);
  std::vector<CvPrediction> all;
  std::vector<fs::path> outputs;
  for (auto mode : c.feature_modes) {
    auto preds = CrossValidate(samples, mode, c.gbt, c.jobs);
    all.insert(all.end(), preds.begin(), preds.end());
    const auto model_path =
        ctx.out / artifacts::kModelsDir / ModelFileName(mode);
    WriteModel(FitPairs(samples, mode, c.gbt, {c.jobs, false}), model_path);
    outputs.push_back(model_path);
  }
  const auto path = ctx.out / artifacts::kPredictions;
  WritePredictions(all, path);
  outputs.push_back(path);
  return outputs;
}

// --- evaluation ------------------------------------------------------------

struct Tables {
  std::vector<RmseCurveRow> rmse;
  std::vector<BudgetCurve> budget;
  PredictionsByMode predictions;
};

Tables ComputeTables(const PipelineConfig& c, const fs::path& out) {
  Tables t;
  for (auto& p : ReadPredictions(out / artifacts::kPredictions)) {
    t.predictions[p.mode].push_back(std::move(p));
  }
  PairRuntimes runtimes;
  for (const auto& row : ReadLedger(out / artifacts::kPairsLedger)) {
    runtimes[{row.run.source_task.value_or(""), row.run.target_task}]
        .push_back(row.run.runtime_seconds);
  }
  for (const auto& [mode, preds] : t.predictions) {
    const PredictionsByMode one = {{mode, preds}};
    std::size_t pool = preds.size();
    if (c.ranking == RankingScope::kPerTarget) {
      std::map<std::string, std::size_t> per_target;
      for (const auto& p : preds) ++per_target[p.target];
      pool = per_target.begin()->second;
      for (const auto& [target, n] : per_target) pool = std::min(pool, n);
    }
    auto rows = RmseCurve(one, KsFromFractions(pool, c.rmse_k_fractions),
                          c.ranking);
    t.rmse.insert(t.rmse.end(), rows.begin(), rows.end());
    auto curve = BudgetSearch(preds, runtimes, {}, c.budget_unit);
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      if (curve.points[i].mean_best_f1 + 1e-12 <
          curve.points[i - 1].mean_best_f1) {
        throw RuntimeFailure(fmt::format(
            "budget curve for {} is not monotone at k={}",
            FeatureModeName(mode), curve.points[i].k));
      }
    }
    t.budget.push_back(std::move(curve));
  }
  return t;
}

std::vector<fs::path> StageEvaluate(const Context& ctx) {
  const auto t = ComputeTables(ctx.config, ctx.out);
  const auto rmse_path = ctx.out / artifacts::kRmseCurve;
  const auto budget_path = ctx.out / artifacts::kBudgetCurve;
  WriteFileAtomic(rmse_path, SerializeRmseCurve(t.rmse));
  WriteFileAtomic(budget_path, SerializeBudgetCurves(t.budget));
  return {rmse_path, budget_path};
}

std::vector<TransferGain> ComputeTransfer(const PipelineConfig& c,
                                          const fs::path& out) {
  std::map<std::pair<std::string, std::size_t>, double> single;
  for (const auto& row : ReadLedger(out / artifacts::kSinglesLedger)) {
    single[{row.run.target_task, GridIndexOf(row.run_id)}] =
        row.run.positive_f1;
  }
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> acc;
  for (const auto& row : ReadLedger(out / artifacts::kPairsLedger)) {
    auto it = single.find({row.run.target_task, GridIndexOf(row.run_id)});
    if (it == single.end()) {
      throw ValidationError(fmt::format(
          "run '{}' has no from-scratch run at the same grid point",
          row.run_id));
    }
    auto& a = acc[{row.run.source_task.value_or(""), row.run.target_task}];
    a.first += row.run.positive_f1 - it->second;
    ++a.second;
  }
  std::map<std::pair<std::string, std::string>, double> dab;
  for (const auto& f : ReadFeatureTable(out / artifacts::kAnsat, c.tat)) {
    dab[{f.task_a, f.task_b}] = f.At(DocSet::kAB, 0);
  }
  std::vector<TransferGain> gains;
  for (const auto& [key, a] : acc) {
    gains.push_back({key.first, key.second, dab.at(key),
                     a.first / static_cast<double>(a.second)});
  }
  return gains;
}

double TransferSpearman(const std::vector<TransferGain>& gains) {
  std::vector<double> x, y;
  for (const auto& g : gains) {
    x.push_back(g.ansat_dab);
    y.push_back(g.gain);
  }
  return SpearmanCorrelation(x, y);
}

std::vector<fs::path> StageReport(const Context& ctx) {
  const auto& c = ctx.config;
  const auto t = ComputeTables(c, ctx.out);
  const auto gains = ComputeTransfer(c, ctx.out);

  std::string transfer = "source,target,ansat_dab,transfer_gain\n";
  for (const auto& g : gains) {
    transfer += fmt::format("{},{},{},{}\n", g.source, g.target,
                            FormatFixed6(g.ansat_dab), FormatFixed6(g.gain));
  }
  const auto transfer_path = ctx.out / artifacts::kTransfer;
  WriteFileAtomic(transfer_path, transfer);

  ReportInputs inputs;
  inputs.rmse_curve = t.rmse;
  inputs.budget_curves = t.budget;
  inputs.tolerances = c.tolerances;
  auto round6 = [](double x) { return std::round(x * 1e6) / 1e6; };
  inputs.extra_summary_json["transfer_spearman"] =
      json(round6(TransferSpearman(gains))).dump();
  inputs.extra_summary_json["mean_completeness_gap"] =
      json(round6(ReadMeanGap(ctx.out))).dump();
  inputs.extra_summary_json["seed"] = json(c.seed).dump();
  inputs.extra_summary_json["n_predictions"] =
      json(t.predictions.begin()->second.size()).dump();
  const auto summary_path = ctx.out / artifacts::kSummary;
  WriteFileAtomic(summary_path, SerializeSummary(inputs));

  std::string manifest = fmt::format("seed {}\nconfig_sha256 {}\n", c.seed,
                                     ConfigDigest(c));
  for (const char* name :
       {artifacts::kCorpus, artifacts::kSplit, artifacts::kSinglesLedger,
        artifacts::kSinglesBest, artifacts::kPairsLedger, artifacts::kAnsat,
        artifacts::kPredictions, artifacts::kRmseCurve,
        artifacts::kBudgetCurve, artifacts::kTransfer, artifacts::kSummary}) {
    manifest += fmt::format("sha256 {} {}\n", Sha256File(ctx.out / name), name);
  }
  const auto manifest_path = ctx.out / artifacts::kManifest;
  WriteFileAtomic(manifest_path, manifest);
  return {transfer_path, summary_path, manifest_path};
}

// Gates that hold whether the stage just ran or was skipped.
void CheckGates(Stage stage, const PipelineConfig& c, const fs::path& out) {
  if (stage == Stage::kAttribute) {
    const double gap = ReadMeanGap(out);
    if (gap > c.max_mean_completeness_gap) {
      throw RuntimeFailure(fmt::format(
          "mean completeness gap {:.3g} exceeds {:.3g}; raise attribution "
          "steps",
          gap, c.max_mean_completeness_gap));
    }
  }
}

}  // namespace

StageOutcome RunStage(Stage stage, const PipelineConfig& config,
                      const fs::path& out_dir) {
  config.Validate();
  fs::create_directories(out_dir);
  auto book = ReadBook(out_dir);
  const auto inputs = CheckInputs(stage, book, out_dir);
  const auto digest = ConfigDigest(config);
  const std::string name(StageName(stage));

  auto it = book.find(name);
  if (it != book.end() && it->second.config == digest &&
      it->second.inputs == inputs && OutputsIntact(it->second, out_dir)) {
    CheckGates(stage, config, out_dir);
    return {stage, true};
  }

  std::string key = digest;
  for (const auto& [rel, hash] : inputs) key += "\n" + rel + " " + hash;
  const Context ctx{config, out_dir, Sha256Hex(key)};

  std::vector<fs::path> produced;
  switch (stage) {
    case Stage::kSynth: produced = StageSynth(ctx); break;
    case Stage::kTrainSingles: produced = StageTrainSingles(ctx); break;
    case Stage::kTrainPairs: produced = StageTrainPairs(ctx); break;
    case Stage::kAttribute: produced = StageAttribute(ctx); break;
    case Stage::kAnsat: produced = StageAnsat(ctx); break;
    case Stage::kFit: produced = StageFit(ctx); break;
    case Stage::kEvaluate: produced = StageEvaluate(ctx); break;
    case Stage::kReport: produced = StageReport(ctx); break;
  }
  StageRecord record{digest, inputs, {}};
  for (const auto& p : produced) {
    record.outputs[Rel(p, out_dir)] = Sha256File(p);
  }
  book[name] = std::move(record);
  WriteBook(book, out_dir);
  CheckGates(stage, config, out_dir);
  return {stage, false};
}

PipelineResult LoadResults(const PipelineConfig& config,
                           const fs::path& out_dir) {
  PipelineResult r;
  auto t = ComputeTables(config, out_dir);
  r.rmse_curve = std::move(t.rmse);
  r.budget_curves = std::move(t.budget);
  r.predictions = std::move(t.predictions);
  r.transfer = ComputeTransfer(config, out_dir);
  r.transfer_spearman = TransferSpearman(r.transfer);
  r.mean_completeness_gap = ReadMeanGap(out_dir);
  for (const char* name :
       {artifacts::kRmseCurve, artifacts::kBudgetCurve, artifacts::kSummary,
        artifacts::kManifest}) {
    r.report_files.push_back(out_dir / name);
  }
  return r;
}

PipelineResult RunPipeline(const PipelineConfig& config,
                           const fs::path& out_dir) {
  for (Stage s : kAllStages) RunStage(s, config, out_dir);
  return LoadResults(config, out_dir);
}

}  // namespace tasksim
