// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

// tasksim: task-similarity pipeline driver.
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <string_view>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "tasksim/common.h"
#include "tasksim/parallel.h"
#include "tasksim/pipeline.h"

namespace {

struct Flags {
  std::string config;
  std::string out = "tasksim_out";
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<int> tasks;
  bool print_config = false;
};

tasksim::PipelineConfig Resolve(const Flags& flags) {
  auto config = flags.config.empty()
                    ? tasksim::ReferenceConfig()
                    : tasksim::LoadPipelineConfig(flags.config);
  if (flags.seed) {
    config.seed = *flags.seed;
    config.gbt.seed = *flags.seed;
  }
  if (flags.tasks) {
    if (config.corpus_path) {
      throw tasksim::ValidationError("--tasks needs the synthetic corpus");
    }
    config.synthetic.n_tasks = *flags.tasks;
    config.synthetic.overlap_matrix =
        tasksim::RingOverlap(*flags.tasks, {0.30, 0.15, 0.05});
  }
  if (flags.jobs) {
    config.jobs = *flags.jobs == 0 ? tasksim::HardwareJobs() : *flags.jobs;
  }
  config.Validate();
  return config;
}

void PrintSummary(const tasksim::PipelineResult& r) {
  for (const auto& curve : r.budget_curves) {
    fmt::print("{:<9} oracle F1 {:.4f}\n",
               tasksim::FeatureModeName(curve.mode), curve.oracle_f1);
  }
  for (const auto& row : r.rmse_curve) {
    fmt::print("{:<9} rmse@{:<4} {:.4f}\n", tasksim::FeatureModeName(row.mode),
               row.k, row.rmse);
  }
  fmt::print("transfer spearman {:.4f}\n", r.transfer_spearman);
  fmt::print("mean completeness gap {:.3g}\n", r.mean_completeness_gap);
}

int Run(const std::string& command, const Flags& flags) {
  const auto config = Resolve(flags);
  if (flags.print_config) {
    fmt::print("{}", tasksim::PipelineConfigToJson(config));
    return 0;
  }
  if (command == "pipeline") {
    const auto result = tasksim::RunPipeline(config, flags.out);
    PrintSummary(result);
    return 0;
  }
  const auto stage = tasksim::ParseStage(command);
  const auto outcome = tasksim::RunStage(stage, config, flags.out);
  fmt::print("{}: {}\n", command, outcome.skipped ? "up to date" : "done");
  if (stage == tasksim::Stage::kReport) {
    PrintSummary(tasksim::LoadResults(config, flags.out));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task-similarity estimation with attribution overlap"};
  app.require_subcommand(1);
  Flags flags;
  const char* commands[][2] = {
      {"synth", "Generate (or load) the corpus and its split"},
      {"train-singles", "Single-task hyperparameter grid"},
      {"train-pairs", "Intermediate-task transfer grid"},
      {"attribute", "Integrated-gradient attribution caches"},
      {"ansat", "ANSAT feature table"},
      {"fit", "Leave-one-target-out regression"},
      {"evaluate", "RMSE@k and budget curves"},
      {"report", "Summary and manifest"},
      {"pipeline", "Every stage in order"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "JSON config (default: reference)")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "Output directory")
        ->capture_default_str();
    sub->add_option("--seed", flags.seed, "Global seed override");
    sub->add_option("--jobs", flags.jobs, "Worker threads (0: all cores)")
        ->check(CLI::NonNegativeNumber);
    if (std::string_view(name) == "synth" ||
        std::string_view(name) == "pipeline") {
      sub->add_option("--tasks", flags.tasks,
                      "Synthetic task count (ring overlap 0.30/0.15/0.05)")
          ->check(CLI::Range(2, 1000));
    }
    sub->add_flag("--print-config", flags.print_config,
                  "Print the effective config and exit");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return Run(command, flags);
  } catch (const tasksim::ValidationError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "failure: {}\n", e.what());
    return 2;
  }
}
