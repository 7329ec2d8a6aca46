// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

// Runs the tasksim binary as a subprocess.

#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include "doctest.h"
#include "tasksim/text_io.h"
#include "test_util.h"

namespace tasksim {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string output;
};

Result RunCli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(TASKSIM_CLI_PATH) + " " + args + " > " +
                          log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = ReadFile(log);
  return r;
}

TEST_CASE("synth twice with the same seed writes identical files") {
  const auto dir = testing::TempDir("cli_synth");
  const auto a = dir / "a";
  const auto b = dir / "nested" / "b";
  REQUIRE(RunCli("synth --tasks 8 --seed 7 --out " + a.string(),
                 dir / "log_a").code == 0);
  REQUIRE(RunCli("synth --tasks 8 --seed 7 --out " + b.string(),
                 dir / "log_b").code == 0);
  CHECK(fs::is_directory(b));
  CHECK(ReadFile(a / "corpus.jsonl") == ReadFile(b / "corpus.jsonl"));
  CHECK(ReadFile(a / "split.csv") == ReadFile(b / "split.csv"));
}

TEST_CASE("invalid overlap matrix exits with a validation error") {
  const auto dir = testing::TempDir("cli_bad_overlap");
  WriteFileAtomic(dir / "bad.json",
                  R"({"corpus": {"synthetic": {"n_tasks": 2,
                      "overlap_matrix": [[1.0, 0.2], [0.3, 1.0]]}}})");
  const auto r = RunCli("synth --config " + (dir / "bad.json").string() +
                            " --out " + (dir / "out").string(),
                        dir / "log");
  CHECK(r.code == 1);
  CHECK(r.output.find("not symmetric") != std::string::npos);
}

TEST_CASE("usage errors and unknown config keys exit with 1") {
  const auto dir = testing::TempDir("cli_usage");
  CHECK(RunCli("frobnicate", dir / "log1").code == 1);
  CHECK(RunCli("synth --jobs -2", dir / "log2").code == 1);
  WriteFileAtomic(dir / "typo.json", R"({"sede": 3})");
  const auto r = RunCli("synth --config " + (dir / "typo.json").string(),
                        dir / "log3");
  CHECK(r.code == 1);
  CHECK(r.output.find("sede") != std::string::npos);
}

TEST_CASE("missing upstream stage exits with 1") {
  const auto dir = testing::TempDir("cli_missing_stage");
  const auto r = RunCli("fit --out " + (dir / "out").string(), dir / "log");
  CHECK(r.code == 1);
}

TEST_CASE("print-config emits parseable JSON") {
  const auto dir = testing::TempDir("cli_print");
  const auto r = RunCli("pipeline --seed 11 --print-config", dir / "log");
  CHECK(r.code == 0);
  CHECK(r.output.find("\"seed\": 11") != std::string::npos);
}

}  // namespace
}  // namespace tasksim
