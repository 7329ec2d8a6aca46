// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures for the unit suites.

#ifndef TASKSIM_TESTS_TEST_UTIL_H_
#define TASKSIM_TESTS_TEST_UTIL_H_

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tasksim/classifier.h"
#include "tasksim/corpus.h"

namespace tasksim::testing {

// Fresh empty directory under the system temp dir.
inline std::filesystem::path TempDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tasksim_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Document Doc(std::string id, std::vector<std::string> tokens,
                    std::vector<std::string> labels,
                    std::string event = "e0") {
  Document d;
  d.id = std::move(id);
  d.event_id = std::move(event);
  d.tokens = std::move(tokens);
  d.labels = std::move(labels);
  return d;
}

inline std::vector<std::int32_t> RandomDoc(std::mt19937_64& rng,
                                           std::size_t vocab,
                                           std::size_t length) {
  std::uniform_int_distribution<std::int32_t> pick(
      0, static_cast<std::int32_t>(vocab) - 1);
  std::vector<std::int32_t> ids(length);
  for (auto& id : ids) id = pick(rng);
  return ids;
}

}  // namespace tasksim::testing

#endif  // TASKSIM_TESTS_TEST_UTIL_H_
