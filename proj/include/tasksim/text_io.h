// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

// Small file helpers shared by the stage writers.

#ifndef TASKSIM_TEXT_IO_H_
#define TASKSIM_TEXT_IO_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tasksim {

std::string ReadFile(const std::filesystem::path& path);

// Writes to a sibling temp file and renames over `path`, creating parent
// directories as needed, so readers never observe a half-written artifact.
void WriteFileAtomic(const std::filesystem::path& path,
                     std::string_view contents);

std::vector<std::string> SplitLines(std::string_view text);
std::vector<std::string> SplitCsvRow(std::string_view row);

// Rows of a headed CSV file. Throws ValidationError if the header differs
// from `expected_header` or a row has the wrong arity.
std::vector<std::vector<std::string>> ReadCsv(
    const std::filesystem::path& path, std::string_view expected_header);

double ParseDouble(std::string_view field);
long long ParseInt(std::string_view field);

// Fixed 6-decimal rendering used by every CSV artifact.
std::string FormatFixed6(double value);

// Lowercase hex SHA-256 of a file's bytes / of a string.
std::string Sha256File(const std::filesystem::path& path);
std::string Sha256Hex(std::string_view bytes);

}  // namespace tasksim

#endif  // TASKSIM_TEXT_IO_H_
