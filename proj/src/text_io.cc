// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#include "tasksim/text_io.h"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/core.h>

#include "tasksim/common.h"

namespace tasksim {

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ValidationError(fmt::format("cannot open {}", path.string()));
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void WriteFileAtomic(const std::filesystem::path& path,
                     std::string_view contents) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw RuntimeFailure(fmt::format("cannot write {}", tmp.string()));
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
      throw RuntimeFailure(fmt::format("write failed for {}", tmp.string()));
    }
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::string> SplitLines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = end + 1;
  }
  return lines;
}

std::vector<std::string> SplitCsvRow(std::string_view row) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    auto comma = row.find(',', start);
    if (comma == std::string_view::npos) {
      fields.emplace_back(row.substr(start));
      break;
    }
    fields.emplace_back(row.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::vector<std::vector<std::string>> ReadCsv(
    const std::filesystem::path& path, std::string_view expected_header) {
  auto lines = SplitLines(ReadFile(path));
  if (lines.empty() || lines.front() != expected_header) {
    throw ValidationError(fmt::format("{}: expected header '{}'",
                                      path.string(), expected_header));
  }
  const auto arity = SplitCsvRow(expected_header).size();
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto fields = SplitCsvRow(lines[i]);
    if (fields.size() != arity) {
      throw ValidationError(fmt::format("{}:{}: expected {} fields, got {}",
                                        path.string(), i + 1, arity,
                                        fields.size()));
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

double ParseDouble(std::string_view field) {
  double value = 0.0;
  auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ValidationError(fmt::format("not a number: '{}'", field));
  }
  return value;
}

long long ParseInt(std::string_view field) {
  long long value = 0;
  auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ValidationError(fmt::format("not an integer: '{}'", field));
  }
  return value;
}

std::string FormatFixed6(double value) {
  // Avoid "-0.000000" so that tiny negative noise does not change bytes.
  if (std::fabs(value) < 5e-7) value = 0.0;
  return fmt::format("{:.6f}", value);
}

namespace {

std::string DigestHex(const unsigned char* digest, unsigned int len) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace

std::string Sha256Hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw RuntimeFailure("sha256 failed");
  }
  return DigestHex(digest, len);
}

std::string Sha256File(const std::filesystem::path& path) {
  return Sha256Hex(ReadFile(path));
}

}  // namespace tasksim
