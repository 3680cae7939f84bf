// Copyright (c) 2026 The rangeseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// KITTI-style binary scans (float32 x, y, z, remission per point) and
// SemanticKITTI-style label words (uint32, low 16 bits = semantic class).

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "rangeseg/errors.hpp"

namespace rangeseg
{

static_assert(std::endian::native == std::endian::little,
  "scan files are little-endian; add byte swapping for big-endian hosts");

struct Point
{
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
  float remission = 0.0f;

  friend bool operator==(const Point &, const Point &) = default;
};

using ClassId = std::uint32_t;

struct PointCloud
{
  std::vector<Point> points;

  std::size_t size() const {return points.size();}
  const Point & operator[](std::size_t i) const {return points[i];}
};

struct LabelSet
{
  std::vector<ClassId> labels;
  ClassId num_classes = 0;
  ClassId ignore_id = 255;

  std::size_t size() const {return labels.size();}
  ClassId operator[](std::size_t i) const {return labels[i];}
};

namespace detail
{

inline std::vector<char> read_all_bytes(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path.string() + "' for reading");
  }
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw IoError("read failure on '" + path.string() + "'");
  }
  return bytes;
}

inline void write_all_bytes(const std::filesystem::path & path, const void * data, std::size_t n)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open '" + path.string() + "' for writing");
  }
  out.write(static_cast<const char *>(data), static_cast<std::streamsize>(n));
  if (!out) {
    throw IoError("write failure on '" + path.string() + "'");
  }
}

}  // namespace detail

/// Decode an in-memory scan buffer. Exposed separately so callers holding the
/// bytes already (tests, archives) skip the filesystem.
inline PointCloud decode_scan(const char * data, std::size_t n_bytes, const std::string & origin = "<memory>")
{
  if (n_bytes == 0) {
    throw FormatError(origin + ": no points");
  }
  if (n_bytes % 16 != 0) {
    throw FormatError(origin + ": truncated scan, " + std::to_string(n_bytes) +
                      " bytes is not a multiple of 16");
  }
  PointCloud cloud;
  cloud.points.resize(n_bytes / 16);
  std::memcpy(cloud.points.data(), data, n_bytes);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Point & p = cloud.points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) || !std::isfinite(p.remission)) {
      throw FormatError(origin + ": non-finite value at point index " + std::to_string(i));
    }
  }
  return cloud;
}

inline PointCloud read_scan(const std::filesystem::path & path)
{
  const auto bytes = detail::read_all_bytes(path);
  return decode_scan(bytes.data(), bytes.size(), path.string());
}

inline void write_scan(const PointCloud & cloud, const std::filesystem::path & path)
{
  if (cloud.points.empty()) {
    throw FormatError(path.string() + ": refusing to write a scan with no points");
  }
  static_assert(sizeof(Point) == 16);
  detail::write_all_bytes(path, cloud.points.data(), cloud.points.size() * sizeof(Point));
}

inline LabelSet decode_labels(
  const char * data, std::size_t n_bytes, std::size_t expected_count,
  const std::string & origin = "<memory>")
{
  if (n_bytes != 4 * expected_count) {
    throw FormatError(origin + ": label count mismatch, expected " + std::to_string(expected_count) +
                      " labels but file holds " + std::to_string(n_bytes / 4) +
                      (n_bytes % 4 ? " (plus a partial word)" : ""));
  }
  LabelSet set;
  set.labels.resize(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    std::uint32_t word;
    std::memcpy(&word, data + 4 * i, 4);
    set.labels[i] = word & 0xFFFFu;
  }
  return set;
}

inline LabelSet read_labels(const std::filesystem::path & path, std::size_t expected_count)
{
  const auto bytes = detail::read_all_bytes(path);
  return decode_labels(bytes.data(), bytes.size(), expected_count, path.string());
}

/// Instance bits are always written as zero.
inline void write_predictions(const LabelSet & labels, const std::filesystem::path & path)
{
  if (labels.labels.empty()) {
    throw FormatError(path.string() + ": refusing to write an empty label set");
  }
  std::vector<std::uint32_t> words(labels.labels.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    words[i] = labels.labels[i] & 0xFFFFu;
  }
  detail::write_all_bytes(path, words.data(), words.size() * 4);
}

}  // namespace rangeseg
