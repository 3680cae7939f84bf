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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>
#include <vector>

#include "rangeseg/scan_io.hpp"
#include "test_util.hpp"

using namespace rangeseg;

namespace
{

std::vector<char> float_bytes(const std::vector<float> & v)
{
  std::vector<char> b(v.size() * 4);
  std::memcpy(b.data(), v.data(), b.size());
  return b;
}

std::vector<char> word_bytes(const std::vector<std::uint32_t> & v)
{
  std::vector<char> b(v.size() * 4);
  std::memcpy(b.data(), v.data(), b.size());
  return b;
}

}  // namespace

TEST(ScanIo, DecodesTwoPoints)
{
  const auto bytes = float_bytes({1, 0, 0, 0.5f, 0, 1, 0, 0.2f});
  const PointCloud c = decode_scan(bytes.data(), bytes.size());
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0], (Point{1, 0, 0, 0.5f}));
  EXPECT_EQ(c[1], (Point{0, 1, 0, 0.2f}));
}

TEST(ScanIo, EmptyFileIsNoPoints)
{
  test::TempDir dir;
  const auto path = dir.path() / "empty.bin";
  test::write_bytes(path, {});
  try {
    read_scan(path);
    FAIL() << "expected a format error";
  } catch (const FormatError & e) {
    EXPECT_NE(std::string(e.what()).find("no points"), std::string::npos);
  }
}

TEST(ScanIo, TruncatedFileIsRejected)
{
  const auto bytes = float_bytes({1, 2, 3, 4, 5});
  EXPECT_THROW(decode_scan(bytes.data(), bytes.size()), FormatError);
}

TEST(ScanIo, NonFiniteValueNamesItsIndex)
{
  const auto bytes = float_bytes({1, 2, 3, 4, 5, std::numeric_limits<float>::quiet_NaN(), 7, 8});
  try {
    decode_scan(bytes.data(), bytes.size());
    FAIL() << "expected a format error";
  } catch (const FormatError & e) {
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos) << e.what();
  }
}

TEST(ScanIo, RandomScanRoundTripsBitExactly)
{
  test::TempDir dir;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(-100.0f, 100.0f);
  PointCloud c;
  for (int i = 0; i < 1000; ++i) {
    c.points.push_back({u(rng), u(rng), u(rng), u(rng)});
  }
  const auto path = dir.path() / "scan.bin";
  write_scan(c, path);
  const PointCloud back = read_scan(path);
  ASSERT_EQ(back.size(), c.size());
  EXPECT_EQ(std::memcmp(back.points.data(), c.points.data(), c.size() * sizeof(Point)), 0);
  EXPECT_EQ(test::read_bytes(path).size(), 16000u);
}

TEST(ScanIo, LabelWordKeepsLowSixteenBits)
{
  const auto b = word_bytes({0x00020001u, 0x00000000u, 0xFFFF0007u});
  const LabelSet s = decode_labels(b.data(), b.size(), 3);
  EXPECT_EQ(s[0], 1u);
  EXPECT_EQ(s[1], 0u);
  EXPECT_EQ(s[2], 7u);
}

TEST(ScanIo, LabelCountMismatchStatesBothCounts)
{
  const std::vector<char> b(4000, 0);
  try {
    decode_labels(b.data(), b.size(), 999);
    FAIL() << "expected a format error";
  } catch (const FormatError & e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("999"), std::string::npos) << msg;
    EXPECT_NE(msg.find("1000"), std::string::npos) << msg;
  }
}

TEST(ScanIo, WritePredictionsLayout)
{
  test::TempDir dir;
  LabelSet s;
  s.labels = {3, 0, 7};
  const auto path = dir.path() / "p.label";
  write_predictions(s, path);
  const auto bytes = test::read_bytes(path);
  ASSERT_EQ(bytes.size(), 12u);
  std::uint32_t w[3];
  std::memcpy(w, bytes.data(), 12);
  EXPECT_EQ(w[0], 3u);
  EXPECT_EQ(w[1], 0u);
  EXPECT_EQ(w[2], 7u);
}

TEST(ScanIo, PredictionsRoundTrip)
{
  test::TempDir dir;
  std::mt19937_64 rng(5);
  LabelSet s;
  for (int i = 0; i < 10000; ++i) {
    s.labels.push_back(static_cast<ClassId>(rng() & 0xFFFFu));
  }
  const auto path = dir.path() / "p.label";
  write_predictions(s, path);
  EXPECT_EQ(read_labels(path, s.size()).labels, s.labels);
}

TEST(ScanIo, EmptyPredictionsAreRejected)
{
  test::TempDir dir;
  EXPECT_THROW(write_predictions(LabelSet{}, dir.path() / "p.label"), FormatError);
}

TEST(ScanIo, MissingFileIsIoError)
{
  EXPECT_THROW(read_scan("/nonexistent/dir/scan.bin"), IoError);
}
