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
#include <numbers>
#include <vector>

#include "rangeseg/synth.hpp"
#include "rangeseg/training.hpp"
#include "test_util.hpp"

using namespace rangeseg;

namespace
{

SceneSpec empty_spec()
{
  SceneSpec s;
  s.boxes = s.poles = s.walls = {0, 0};
  return s;
}

/// Unit direction through the centre of cell (u, v), from the inverse of the projection.
std::array<double, 3> cell_direction(const ProjectionConfig & cfg, int u, int v)
{
  const double yaw = (1.0 - 2.0 * (u + 0.5) / cfg.width) * std::numbers::pi;
  const double pitch = (1.0 - (v + 0.5) / cfg.height) * cfg.fov() - cfg.fov_up;
  return {std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch)};
}

}  // namespace

TEST(Synth, EmptySceneIsGroundAtSensorHeight)
{
  SceneSpec s = empty_spec();
  s.range_noise = 0.0;
  const SynthScan scan = generate(s);
  ASSERT_FALSE(scan.cloud.points.empty());
  for (std::size_t i = 0; i < scan.cloud.size(); ++i) {
    EXPECT_EQ(scan.labels[i], kGround);
    ASSERT_NEAR(scan.cloud[i].z, -s.sensor_height, 1e-5);
  }
  // only downward beams reach the plane within max range
  const double min_drop = s.sensor_height / s.max_range;
  std::size_t expected = 0;
  for (int v = 0; v < s.beams.height; ++v) {
    const double pitch = (1.0 - (v + 0.5) / s.beams.height) * s.beams.fov() - s.beams.fov_up;
    if (-std::sin(pitch) >= min_drop) {
      expected += static_cast<std::size_t>(s.beams.width);
    }
  }
  EXPECT_EQ(scan.cloud.size(), expected);
}

TEST(Synth, NoisyGroundStaysNearThePlane)
{
  SceneSpec s = empty_spec();
  s.seed = 5;
  const SynthScan scan = generate(s);
  for (const auto & p : scan.cloud.points) {
    // along-ray noise moves z by at most |noise| * sin(pitch) <= |noise|
    ASSERT_NEAR(p.z, -s.sensor_height, 6.0 * s.range_noise);
    ASSERT_GE(p.remission, 0.0f);
    ASSERT_LE(p.remission, 1.0f);
  }
}

TEST(Synth, BoxOccludesTheGroundBehindIt)
{
  SceneSpec s = empty_spec();
  s.range_noise = 0.0;
  s.remission_noise = 0.0;
  const double h = s.sensor_height;
  std::mt19937_64 rng(0);
  const SynthScan ground = render_scene(Scene{}, s, rng);
  Scene scene;
  scene.boxes.push_back({10.0, 0.0, 0.0, 2.0, 1.0, -h, -h + 1.5, kBox});
  const SynthScan boxed = render_scene(scene, s, rng);

  const RangeImage g = build_range_image(ground.cloud, s.beams);
  const RangeImage b = build_range_image(boxed.cloud, s.beams);
  int box_pixels = 0;
  for (int v = 0; v < s.beams.height; ++v) {
    for (int u = 0; u < s.beams.width; ++u) {
      if (!b.valid(u, v)) {
        continue;
      }
      const auto i = static_cast<std::size_t>(b.representative[b.pixel_index(u, v)]);
      if (boxed.labels[i] != kBox) {
        continue;
      }
      ++box_pixels;
      EXPECT_NEAR(boxed.cloud[i].remission, s.remission[kBox], 1e-7);
      if (g.valid(u, v)) {
        EXPECT_LT(b.depth(u, v), g.depth(u, v));
      }
      // the hit lies on the box surface
      const Point & p = boxed.cloud[i];
      EXPECT_GE(p.x, 8.0 - 1e-4);
      EXPECT_LE(std::abs(p.y), 1.0 + 1e-4);
      EXPECT_LE(p.z, -h + 1.5 + 1e-4);
    }
  }
  EXPECT_GT(box_pixels, 20);
}

TEST(Synth, SameSeedIsBitwiseIdentical)
{
  SceneSpec s;
  s.seed = 42;
  const SynthScan a = generate(s), b = generate(s);
  EXPECT_EQ(a.cloud.points, b.cloud.points);
  EXPECT_EQ(a.labels.labels, b.labels.labels);
  s.seed = 43;
  EXPECT_NE(generate(s).cloud.points, a.cloud.points);
}

TEST(Synth, ProjectionRoundTripsToTheGeneratingCell)
{
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SceneSpec s;
    s.seed = seed;
    s.range_noise = 0.0;
    const SynthScan scan = generate(s);
    ASSERT_LE(scan.cloud.size(), static_cast<std::size_t>(s.beams.width * s.beams.height));
    std::size_t exact = 0;
    long prev = -1;
    for (const auto & p : scan.cloud.points) {
      const PixelCoord c = project_point(p, s.beams);
      const long cell = static_cast<long>(c.v) * s.beams.width + c.u;
      const auto d = cell_direction(s.beams, c.u, c.v);
      const double r = std::sqrt(double(p.x) * p.x + double(p.y) * p.y + double(p.z) * p.z);
      const double cosang = (p.x * d[0] + p.y * d[1] + p.z * d[2]) / r;
      // beams are emitted row by row, so generating cells are strictly increasing
      if (cell > prev && cosang > 1.0 - 1e-9) {
        ++exact;
      }
      prev = std::max(prev, cell);
    }
    EXPECT_GE(static_cast<double>(exact), 0.99 * scan.cloud.size()) << "seed " << seed;
  }
}

TEST(Synth, DefaultScenesContainEveryClass)
{
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SceneSpec s;
    s.seed = seed;
    std::vector<std::uint64_t> counts(kSynthClasses, 0);
    count_classes(generate(s).labels, 255, counts);
    for (const auto c : counts) {
      EXPECT_GT(c, 0u) << "seed " << seed;
    }
  }
}

TEST(Synth, InvalidSpecsAreRejected)
{
  SceneSpec s;
  s.sensor_height = 0.0;
  EXPECT_THROW(generate(s), ConfigError);
  s = SceneSpec{};
  s.poles = {3, 2};
  EXPECT_THROW(generate(s), ConfigError);
  s = empty_spec();
  s.max_range = 1.0;
  EXPECT_THROW(generate(s), DomainError);
  test::TempDir dir;
  EXPECT_THROW(generate_dataset(dir.path(), 0, SceneSpec{}), ConfigError);
}

TEST(SynthDataset, FilesParseAndMatchDirectGeneration)
{
  test::TempDir dir;
  SceneSpec s;
  s.beams = ProjectionConfig{128, 16, degrees_to_radians(15.0), degrees_to_radians(15.0)};
  s.seed = 9;
  generate_dataset(dir.path(), 4, s);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "meta.txt"));
  for (int i = 0; i < 4; ++i) {
    char name[16];
    std::snprintf(name, sizeof(name), "%06d", i);
    const PointCloud c = read_scan(dir.path() / "velodyne" / (std::string(name) + ".bin"));
    const LabelSet l = read_labels(dir.path() / "labels" / (std::string(name) + ".label"), c.size());
    SceneSpec si = s;
    si.seed = scan_seed(s.seed, static_cast<std::uint64_t>(i));
    const SynthScan direct = generate(si);
    EXPECT_EQ(c.points, direct.cloud.points);
    EXPECT_EQ(l.labels, direct.labels.labels);
  }
}

TEST(SynthDataset, ReproducibleAndClassWeightsMatchCountOracle)
{
  test::TempDir a, b;
  SceneSpec s;
  s.beams = ProjectionConfig{128, 16, degrees_to_radians(15.0), degrees_to_radians(15.0)};
  s.seed = 21;
  generate_dataset(a.path(), 5, s);
  generate_dataset(b.path(), 5, s);
  std::vector<std::filesystem::path> files;
  std::vector<std::uint64_t> oracle(kSynthClasses, 0);
  for (int i = 0; i < 5; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "labels/%06d.label", i);
    const auto bytes = test::read_bytes(a.path() / name);
    EXPECT_EQ(bytes, test::read_bytes(b.path() / name));
    // raw little-endian uint32 with the class in the low 16 bits
    for (std::size_t k = 0; k + 4 <= bytes.size(); k += 4) {
      const auto lo = static_cast<unsigned char>(bytes[k]) | (static_cast<unsigned char>(bytes[k + 1]) << 8);
      ++oracle.at(static_cast<std::size_t>(lo));
    }
    files.push_back(a.path() / name);
  }
  const LossSpec w = compute_class_weights(files, kSynthClasses, 0.25, 255);
  EXPECT_EQ(w.counts, oracle);
}
