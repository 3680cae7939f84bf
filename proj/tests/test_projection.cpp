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

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include "rangeseg/projection.hpp"
#include "test_util.hpp"

using namespace rangeseg;

namespace
{

ProjectionConfig quarter_pi_cfg()
{
  return ProjectionConfig{2048, 64, std::numbers::pi / 4, std::numbers::pi / 4};
}

/// Independent scalar evaluation of the spherical mapping.
PixelCoord oracle_pixel(double x, double y, double z, int W, int H, double up, double down)
{
  const double r = std::hypot(x, y, z);
  const double col = std::floor(0.5 * (1.0 - std::atan2(y, x) / std::numbers::pi) * W);
  const double row = std::floor((1.0 - (std::asin(z / r) + up) / (up + down)) * H);
  return {static_cast<int>(std::min<double>(std::max<double>(col, 0), W - 1)),
    static_cast<int>(std::min<double>(std::max<double>(row, 0), H - 1))};
}

PointCloud random_cloud(int n, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> xy(-40.0f, 40.0f), z(-4.0f, 3.0f), rem(0.0f, 1.0f);
  PointCloud c;
  while (static_cast<int>(c.size()) < n) {
    const Point p{xy(rng), xy(rng), z(rng), rem(rng)};
    if (p.x != 0.0f || p.y != 0.0f || p.z != 0.0f) {
      c.points.push_back(p);
    }
  }
  return c;
}

}  // namespace

TEST(Projection, AxisPointForward)
{
  const PixelCoord px = project_point({1, 0, 0, 0}, quarter_pi_cfg());
  EXPECT_EQ(px.u, 1024);
  EXPECT_EQ(px.v, 32);
}

TEST(Projection, AxisPointLeft)
{
  const PixelCoord px = project_point({0, 1, 0, 0}, quarter_pi_cfg());
  EXPECT_EQ(px.u, 512);
  EXPECT_EQ(px.v, 32);
}

TEST(Projection, OriginIsDegenerate)
{
  EXPECT_THROW(project_point({0, 0, 0, 0}, quarter_pi_cfg()), DomainError);
}

TEST(Projection, TopOfFieldOfViewClampsToRowZero)
{
  const PixelCoord px = project_point({1, 0, 1, 0}, quarter_pi_cfg());
  const PixelCoord want = oracle_pixel(1, 0, 1, 2048, 64, std::numbers::pi / 4, std::numbers::pi / 4);
  EXPECT_EQ(px, want);
  EXPECT_EQ(px.v, 0);
}

TEST(Projection, RandomPointsMatchScalarOracle)
{
  const ProjectionConfig cfg{512, 64, 0.3, 0.2};
  const PointCloud c = random_cloud(1000, 3);
  const RangeImage img = build_range_image(c, cfg);
  for (std::size_t m = 0; m < c.size(); ++m) {
    const PixelCoord want = oracle_pixel(c[m].x, c[m].y, c[m].z, cfg.width, cfg.height, cfg.fov_up, cfg.fov_down);
    ASSERT_EQ(img.point_to_pixel[m], want) << "point " << m;
    ASSERT_EQ(project_point(c[m], cfg), want);
  }
}

TEST(Projection, NearestPointWinsSharedPixel)
{
  PointCloud c;
  c.points = {{5, 0, 0, 0.1f}, {3, 0, 0, 0.9f}};
  const RangeImage img = build_range_image(c, quarter_pi_cfg());
  ASSERT_EQ(img.point_to_pixel[0], img.point_to_pixel[1]);
  const PixelCoord px = img.point_to_pixel[0];
  EXPECT_EQ(img.representative[img.pixel_index(px.u, px.v)], 1);
  EXPECT_DOUBLE_EQ(img.depth(px.u, px.v), 3.0);
  EXPECT_FLOAT_EQ(static_cast<float>(img.feature(RangeChannel::remission, px.u, px.v)), 0.9f);
  EXPECT_EQ(img.valid_count(), 1u);
}

TEST(Projection, EqualDepthKeepsLowerIndex)
{
  PointCloud c;
  c.points = {{3, 0, 0, 0.1f}, {3, 0, 0, 0.9f}};
  const RangeImage img = build_range_image(c, quarter_pi_cfg());
  const PixelCoord px = img.point_to_pixel[0];
  EXPECT_EQ(img.representative[img.pixel_index(px.u, px.v)], 0);
}

TEST(Projection, DistinctPixelsAreTheirOwnRepresentatives)
{
  const ProjectionConfig cfg = quarter_pi_cfg();
  PointCloud c;
  for (int i = 0; i < 50; ++i) {
    const double az = std::numbers::pi * (1.0 - 2.0 * (40 * i + 0.5) / cfg.width);
    c.points.push_back({static_cast<float>(10 * std::cos(az)), static_cast<float>(10 * std::sin(az)), 0.0f, 0.5f});
  }
  const RangeImage img = build_range_image(c, cfg);
  EXPECT_EQ(img.valid_count(), c.size());
  for (std::size_t m = 0; m < c.size(); ++m) {
    const PixelCoord px = img.point_to_pixel[m];
    EXPECT_EQ(img.representative[img.pixel_index(px.u, px.v)], static_cast<std::int32_t>(m));
  }
}

TEST(Projection, InvalidPixelsAreZeroAndDepthMatchesPoint)
{
  const ProjectionConfig cfg{256, 32, 0.3, 0.3};
  const PointCloud c = random_cloud(2000, 8);
  const RangeImage img = build_range_image(c, cfg);
  EXPECT_LE(img.valid_count(), std::min<std::size_t>(c.size(), 256u * 32u));
  for (int v = 0; v < cfg.height; ++v) {
    for (int u = 0; u < cfg.width; ++u) {
      const std::int32_t m = img.representative[img.pixel_index(u, v)];
      if (m < 0) {
        for (int ch = 0; ch < kRangeChannels; ++ch) {
          ASSERT_EQ(img.feature(static_cast<RangeChannel>(ch), u, v), 0.0);
        }
      } else {
        const Point & p = c[static_cast<std::size_t>(m)];
        ASSERT_DOUBLE_EQ(img.depth(u, v), std::sqrt(double(p.x) * p.x + double(p.y) * p.y + double(p.z) * p.z));
        ASSERT_GT(img.depth(u, v), 0.0);
      }
    }
  }
}

TEST(Projection, RepresentativeDepthIsPixelMinimum)
{
  const ProjectionConfig cfg{64, 16, 0.3, 0.3};
  const PointCloud c = random_cloud(5000, 21);
  const RangeImage img = build_range_image(c, cfg);
  std::map<std::pair<int, int>, double> best;
  for (std::size_t m = 0; m < c.size(); ++m) {
    const PixelCoord px = oracle_pixel(c[m].x, c[m].y, c[m].z, cfg.width, cfg.height, cfg.fov_up, cfg.fov_down);
    const double d = std::sqrt(double(c[m].x) * c[m].x + double(c[m].y) * c[m].y + double(c[m].z) * c[m].z);
    auto [it, fresh] = best.try_emplace({px.u, px.v}, d);
    if (!fresh) {
      it->second = std::min(it->second, d);
    }
  }
  EXPECT_EQ(img.valid_count(), best.size());
  for (const auto & [key, d] : best) {
    EXPECT_EQ(img.depth(key.first, key.second), d);
  }
}

TEST(Projection, RotationAboutZShiftsColumns)
{
  const ProjectionConfig cfg{512, 64, 0.3, 0.3};
  const int shift = 8;
  const double delta = 2.0 * std::numbers::pi * shift / cfg.width;
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> col(0, cfg.width - 1);
  std::uniform_real_distribution<double> range(2.0, 50.0), elev(-0.25, 0.25);
  for (int i = 0; i < 500; ++i) {
    // column centres keep floor() away from cell boundaries
    const int u = col(rng);
    const double az = std::numbers::pi * (1.0 - 2.0 * (u + 0.5) / cfg.width);
    const double r = range(rng), el = elev(rng);
    const Point p{static_cast<float>(r * std::cos(el) * std::cos(az)), static_cast<float>(r * std::cos(el) * std::sin(az)),
      static_cast<float>(r * std::sin(el)), 0.0f};
    const Point q{static_cast<float>(r * std::cos(el) * std::cos(az + delta)),
      static_cast<float>(r * std::cos(el) * std::sin(az + delta)), p.z, 0.0f};
    const PixelCoord a = project_point(p, cfg);
    const PixelCoord b = project_point(q, cfg);
    EXPECT_EQ(a.u, u);
    EXPECT_EQ(b.u, ((u - shift) % cfg.width + cfg.width) % cfg.width);
    EXPECT_EQ(a.v, b.v);
  }
}

TEST(Projection, UniformPixelLabelsReachEveryPoint)
{
  const ProjectionConfig cfg{128, 16, 0.3, 0.3};
  const PointCloud c = random_cloud(3000, 4);
  const RangeImage img = build_range_image(c, cfg);
  const std::vector<ClassId> pix(128 * 16, 5);
  const LabelSet l = reproject_labels(img, pix, c.size());
  ASSERT_EQ(l.size(), c.size());
  for (const auto x : l.labels) {
    EXPECT_EQ(x, 5u);
  }
}

TEST(Projection, CoPixelPointsShareTheirPixelLabel)
{
  PointCloud c;
  c.points = {{5, 0, 0, 0}, {3, 0, 0, 0}, {0, 4, 0, 0}};
  const ProjectionConfig cfg = quarter_pi_cfg();
  const RangeImage img = build_range_image(c, cfg);
  std::vector<ClassId> pix(static_cast<std::size_t>(cfg.width) * cfg.height, 0);
  pix[img.pixel_index(img.point_to_pixel[0].u, img.point_to_pixel[0].v)] = 2;
  pix[img.pixel_index(img.point_to_pixel[2].u, img.point_to_pixel[2].v)] = 9;
  const LabelSet l = reproject_labels(img, pix, c.size());
  EXPECT_EQ(l.labels, (std::vector<ClassId>{2, 2, 9}));
}

TEST(Projection, ReprojectMatchesPerPointLookup)
{
  const ProjectionConfig cfg{128, 16, 0.3, 0.3};
  const PointCloud c = random_cloud(3000, 6);
  const RangeImage img = build_range_image(c, cfg);
  std::mt19937_64 rng(1);
  std::vector<ClassId> pix(128 * 16);
  for (auto & x : pix) {
    x = static_cast<ClassId>(rng() % 19);
  }
  const LabelSet l = reproject_labels(img, pix, c.size());
  for (std::size_t m = 0; m < c.size(); ++m) {
    const PixelCoord px = oracle_pixel(c[m].x, c[m].y, c[m].z, cfg.width, cfg.height, cfg.fov_up, cfg.fov_down);
    ASSERT_EQ(l[m], pix[static_cast<std::size_t>(px.v) * cfg.width + px.u]);
  }
}

TEST(Projection, InvalidConfigIsRejected)
{
  EXPECT_THROW(build_range_image(random_cloud(3, 1), ProjectionConfig{0, 64, 0.1, 0.1}), ConfigError);
  EXPECT_THROW(build_range_image(random_cloud(3, 1), ProjectionConfig{64, 64, 0.0, 0.0}), ConfigError);
}

TEST(Projection, RangeImageDumpHasHeader)
{
  test::TempDir dir;
  const ProjectionConfig cfg{32, 8, 0.3, 0.3};
  const RangeImage img = build_range_image(random_cloud(100, 2), cfg);
  export_range_image(img, dir.path() / "r.bin");
  EXPECT_EQ(test::read_bytes(dir.path() / "r.bin").size(), 32u * 8u * 5u * 4u);
  const auto hdr = test::read_bytes(dir.path() / "r.bin.txt");
  const std::string text(hdr.begin(), hdr.end());
  EXPECT_NE(text.find("width = 32"), std::string::npos);
  EXPECT_NE(text.find("x y z depth remission"), std::string::npos);
}
