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
#include <random>
#include <vector>

#include "rangeseg/ad/gradcheck.hpp"
#include "rangeseg/model.hpp"
#include "test_util.hpp"

using namespace rangeseg;
using Td = ad::Tensor<double>;

namespace
{

ModelConfig truncated_config(int num_classes = 3)
{
  ModelConfig c;
  c.preset = "truncated";
  c.C3 = 4;
  c.C4 = 4;
  c.C5 = 6;
  c.C6 = 8;
  c.L1 = c.L2 = c.L3 = c.L4 = 1;
  c.num_classes = num_classes;
  return c;
}

/// One point per pixel, placed at the centre of its cell, random range.
PointCloud cell_centre_cloud(const ProjectionConfig & p, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> range(2.0, 40.0), rem(0.0, 1.0);
  PointCloud c;
  for (int v = 0; v < p.height; ++v) {
    for (int u = 0; u < p.width; ++u) {
      const double yaw = std::numbers::pi * (1.0 - 2.0 * (u + 0.5) / p.width);
      const double pitch = (1.0 - (v + 0.5) / p.height) * p.fov() - p.fov_up;
      const double r = range(rng);
      c.points.push_back({static_cast<float>(r * std::cos(pitch) * std::cos(yaw)),
          static_cast<float>(r * std::cos(pitch) * std::sin(yaw)), static_cast<float>(r * std::sin(pitch)),
          static_cast<float>(rem(rng))});
    }
  }
  return c;
}

PointCloud rotate_z(const PointCloud & c, double angle)
{
  PointCloud out;
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (const auto & p : c.points) {
    out.points.push_back({static_cast<float>(ca * p.x - sa * p.y), static_cast<float>(sa * p.x + ca * p.y), p.z,
        p.remission});
  }
  return out;
}

/// Rolls every range-image plane `shift` columns to the right.
RangeImage roll_columns(const RangeImage & img, int shift)
{
  RangeImage out = img;
  const int W = img.width, H = img.height;
  const std::size_t n = static_cast<std::size_t>(W) * H;
  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      const std::size_t dst = img.pixel_index((u + shift) % W, v), src = img.pixel_index(u, v);
      out.representative[dst] = img.representative[src];
      for (int c = 0; c < kRangeChannels; ++c) {
        out.features[c * n + dst] = img.features[c * n + src];
      }
    }
  }
  return out;
}

/// Non-trivial BN statistics so eval-mode outputs are not dominated by init.
template<typename T>
void randomize_buffers(SegmentationModel<T> & m, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.2, 0.2), pos(0.5, 1.5);
  for (const auto & b : m.buffers()) {
    const bool var = b.name.ends_with("running_var");
    for (auto & v : *b.values) {
      v = static_cast<T>(var ? pos(rng) : u(rng));
    }
  }
}

}  // namespace

TEST(Backbone, FullPresetOutputShape)
{
  const ModelConfig cfg = ModelConfig::from_preset("full", 19);
  std::mt19937_64 rng(1);
  Backbone<float> b(cfg, 2048, 64, rng);
  ad::NoGradGuard ng;
  const ad::Tensor<float> rep({1, 192, 16, 512}, 0.1f);
  std::mt19937_64 r2(2);
  const auto img = test::random_tensor<float>({1, 5, 64, 2048}, r2);
  const auto logits = b.forward(rep, img, nn::Mode::eval);
  EXPECT_EQ(logits.shape(), (ad::Shape{1, 19, 64, 2048}));
}

TEST(Backbone, ZeroInputGivesSpatiallyConstantLogits)
{
  for (const bool circular : {false, true}) {
    ModelConfig cfg = ModelConfig::from_preset("tiny", 5);
    cfg.circular_width = circular;
    std::mt19937_64 rng(3);
    Backbone<double> b(cfg, 64, 16, rng);
    const Td rep({2, 96, 4, 16}, 0.0);
    const Td img({2, 5, 16, 64}, 0.0);
    for (const auto mode : {nn::Mode::train, nn::Mode::eval}) {
      const Td logits = b.forward(rep, img, mode);
      const std::size_t plane = 16 * 64;
      for (std::size_t k = 0; k < 2 * 5; ++k) {
        const double first = logits.values()[k * plane];
        for (std::size_t i = 0; i < plane; ++i) {
          ASSERT_EQ(logits.values()[k * plane + i], first);
        }
      }
    }
  }
}

TEST(Backbone, SidesMustBeMultiplesOfEight)
{
  std::mt19937_64 rng(4);
  EXPECT_THROW(Backbone<double>(truncated_config(), 36, 16, rng), ConfigError);
  EXPECT_THROW(Backbone<double>(truncated_config(), 32, 12, rng), ConfigError);
}

TEST(Backbone, RejectsMismatchedInputs)
{
  std::mt19937_64 rng(5);
  Backbone<double> b(truncated_config(), 32, 16, rng);
  EXPECT_THROW(b.forward(Td({1, 8, 4, 4}, 0.0), Td({1, 5, 16, 32}, 0.0), nn::Mode::eval), ShapeError);
}

TEST(ParameterCount, ClosedFormFixtures)
{
  std::mt19937_64 rng(6);
  nn::Registry<double> r;
  nn::pointwise<double>(11, 24, true, rng).collect("c", r);
  EXPECT_EQ(count_parameters(r.params), 288u);
  EXPECT_EQ(count_parameters(std::vector<ad::NamedTensor<double>>{}), 0u);
}

TEST(ParameterCount, PresetsWithinFifteenPercent)
{
  const std::pair<const char *, double> targets[] = {{"full", 3.97e6}, {"small", 1.13e6}, {"tiny", 0.44e6}};
  for (const auto & [name, target] : targets) {
    SegmentationModel<float> m(ModelConfig::from_preset(name, 19), 2048, 64, 1);
    const double n = static_cast<double>(m.parameter_count());
    EXPECT_GE(n, 0.85 * target) << name;
    EXPECT_LE(n, 1.15 * target) << name;
  }
}

TEST(ParameterCount, ExcludesRunningStatistics)
{
  SegmentationModel<double> m(truncated_config(), 32, 16, 1);
  std::size_t direct = 0;
  for (const auto & p : m.parameters()) {
    EXPECT_EQ(p.name.find("running"), std::string::npos);
    direct += p.tensor.numel();
  }
  EXPECT_EQ(m.parameter_count(), direct);
  EXPECT_FALSE(m.buffers().empty());
}

TEST(Backbone, LogitsStayFiniteOverRandomInputs)
{
  SegmentationModel<float> m(truncated_config(4), 32, 16, 7);
  Backbone<float> & b = m.backbone();
  std::mt19937_64 rng(8);
  ad::NoGradGuard ng;
  for (int i = 0; i < 1000; ++i) {
    const double scale = std::pow(10.0, static_cast<double>(i % 7) - 3.0);
    const auto rep = test::random_tensor<float>({2, 8, 4, 8}, rng, -scale, scale);
    const auto img = test::random_tensor<float>({2, 5, 16, 32}, rng, -80.0, 80.0);
    const auto logits = b.forward(rep, img, i % 2 ? nn::Mode::train : nn::Mode::eval);
    for (const float v : logits.values()) {
      ASSERT_TRUE(std::isfinite(v)) << "pass " << i;
    }
  }
}

TEST(Backbone, RotationByEightColumnsRollsTheRangeImage)
{
  const ProjectionConfig proj{64, 16, 0.25, 0.25};
  const PointCloud cloud = cell_centre_cloud(proj, 9);
  const RangeImage a = build_range_image(cloud, proj);
  const RangeImage b = build_range_image(rotate_z(cloud, 2.0 * std::numbers::pi * 8 / proj.width), proj);
  ASSERT_EQ(a.valid_count(), cloud.size());
  for (std::size_t m = 0; m < cloud.size(); ++m) {
    const PixelCoord pa = a.point_to_pixel[m], pb = b.point_to_pixel[m];
    EXPECT_EQ(pb.u, (pa.u - 8 + proj.width) % proj.width);
    EXPECT_EQ(pb.v, pa.v);
    EXPECT_NEAR(b.depth(pb.u, pb.v), a.depth(pa.u, pa.v), 1e-5 * a.depth(pa.u, pa.v));
  }
}

TEST(Backbone, CircularModelShiftsLogitsWithRolledInput)
{
  // x and y rotate with the scan, so equivariance is checked on the rolled
  // range image, which carries the same per-pixel features.
  ModelConfig cfg = truncated_config(3);
  cfg.L1 = 2;
  cfg.L2 = 3;
  cfg.circular_width = true;
  SegmentationModel<double> m(cfg, 64, 16, 10);
  randomize_buffers(m, 11);
  const ProjectionConfig proj{64, 16, 0.25, 0.25};
  const RangeImage img = build_range_image(cell_centre_cloud(proj, 12), proj);
  const PreparedScan a = prepare_scan(img);
  const PreparedScan b = prepare_scan(roll_columns(img, 8));
  const Td la = m.forward(make_model_input<double>({&a}, true), nn::Mode::eval);
  const Td lb = m.forward(make_model_input<double>({&b}, true), nn::Mode::eval);
  double worst = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int v = 0; v < 16; ++v) {
      for (int u = 0; u < 64; ++u) {
        const double x = la.values()[(c * 16 + v) * 64 + u];
        const double y = lb.values()[(c * 16 + v) * 64 + (u + 8) % 64];
        worst = std::max(worst, std::abs(x - y));
      }
    }
  }
  EXPECT_LT(worst, 1e-10);

  // zero padding breaks the symmetry near the seam
  cfg.circular_width = false;
  SegmentationModel<double> z(cfg, 64, 16, 10);
  randomize_buffers(z, 11);
  const Td za = z.forward(make_model_input<double>({&a}, true), nn::Mode::eval);
  const Td zb = z.forward(make_model_input<double>({&b}, true), nn::Mode::eval);
  double diff = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int v = 0; v < 16; ++v) {
      for (int u = 0; u < 64; ++u) {
        diff = std::max(diff, std::abs(za.values()[(c * 16 + v) * 64 + u] -
          zb.values()[(c * 16 + v) * 64 + (u + 8) % 64]));
      }
    }
  }
  EXPECT_GT(diff, 1e-6);
}

TEST(Backbone, TruncatedGradCheck)
{
  for (const BranchMerge merge : {BranchMerge::add, BranchMerge::concat}) {
    ModelConfig cfg = truncated_config(3);
    cfg.branch_merge = merge;
    std::mt19937_64 rng(13);
    Backbone<double> b(cfg, 16, 8, rng);
    nn::Registry<double> r;
    b.collect("b", r);
    const Td rep = test::random_tensor<double>({2, 8, 2, 4}, rng);
    const Td img = test::random_tensor<double>({2, 5, 8, 16}, rng);
    const Td probe = test::random_tensor<double>({2, 3, 8, 16}, rng);
    auto loss = [&]() {
        std::vector<std::vector<double>> saved;
        for (auto & buf : r.buffers) {
          saved.push_back(*buf.values);
        }
        Td out = ad::sum(ad::mul(b.forward(rep, img, nn::Mode::train), probe));
        for (std::size_t i = 0; i < saved.size(); ++i) {
          *r.buffers[i].values = saved[i];
        }
        return out;
      };
    const auto report = ad::grad_check_parameters<double>(loss, r.params, 1e-6);
    EXPECT_LT(report.max_error, 1e-4) << report.worst;
  }
}

TEST(Backbone, DilationScheduleIsCapped)
{
  EXPECT_EQ(multi_dilation_rate(0, 256), 1);
  EXPECT_EQ(multi_dilation_rate(1, 256), 2);
  EXPECT_EQ(multi_dilation_rate(2, 256), 4);
  EXPECT_EQ(multi_dilation_rate(3, 256), 8);
  EXPECT_EQ(multi_dilation_rate(4, 256), 1);
  EXPECT_EQ(multi_dilation_rate(3, 8), 3);
  EXPECT_EQ(multi_dilation_rate(2, 2), 1);
}
