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

// Ray-cast LIDAR scenes: a ground plane with boxes, poles and walls. One beam
// per range-image cell, aimed at the cell centre, so projecting a noise-free
// scan with the same ProjectionConfig lands every point on its own cell.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rangeseg/errors.hpp"
#include "rangeseg/projection.hpp"
#include "rangeseg/random.hpp"
#include "rangeseg/scan_io.hpp"

namespace rangeseg
{

enum SynthClass : ClassId { kGround = 0, kBox = 1, kPole = 2, kWall = 3 };
inline constexpr ClassId kSynthClasses = 4;

struct Range
{
  double lo = 0.0;
  double hi = 0.0;
};

struct SceneSpec
{
  ProjectionConfig beams{512, 64, degrees_to_radians(15.0), degrees_to_radians(15.0)};
  double sensor_height = 1.73;
  double max_range = 80.0;
  double range_noise = 0.02;          ///< std of the along-ray error, meters
  std::array<double, kSynthClasses> remission{0.25, 0.55, 0.45, 0.7};
  double remission_noise = 0.1;
  std::uint64_t seed = 0;

  std::array<int, 2> boxes{4, 10};
  Range box_distance{5.0, 30.0};
  Range box_length{3.5, 5.0};
  Range box_width{1.6, 2.0};
  Range box_height{1.3, 1.9};

  std::array<int, 2> poles{4, 12};
  Range pole_distance{4.0, 25.0};
  Range pole_radius{0.08, 0.25};
  Range pole_height{3.0, 8.0};

  std::array<int, 2> walls{1, 4};
  Range wall_distance{10.0, 35.0};
  Range wall_length{6.0, 25.0};
  double wall_thickness = 0.4;
  Range wall_height{2.0, 5.0};

  void validate() const
  {
    beams.validate();
    if (!(sensor_height > 0.0) || !(max_range > 0.0) || range_noise < 0.0 || remission_noise < 0.0) {
      throw ConfigError("scene needs positive sensor height and range, non-negative noise");
    }
    for (const auto & c : {boxes, poles, walls}) {
      if (c[0] < 0 || c[1] < c[0]) {
        throw ConfigError("object count ranges must satisfy 0 <= min <= max");
      }
    }
  }
};

/// Vertical extruded rectangle (boxes and walls).
struct SceneBox
{
  double cx, cy, yaw;
  double half_length, half_width;
  double z_min, z_max;
  ClassId label;
};

/// Vertical cylinder.
struct ScenePole
{
  double cx, cy, radius;
  double z_min, z_max;
};

struct Scene
{
  std::vector<SceneBox> boxes;   ///< vehicles and walls
  std::vector<ScenePole> poles;
};

namespace detail
{

/// Entry distance of the ray o + t d into an axis-aligned box, or +inf.
inline double ray_aabb(
  const std::array<double, 3> & o, const std::array<double, 3> & d,
  const std::array<double, 3> & lo, const std::array<double, 3> & hi)
{
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) {
        return std::numeric_limits<double>::infinity();
      }
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) {
      std::swap(ta, tb);
    }
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return t0 > 0.0 ? t0 : std::numeric_limits<double>::infinity();
}

inline double ray_box(const std::array<double, 3> & d, const SceneBox & b)
{
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  // sensor at the origin, expressed in the box frame
  const std::array<double, 3> o{-(c * b.cx + s * b.cy), -(-s * b.cx + c * b.cy), 0.0};
  const std::array<double, 3> dl{c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]};
  return ray_aabb(o, dl, {-b.half_length, -b.half_width, b.z_min}, {b.half_length, b.half_width, b.z_max});
}

inline double ray_pole(const std::array<double, 3> & d, const ScenePole & p)
{
  constexpr double inf = std::numeric_limits<double>::infinity();
  double best = inf;
  const double a = d[0] * d[0] + d[1] * d[1];
  if (a > 0.0) {
    // |t d_xy - c|^2 = r^2
    const double b = -2.0 * (d[0] * p.cx + d[1] * p.cy);
    const double cc = p.cx * p.cx + p.cy * p.cy - p.radius * p.radius;
    const double disc = b * b - 4.0 * a * cc;
    if (disc >= 0.0) {
      const double t = (-b - std::sqrt(disc)) / (2.0 * a);
      const double z = t * d[2];
      if (t > 0.0 && z >= p.z_min && z <= p.z_max) {
        best = t;
      }
    }
  }
  for (const double zc : {p.z_min, p.z_max}) {
    if (d[2] == 0.0) {
      break;
    }
    const double t = zc / d[2];
    if (t > 0.0 && t < best) {
      const double x = t * d[0] - p.cx, y = t * d[1] - p.cy;
      if (x * x + y * y <= p.radius * p.radius) {
        best = t;
      }
    }
  }
  return best;
}

}  // namespace detail

/// Seed of scan i in a dataset generated from `seed`.
inline std::uint64_t scan_seed(std::uint64_t seed, std::uint64_t i) {return derive_seed(seed, i);}

/// Elevation and azimuth (radians) of the beam through the centre of cell (u, v).
inline std::array<double, 2> beam_angles(const ProjectionConfig & cfg, int u, int v)
{
  const double pitch = (1.0 - (v + 0.5) / cfg.height) * cfg.fov() - cfg.fov_up;
  const double yaw = std::numbers::pi * (1.0 - 2.0 * (u + 0.5) / cfg.width);
  return {pitch, yaw};
}

inline Scene make_scene(const SceneSpec & spec, std::mt19937_64 & rng)
{
  auto uni = [&rng](Range r) {return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);};
  auto count = [&rng](std::array<int, 2> c) {return std::uniform_int_distribution<int>(c[0], c[1])(rng);};
  auto angle = [&rng]() {return std::uniform_real_distribution<double>(-std::numbers::pi, std::numbers::pi)(rng);};
  const double ground = -spec.sensor_height;

  Scene s;
  const int n_boxes = count(spec.boxes);
  for (int i = 0; i < n_boxes; ++i) {
    const double r = uni(spec.box_distance), a = angle();
    s.boxes.push_back({r * std::cos(a), r * std::sin(a), angle(), 0.5 * uni(spec.box_length),
        0.5 * uni(spec.box_width), ground, ground + uni(spec.box_height), kBox});
  }
  const int n_poles = count(spec.poles);
  for (int i = 0; i < n_poles; ++i) {
    const double r = uni(spec.pole_distance), a = angle();
    s.poles.push_back({r * std::cos(a), r * std::sin(a), uni(spec.pole_radius), ground,
        ground + uni(spec.pole_height)});
  }
  const int n_walls = count(spec.walls);
  for (int i = 0; i < n_walls; ++i) {
    const double r = uni(spec.wall_distance), a = angle();
    // roughly facing the sensor
    const double yaw = a + 0.5 * std::numbers::pi + uni({-0.3, 0.3});
    s.boxes.push_back({r * std::cos(a), r * std::sin(a), yaw, 0.5 * uni(spec.wall_length),
        0.5 * spec.wall_thickness, ground, ground + uni(spec.wall_height), kWall});
  }
  return s;
}

struct SynthScan
{
  PointCloud cloud;
  LabelSet labels;
};

/// Casts every beam; a beam returns a point only if something lies within
/// max_range. Points are emitted row by row.
inline SynthScan render_scene(const Scene & scene, const SceneSpec & spec, std::mt19937_64 & rng)
{
  std::normal_distribution<double> range_noise(0.0, spec.range_noise);
  std::normal_distribution<double> rem_noise(0.0, spec.remission_noise);
  SynthScan out;
  out.labels.num_classes = kSynthClasses;
  const ProjectionConfig & cfg = spec.beams;
  for (int v = 0; v < cfg.height; ++v) {
    for (int u = 0; u < cfg.width; ++u) {
      const auto [pitch, yaw] = beam_angles(cfg, u, v);
      const std::array<double, 3> d{std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw),
        std::sin(pitch)};
      double t = std::numeric_limits<double>::infinity();
      ClassId label = kGround;
      if (d[2] < 0.0) {
        t = -spec.sensor_height / d[2];
      }
      for (const auto & b : scene.boxes) {
        const double tb = detail::ray_box(d, b);
        if (tb < t) {
          t = tb;
          label = b.label;
        }
      }
      for (const auto & p : scene.poles) {
        const double tp = detail::ray_pole(d, p);
        if (tp < t) {
          t = tp;
          label = kPole;
        }
      }
      if (!(t <= spec.max_range)) {
        continue;
      }
      // noise draws happen only for returned beams, in beam order
      const double r = spec.range_noise > 0.0 ? std::max(1e-3, t + range_noise(rng)) : t;
      const double rem = std::clamp(spec.remission[label] + (spec.remission_noise > 0.0 ? rem_noise(rng) : 0.0),
          0.0, 1.0);
      out.cloud.points.push_back({static_cast<float>(r * d[0]), static_cast<float>(r * d[1]),
          static_cast<float>(r * d[2]), static_cast<float>(rem)});
      out.labels.labels.push_back(label);
    }
  }
  if (out.cloud.points.empty()) {
    throw DomainError("synthetic scene produced no returns (seed " + std::to_string(spec.seed) + ")");
  }
  return out;
}

inline SynthScan generate(const SceneSpec & spec)
{
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const Scene scene = make_scene(spec, rng);
  return render_scene(scene, spec, rng);
}

/// Writes velodyne/NNNNNN.bin, labels/NNNNNN.label and meta.txt under `dir`.
inline void generate_dataset(const std::filesystem::path & dir, int n, const SceneSpec & spec)
{
  if (n < 1) {
    throw ConfigError("dataset needs at least one scan");
  }
  spec.validate();
  std::filesystem::create_directories(dir / "velodyne");
  std::filesystem::create_directories(dir / "labels");
  for (int i = 0; i < n; ++i) {
    SceneSpec s = spec;
    s.seed = scan_seed(spec.seed, static_cast<std::uint64_t>(i));
    const SynthScan scan = generate(s);
    char name[32];
    std::snprintf(name, sizeof(name), "%06d", i);
    write_scan(scan.cloud, dir / "velodyne" / (std::string(name) + ".bin"));
    write_predictions(scan.labels, dir / "labels" / (std::string(name) + ".label"));
  }
  std::ofstream meta(dir / "meta.txt");
  meta.precision(17);
  meta << "# synthetic dataset\n"
       << "scans = " << n << "\n"
       << "width = " << spec.beams.width << "\n"
       << "height = " << spec.beams.height << "\n"
       << "fov_up_deg = " << spec.beams.fov_up * 180.0 / std::numbers::pi << "\n"
       << "fov_down_deg = " << spec.beams.fov_down * 180.0 / std::numbers::pi << "\n"
       << "num_classes = " << kSynthClasses << "\n"
       << "seed = " << spec.seed << "\n";
  if (!meta) {
    throw IoError("cannot write " + (dir / "meta.txt").string());
  }
}

}  // namespace rangeseg
