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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rangeseg/ad/checkpoint.hpp"
#include "rangeseg/ad/loss.hpp"
#include "rangeseg/ad/optim.hpp"
#include "rangeseg/errors.hpp"
#include "rangeseg/evaluation.hpp"
#include "rangeseg/inference.hpp"
#include "rangeseg/model.hpp"
#include "rangeseg/projection.hpp"
#include "rangeseg/random.hpp"
#include "rangeseg/scan_io.hpp"

namespace rangeseg
{

// ---------------------------------------------------------------------------
// Class balancing

struct LossSpec
{
  std::vector<std::uint64_t> counts;
  std::vector<double> frequencies;   ///< f_c over labeled points
  double median = 0.0;               ///< f_t, median of the nonzero f_c
  double exponent = 0.25;            ///< i
  std::vector<double> weights;       ///< (f_t / f_c)^i, 0 for absent classes
  ClassId ignore_id = 255;

  template<typename T>
  std::vector<T> weights_as() const {return std::vector<T>(weights.begin(), weights.end());}
};

/// Adds the labels of one scan to per-class counts; ignore_id is skipped.
inline void count_classes(const LabelSet & labels, ClassId ignore_id, std::vector<std::uint64_t> & counts)
{
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const ClassId c = labels[i];
    if (c == ignore_id) {
      continue;
    }
    if (c >= counts.size()) {
      throw DomainError("label " + std::to_string(c) + " at point " + std::to_string(i) +
                        " is outside [0, " + std::to_string(counts.size()) + ")");
    }
    ++counts[c];
  }
}

inline LossSpec compute_class_weights(const std::vector<std::uint64_t> & counts, double exponent, ClassId ignore_id)
{
  if (exponent < 0.0) {
    throw ConfigError("class-weight exponent must be non-negative");
  }
  const std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  if (total == 0) {
    throw DomainError("class weights need at least one labeled point; all points are ignored");
  }
  LossSpec s;
  s.counts = counts;
  s.exponent = exponent;
  s.ignore_id = ignore_id;
  std::vector<double> nonzero;
  for (const auto c : counts) {
    const double f = static_cast<double>(c) / static_cast<double>(total);
    s.frequencies.push_back(f);
    if (c > 0) {
      nonzero.push_back(f);
    }
  }
  std::sort(nonzero.begin(), nonzero.end());
  const std::size_t n = nonzero.size();
  s.median = n % 2 == 1 ? nonzero[n / 2] : 0.5 * (nonzero[n / 2 - 1] + nonzero[n / 2]);
  for (const double f : s.frequencies) {
    s.weights.push_back(f > 0.0 ? std::pow(s.median / f, exponent) : 0.0);
  }
  return s;
}

/// Label files of any length; the point count is taken from the file size.
inline LossSpec compute_class_weights(
  const std::vector<std::filesystem::path> & label_files, ClassId num_classes, double exponent, ClassId ignore_id)
{
  std::vector<std::uint64_t> counts(num_classes, 0);
  for (const auto & path : label_files) {
    const auto bytes = detail::read_all_bytes(path);
    if (bytes.size() % 4 != 0) {
      throw FormatError(path.string() + ": label file size " + std::to_string(bytes.size()) +
                        " is not a multiple of 4");
    }
    count_classes(decode_labels(bytes.data(), bytes.size(), bytes.size() / 4, path.string()), ignore_id, counts);
  }
  return compute_class_weights(counts, exponent, ignore_id);
}

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentationConfig
{
  double rotation_std_deg = 40.0;
  std::array<double, 3> shift_std{0.35, 0.35, 0.01};
  bool flip_x = true;
  bool flip_z = true;
  double drop_max = 0.10;   ///< dropped fraction ~ U[0, drop_max]

  static AugmentationConfig none()
  {
    AugmentationConfig c;
    c.rotation_std_deg = 0.0;
    c.shift_std = {0.0, 0.0, 0.0};
    c.flip_x = c.flip_z = false;
    c.drop_max = 0.0;
    return c;
  }

  void validate() const
  {
    if (rotation_std_deg < 0.0 || shift_std[0] < 0.0 || shift_std[1] < 0.0 || shift_std[2] < 0.0) {
      throw ConfigError("augmentation standard deviations must be non-negative");
    }
    if (drop_max < 0.0 || drop_max >= 1.0) {
      throw ConfigError("augmentation drop fraction must lie in [0, 1)");
    }
  }
};

/// One concrete draw of the random transform.
struct AugmentationDraw
{
  double angle = 0.0;                  ///< radians, about z
  std::array<double, 3> shift{0.0, 0.0, 0.0};
  bool flip_x = false;
  bool flip_z = false;
  double drop_fraction = 0.0;
};

inline AugmentationDraw sample_augmentation(const AugmentationConfig & cfg, std::mt19937_64 & rng)
{
  cfg.validate();
  std::normal_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  AugmentationDraw d;
  d.angle = unit(rng) * cfg.rotation_std_deg * std::numbers::pi / 180.0;
  for (int a = 0; a < 3; ++a) {
    d.shift[a] = unit(rng) * cfg.shift_std[a];
  }
  d.flip_x = cfg.flip_x && coin(rng);
  d.flip_z = cfg.flip_z && coin(rng);
  d.drop_fraction = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * cfg.drop_max;
  return d;
}

/// Rotates, shifts, flips, then removes round(fraction * M) points chosen
/// uniformly (at least one point always survives). Order of survivors is kept.
inline std::pair<PointCloud, LabelSet> apply_augmentation(
  const PointCloud & cloud, const LabelSet & labels, const AugmentationDraw & d, std::mt19937_64 & rng)
{
  if (cloud.size() != labels.size()) {
    throw ShapeError("augmentation: " + std::to_string(cloud.size()) + " points vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const double c = std::cos(d.angle), s = std::sin(d.angle);
  const double sx = d.flip_x ? -1.0 : 1.0, sz = d.flip_z ? -1.0 : 1.0;
  const std::size_t m = cloud.size();
  const std::size_t n_drop = std::min(
    static_cast<std::size_t>(std::llround(d.drop_fraction * static_cast<double>(m))), m == 0 ? 0 : m - 1);
  std::vector<std::uint8_t> keep(m, 1);
  if (n_drop > 0) {
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // partial Fisher-Yates: the first n_drop entries are a uniform subset
    for (std::size_t i = 0; i < n_drop; ++i) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(i, m - 1)(rng);
      std::swap(idx[i], idx[j]);
      keep[idx[i]] = 0;
    }
  }
  std::pair<PointCloud, LabelSet> out;
  out.first.points.reserve(m - n_drop);
  out.second.labels.reserve(m - n_drop);
  out.second.num_classes = labels.num_classes;
  out.second.ignore_id = labels.ignore_id;
  for (std::size_t i = 0; i < m; ++i) {
    if (!keep[i]) {
      continue;
    }
    const Point & p = cloud[i];
    const double x = c * p.x - s * p.y + d.shift[0];
    const double y = s * p.x + c * p.y + d.shift[1];
    const double z = double(p.z) + d.shift[2];
    out.first.points.push_back(
      {static_cast<float>(sx * x), static_cast<float>(y), static_cast<float>(sz * z), p.remission});
    out.second.labels.push_back(labels[i]);
  }
  return out;
}

inline std::pair<PointCloud, LabelSet> augment_scan(
  const PointCloud & cloud, const LabelSet & labels, const AugmentationConfig & cfg, std::mt19937_64 & rng)
{
  const AugmentationDraw d = sample_augmentation(cfg, rng);
  return apply_augmentation(cloud, labels, d, rng);
}

// ---------------------------------------------------------------------------
// Data

struct LabeledScan
{
  PointCloud cloud;
  LabelSet labels;
};

/// Scans `dir/velodyne/*.bin` (sorted by name) with labels from
/// `dir/labels/<stem>.label`.
inline std::vector<std::filesystem::path> list_scans(const std::filesystem::path & dir)
{
  const auto vdir = dir / "velodyne";
  if (!std::filesystem::is_directory(vdir)) {
    throw IoError("dataset directory '" + dir.string() + "' has no velodyne/ folder");
  }
  std::vector<std::filesystem::path> scans;
  for (const auto & e : std::filesystem::directory_iterator(vdir)) {
    if (e.is_regular_file() && e.path().extension() == ".bin") {
      scans.push_back(e.path());
    }
  }
  std::sort(scans.begin(), scans.end());
  if (scans.empty()) {
    throw IoError("dataset directory '" + dir.string() + "' holds no .bin scans");
  }
  return scans;
}

inline std::filesystem::path label_path_for(const std::filesystem::path & dir, const std::filesystem::path & scan)
{
  return dir / "labels" / (scan.stem().string() + ".label");
}

inline std::vector<LabeledScan> load_dataset(const std::filesystem::path & dir, ClassId num_classes, ClassId ignore_id)
{
  std::vector<LabeledScan> out;
  for (const auto & scan : list_scans(dir)) {
    LabeledScan s;
    s.cloud = read_scan(scan);
    s.labels = read_labels(label_path_for(dir, scan), s.cloud.size());
    s.labels.num_classes = num_classes;
    s.labels.ignore_id = ignore_id;
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
      if (s.labels[i] != ignore_id && s.labels[i] >= num_classes) {
        throw FormatError(label_path_for(dir, scan).string() + ": label " + std::to_string(s.labels[i]) +
                          " at point " + std::to_string(i) + " is not below the class count " +
                          std::to_string(num_classes));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Network input plus the per-pixel targets (label of the representative
/// point, ignore_id where the pixel is empty).
struct TrainSample
{
  PreparedScan scan;
  std::vector<ClassId> targets;
};

inline TrainSample make_train_sample(const PointCloud & cloud, const LabelSet & labels, const ProjectionConfig & proj)
{
  TrainSample s;
  s.scan = prepare_scan(build_range_image(cloud, proj));
  s.targets = pixel_label_image(s.scan.image, labels, labels.ignore_id);
  return s;
}

// ---------------------------------------------------------------------------
// Loop

struct TrainConfig
{
  int epochs = 500;
  int batch_size = 8;
  double lr0 = 4e-3;
  double lr_decay = 0.99;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bool augment = true;
  AugmentationConfig augmentation;
  int eval_every = 1;          ///< epochs between validation passes, 0 disables
  int checkpoint_every = 0;    ///< epochs between numbered checkpoints, 0 keeps only the last

  /// Learning rate used throughout epoch e (0-based).
  double lr_at(int epoch) const {return lr0 * std::pow(lr_decay, epoch);}

  static int default_batch_size(const std::string & preset)
  {
    if (preset == "full") {
      return 3;
    }
    if (preset == "small") {
      return 6;
    }
    return 8;
  }

  void validate() const
  {
    if (epochs < 0 || batch_size < 1) {
      throw ConfigError("training needs epochs >= 0 and batch size >= 1");
    }
    if (!(lr0 >= 0.0) || !(lr_decay > 0.0 && lr_decay <= 1.0)) {
      throw ConfigError("learning rate must be >= 0 and its decay in (0, 1]");
    }
    if (momentum < 0.0 || momentum >= 1.0 || weight_decay < 0.0) {
      throw ConfigError("momentum must lie in [0, 1) and weight decay be non-negative");
    }
    if (eval_every < 0 || checkpoint_every < 0) {
      throw ConfigError("eval and checkpoint intervals must be non-negative");
    }
    augmentation.validate();
  }
};

struct EpochMetrics
{
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_miou = std::nan("");   ///< NaN when not evaluated this epoch
};

/// Point-level confusion of a model over labeled scans (no augmentation).
template<typename T>
ConfusionMatrix evaluate_model(
  SegmentationModel<T> & model, const std::vector<LabeledScan> & scans, const ProjectionConfig & proj,
  const std::optional<KNNConfig> & knn, ClassId ignore_id)
{
  ConfusionMatrix cm(static_cast<ClassId>(model.config().num_classes), ignore_id);
  for (const auto & s : scans) {
    cm.accumulate(s.labels, segment_scan(model, s.cloud, proj, knn));
  }
  return cm;
}

inline void write_metrics_header(std::ostream & out) {out << "epoch,lr,train_loss,val_mIoU\n";}

inline void write_metrics_row(std::ostream & out, const EpochMetrics & m)
{
  out << std::setprecision(17) << m.epoch << "," << m.lr << "," << m.train_loss << ",";
  if (std::isnan(m.val_miou)) {
    out << "nan";
  } else {
    out << m.val_miou;
  }
  out << "\n";
}

struct TrainOutputs
{
  std::filesystem::path dir;   ///< empty: nothing is written
  std::function<void(const EpochMetrics &)> on_epoch;
};

/// SGD over shuffled batches. Epoch e uses lr0 * decay^e. Every batch is
/// augmented (when enabled) with a seed derived from (seed, epoch, scan), so
/// a run is a pure function of its inputs.
template<typename T>
std::vector<EpochMetrics> train(
  SegmentationModel<T> & model, const std::vector<LabeledScan> & data, const std::vector<LabeledScan> * val,
  const LossSpec & loss, const ProjectionConfig & proj, const TrainConfig & tcfg, const TrainOutputs & outputs = {})
{
  tcfg.validate();
  if (data.empty()) {
    throw ConfigError("training set is empty");
  }
  if (loss.weights.size() != static_cast<std::size_t>(model.config().num_classes)) {
    throw ConfigError("loss has " + std::to_string(loss.weights.size()) + " class weights, model predicts " +
                      std::to_string(model.config().num_classes) + " classes");
  }
  const std::vector<T> weights = loss.weights_as<T>();
  const bool relative = model.config().use_relative_features;

  std::vector<TrainSample> cached;
  if (!tcfg.augment) {
    for (const auto & s : data) {
      cached.push_back(make_train_sample(s.cloud, s.labels, proj));
    }
  }

  std::ofstream metrics;
  if (!outputs.dir.empty()) {
    std::filesystem::create_directories(outputs.dir);
    metrics.open(outputs.dir / "metrics.csv", std::ios::trunc);
    if (!metrics) {
      throw IoError("cannot write '" + (outputs.dir / "metrics.csv").string() + "'");
    }
    write_metrics_header(metrics);
  }

  ad::Sgd<T> opt(model.parameters(), static_cast<T>(tcfg.momentum), static_cast<T>(tcfg.weight_decay));
  std::vector<std::size_t> order(data.size());
  std::vector<EpochMetrics> history;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const double lr = tcfg.lr_at(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(tcfg.seed, 2 * static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + tcfg.batch_size);
      std::vector<TrainSample> fresh;
      std::vector<const TrainSample *> batch;
      if (tcfg.augment) {
        fresh.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) {
          const std::uint64_t stream = static_cast<std::uint64_t>(epoch) * data.size() + order[i];
          std::mt19937_64 rng(derive_seed(tcfg.seed, 2 * stream + 1));
          const auto [cloud, labels] = augment_scan(data[order[i]].cloud, data[order[i]].labels, tcfg.augmentation, rng);
          fresh.push_back(make_train_sample(cloud, labels, proj));
        }
        for (const auto & s : fresh) {
          batch.push_back(&s);
        }
      } else {
        for (std::size_t i = start; i < end; ++i) {
          batch.push_back(&cached[order[i]]);
        }
      }
      std::vector<const PreparedScan *> scans;
      std::vector<ClassId> targets;
      for (const TrainSample * s : batch) {
        scans.push_back(&s->scan);
        targets.insert(targets.end(), s->targets.begin(), s->targets.end());
      }
      const auto in = make_model_input<T>(scans, relative);
      ad::Tensor<T> logits = model.forward(in, nn::Mode::train);
      ad::Tensor<T> l = ad::weighted_cross_entropy(logits, targets, weights, loss.ignore_id);
      const double value = static_cast<double>(l.item());
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batches));
      }
      ad::backward(l);
      opt.step(static_cast<T>(lr));
      loss_sum += value;
      ++batches;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.train_loss = loss_sum / batches;
    const bool last = epoch + 1 == tcfg.epochs;
    if (val != nullptr && !val->empty() && tcfg.eval_every > 0 && ((epoch + 1) % tcfg.eval_every == 0 || last)) {
      m.val_miou = miou(evaluate_model(model, *val, proj, std::nullopt, loss.ignore_id)).mean;
    }
    history.push_back(m);
    if (metrics.is_open()) {
      write_metrics_row(metrics, m);
      metrics.flush();
      ad::save_checkpoint(outputs.dir / "checkpoint.rsck", model.parameters(), model.buffers(),
        static_cast<std::uint32_t>(epoch + 1));
      if (tcfg.checkpoint_every > 0 && (epoch + 1) % tcfg.checkpoint_every == 0) {
        char name[48];
        std::snprintf(name, sizeof(name), "checkpoint_e%04d.rsck", epoch + 1);
        ad::save_checkpoint(outputs.dir / name, model.parameters(), model.buffers(),
          static_cast<std::uint32_t>(epoch + 1));
      }
    }
    if (outputs.on_epoch) {
      outputs.on_epoch(m);
    }
  }
  return history;
}

}  // namespace rangeseg
