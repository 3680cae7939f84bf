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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "rangeseg/errors.hpp"
#include "rangeseg/scan_io.hpp"

namespace rangeseg
{

/// Rows are ground truth, columns are predictions.
class ConfusionMatrix
{
public:
  explicit ConfusionMatrix(ClassId num_classes = 0, ClassId ignore_id = 255)
  : nc_(num_classes), ignore_id_(ignore_id), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {}

  ClassId num_classes() const {return nc_;}
  ClassId ignore_id() const {return ignore_id_;}
  std::uint64_t at(ClassId truth, ClassId pred) const {return counts_.at(static_cast<std::size_t>(truth) * nc_ + pred);}

  std::uint64_t total() const
  {
    std::uint64_t t = 0;
    for (const auto c : counts_) {
      t += c;
    }
    return t;
  }

  /// Points whose truth is ignore_id are skipped. A prediction outside
  /// [0, Nc) for a counted point is an error.
  void accumulate(const LabelSet & truth, const LabelSet & pred)
  {
    if (truth.size() != pred.size()) {
      throw ShapeError("confusion: " + std::to_string(truth.size()) + " truth labels vs " +
                       std::to_string(pred.size()) + " predictions");
    }
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const ClassId t = truth[i];
      if (t == ignore_id_) {
        continue;
      }
      const ClassId p = pred[i];
      if (t >= nc_ || p >= nc_) {
        throw DomainError("confusion: label out of range at point " + std::to_string(i) + " (truth " +
                          std::to_string(t) + ", prediction " + std::to_string(p) + ", Nc " +
                          std::to_string(nc_) + ")");
      }
      ++counts_[static_cast<std::size_t>(t) * nc_ + p];
    }
  }

  void merge(const ConfusionMatrix & other)
  {
    if (other.nc_ != nc_) {
      throw ShapeError("confusion: cannot merge matrices of different class counts");
    }
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      counts_[i] += other.counts_[i];
    }
  }

  friend bool operator==(const ConfusionMatrix &, const ConfusionMatrix &) = default;

private:
  ClassId nc_;
  ClassId ignore_id_;
  std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix accumulate(ConfusionMatrix cm, const LabelSet & truth, const LabelSet & pred)
{
  cm.accumulate(truth, pred);
  return cm;
}

struct MiouResult
{
  std::vector<double> iou;          ///< NaN for excluded classes
  std::vector<std::uint8_t> included;
  double mean = 0.0;
};

/// IoU_c = TP / (TP + FP + FN); classes with a zero denominator are left out of the mean.
inline MiouResult miou(const ConfusionMatrix & cm)
{
  const ClassId nc = cm.num_classes();
  MiouResult r;
  r.iou.assign(nc, std::nan(""));
  r.included.assign(nc, 0);
  double sum = 0.0;
  int n = 0;
  for (ClassId c = 0; c < nc; ++c) {
    const std::uint64_t tp = cm.at(c, c);
    std::uint64_t fp = 0, fn = 0;
    for (ClassId o = 0; o < nc; ++o) {
      if (o != c) {
        fp += cm.at(o, c);
        fn += cm.at(c, o);
      }
    }
    const std::uint64_t den = tp + fp + fn;
    if (den == 0) {
      continue;
    }
    r.iou[c] = static_cast<double>(tp) / static_cast<double>(den);
    r.included[c] = 1;
    sum += r.iou[c];
    ++n;
  }
  if (n == 0) {
    throw DomainError("mIoU undefined: no class was present or predicted");
  }
  r.mean = sum / n;
  return r;
}

/// class,iou rows (excluded classes written as "nan"), then a mIoU row.
inline void write_miou_csv(const MiouResult & r, const std::filesystem::path & path)
{
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write '" + path.string() + "'");
  }
  out << std::setprecision(17) << "class,iou\n";
  for (std::size_t c = 0; c < r.iou.size(); ++c) {
    out << c << ",";
    if (r.included[c]) {
      out << r.iou[c];
    } else {
      out << "nan";
    }
    out << "\n";
  }
  out << "mIoU," << r.mean << "\n";
  if (!out) {
    throw IoError("write failure on '" + path.string() + "'");
  }
}

// ---------------------------------------------------------------------------
// Timing

/// Per-stage wall times in milliseconds, one sample per scan.
class BenchRecorder
{
public:
  using Clock = std::chrono::steady_clock;

  void record(const std::string & stage, double ms)
  {
    if (!samples_.contains(stage)) {
      order_.push_back(stage);
    }
    samples_[stage].push_back(ms);
  }

  /// Times `fn` and records it under `stage`; returns fn's result.
  template<typename Fn>
  auto time(const std::string & stage, Fn && fn)
  {
    const auto t0 = Clock::now();
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      record(stage, elapsed_ms(t0));
    } else {
      auto result = fn();
      record(stage, elapsed_ms(t0));
      return result;
    }
  }

  static double elapsed_ms(Clock::time_point t0)
  {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  }

  const std::vector<std::string> & stages() const {return order_;}
  const std::vector<double> & samples(const std::string & stage) const {return samples_.at(stage);}

private:
  std::vector<std::string> order_;
  std::map<std::string, std::vector<double>> samples_;
};

/// Linear-interpolated quantile, q in [0, 1].
inline double quantile(std::vector<double> v, double q)
{
  if (v.empty()) {
    throw DomainError("quantile of an empty sample");
  }
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct BenchRow
{
  std::string stage;
  double median_ms = 0.0;
  double p95_ms = 0.0;

  friend bool operator==(const BenchRow &, const BenchRow &) = default;
};

struct BenchReport
{
  std::vector<BenchRow> rows;

  const BenchRow & row(const std::string & stage) const
  {
    for (const auto & r : rows) {
      if (r.stage == stage) {
        return r;
      }
    }
    throw DomainError("bench report has no stage '" + stage + "'");
  }
  bool has(const std::string & stage) const
  {
    return std::any_of(rows.begin(), rows.end(), [&](const BenchRow & r) {return r.stage == stage;});
  }

  friend bool operator==(const BenchReport &, const BenchReport &) = default;
};

/// Drops the first `warmup` samples of every stage.
inline BenchReport summarize(const BenchRecorder & rec, std::size_t warmup)
{
  BenchReport rep;
  for (const auto & s : rec.stages()) {
    const auto & all = rec.samples(s);
    if (all.size() <= warmup) {
      throw DomainError("bench stage '" + s + "' has no samples after warm-up");
    }
    std::vector<double> v(all.begin() + static_cast<std::ptrdiff_t>(warmup), all.end());
    rep.rows.push_back({s, quantile(v, 0.5), quantile(v, 0.95)});
  }
  return rep;
}

inline std::string format_bench_csv(const BenchReport & rep)
{
  std::ostringstream out;
  out << std::setprecision(17) << "stage,median_ms,p95_ms\n";
  for (const auto & r : rep.rows) {
    out << r.stage << "," << r.median_ms << "," << r.p95_ms << "\n";
  }
  return out.str();
}

inline BenchReport parse_bench_csv(const std::string & text)
{
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "stage,median_ms,p95_ms") {
    throw FormatError("bench report: missing header");
  }
  BenchReport rep;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    const auto a = line.find(',');
    const auto b = a == std::string::npos ? a : line.find(',', a + 1);
    if (b == std::string::npos) {
      throw FormatError("bench report: malformed line " + std::to_string(lineno));
    }
    try {
      std::size_t used = 0;
      BenchRow r{line.substr(0, a), std::stod(line.substr(a + 1, b - a - 1)), 0.0};
      r.p95_ms = std::stod(line.substr(b + 1), &used);
      if (used != line.size() - b - 1) {
        throw std::invalid_argument("trailing");
      }
      rep.rows.push_back(r);
    } catch (const std::exception &) {
      throw FormatError("bench report: bad number on line " + std::to_string(lineno));
    }
  }
  return rep;
}

}  // namespace rangeseg
