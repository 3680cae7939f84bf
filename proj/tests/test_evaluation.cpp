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
#include <numeric>
#include <random>
#include <thread>
#include <vector>

#include "rangeseg/evaluation.hpp"
#include "test_util.hpp"

using namespace rangeseg;

namespace
{

LabelSet labels(std::vector<ClassId> v)
{
  LabelSet s;
  s.labels = std::move(v);
  return s;
}

LabelSet random_labels(std::size_t n, ClassId nc, std::mt19937_64 & rng, bool with_ignored = false)
{
  LabelSet s;
  for (std::size_t i = 0; i < n; ++i) {
    s.labels.push_back(with_ignored && rng() % 10 == 0 ? 255 : static_cast<ClassId>(rng() % nc));
  }
  return s;
}

}  // namespace

TEST(Confusion, PerfectPredictionIsDiagonal)
{
  const LabelSet t = labels({0, 1, 2, 2, 1, 0, 3});
  ConfusionMatrix cm(4);
  cm.accumulate(t, t);
  for (ClassId a = 0; a < 4; ++a) {
    for (ClassId b = 0; b < 4; ++b) {
      EXPECT_EQ(cm.at(a, b), a == b ? std::count(t.labels.begin(), t.labels.end(), a) : 0);
    }
  }
  const MiouResult r = miou(cm);
  for (const double v : r.iou) {
    EXPECT_EQ(v, 1.0);
  }
  EXPECT_EQ(r.mean, 1.0);
}

TEST(Confusion, SinglePointLandsInItsCell)
{
  ConfusionMatrix cm(3);
  cm.accumulate(labels({1}), labels({2}));
  EXPECT_EQ(cm.at(1, 2), 1u);
  EXPECT_EQ(cm.total(), 1u);
}

TEST(Confusion, MatchesLoopOracle)
{
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const ClassId nc = 2 + static_cast<ClassId>(rng() % 18);
    const std::size_t n = 1 + rng() % 5000;
    const LabelSet t = random_labels(n, nc, rng, true);
    const LabelSet p = random_labels(n, nc, rng);
    ConfusionMatrix cm(nc);
    cm.accumulate(t, p);
    std::vector<std::uint64_t> oracle(static_cast<std::size_t>(nc) * nc, 0);
    std::uint64_t counted = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (t[i] != 255) {
        ++oracle[t[i] * nc + p[i]];
        ++counted;
      }
    }
    for (ClassId a = 0; a < nc; ++a) {
      for (ClassId b = 0; b < nc; ++b) {
        ASSERT_EQ(cm.at(a, b), oracle[a * nc + b]);
      }
    }
    EXPECT_EQ(cm.total(), counted);
  }
}

TEST(Confusion, IgnoredTruthIsSkippedAndErrorsAreReported)
{
  ConfusionMatrix cm(2);
  cm.accumulate(labels({255, 0}), labels({7, 0}));
  EXPECT_EQ(cm.total(), 1u);
  EXPECT_THROW(cm.accumulate(labels({0, 1}), labels({0})), ShapeError);
  EXPECT_THROW(cm.accumulate(labels({0}), labels({2})), DomainError);
  EXPECT_THROW(cm.accumulate(labels({5}), labels({0})), DomainError);
  EXPECT_THROW(cm.merge(ConfusionMatrix(3)), ShapeError);
}

TEST(Confusion, AccumulationOrderDoesNotMatter)
{
  std::mt19937_64 rng(2);
  const LabelSet ta = random_labels(700, 5, rng, true), pa = random_labels(700, 5, rng);
  const LabelSet tb = random_labels(300, 5, rng, true), pb = random_labels(300, 5, rng);
  const ConfusionMatrix ab = accumulate(accumulate(ConfusionMatrix(5), ta, pa), tb, pb);
  const ConfusionMatrix ba = accumulate(accumulate(ConfusionMatrix(5), tb, pb), ta, pa);
  EXPECT_EQ(ab, ba);
  ConfusionMatrix merged = accumulate(ConfusionMatrix(5), ta, pa);
  merged.merge(accumulate(ConfusionMatrix(5), tb, pb));
  EXPECT_EQ(merged, ab);
}

TEST(Confusion, PerThreadMatricesMergeToTheSerialResult)
{
  std::mt19937_64 rng(3);
  std::vector<LabelSet> truth, pred;
  for (int s = 0; s < 8; ++s) {
    truth.push_back(random_labels(1000, 6, rng, true));
    pred.push_back(random_labels(1000, 6, rng));
  }
  ConfusionMatrix serial(6);
  for (int s = 0; s < 8; ++s) {
    serial.accumulate(truth[s], pred[s]);
  }
  std::vector<ConfusionMatrix> part(4, ConfusionMatrix(6));
  std::vector<std::thread> th;
  for (int w = 0; w < 4; ++w) {
    th.emplace_back([&, w] {
        for (int s = w; s < 8; s += 4) {
          part[w].accumulate(truth[s], pred[s]);
        }
      });
  }
  for (auto & t : th) {
    t.join();
  }
  ConfusionMatrix merged(6);
  for (const auto & p : part) {
    merged.merge(p);
  }
  EXPECT_EQ(merged, serial);
}

TEST(Miou, HandComputedTwoClassCase)
{
  ConfusionMatrix cm(2);
  cm.accumulate(labels({0, 0, 1, 1}), labels({0, 1, 1, 1}));
  const MiouResult r = miou(cm);
  EXPECT_DOUBLE_EQ(r.iou[0], 1.0 / 2.0);
  EXPECT_DOUBLE_EQ(r.iou[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.mean, 7.0 / 12.0);
}

TEST(Miou, AbsentClassIsExcluded)
{
  ConfusionMatrix cm(3);
  cm.accumulate(labels({0, 0, 1, 1}), labels({0, 1, 1, 1}));
  const MiouResult r = miou(cm);
  EXPECT_TRUE(std::isnan(r.iou[2]));
  EXPECT_EQ(r.included, (std::vector<std::uint8_t>{1, 1, 0}));
  EXPECT_DOUBLE_EQ(r.mean, 7.0 / 12.0);
  EXPECT_THROW(miou(ConfusionMatrix(3)), DomainError);
}

TEST(Miou, PredictedButAbsentClassCountsAsZero)
{
  ConfusionMatrix cm(3);
  cm.accumulate(labels({0, 0}), labels({0, 2}));
  const MiouResult r = miou(cm);
  EXPECT_EQ(r.iou[2], 0.0);
  EXPECT_DOUBLE_EQ(r.mean, 0.25);
}

TEST(Miou, InvariantUnderClassRelabeling)
{
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const ClassId nc = 2 + static_cast<ClassId>(rng() % 10);
    LabelSet t = random_labels(2000, nc, rng, true), p = random_labels(2000, nc, rng);
    // bias predictions toward the truth so the IoUs differ per class
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] != 255 && rng() % 3) {
        p.labels[i] = t[i];
      }
    }
    std::vector<ClassId> perm(nc);
    std::iota(perm.begin(), perm.end(), ClassId{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    LabelSet t2 = t, p2 = p;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] != 255) {
        t2.labels[i] = perm[t[i]];
      }
      p2.labels[i] = perm[p[i]];
    }
    ConfusionMatrix a(nc), b(nc);
    a.accumulate(t, p);
    b.accumulate(t2, p2);
    const MiouResult ra = miou(a), rb = miou(b);
    for (ClassId c = 0; c < nc; ++c) {
      ASSERT_EQ(ra.iou[c], rb.iou[perm[c]]);
    }
    EXPECT_NEAR(ra.mean, rb.mean, 1e-15);
  }
}

TEST(Miou, CsvReport)
{
  ConfusionMatrix cm(3);
  cm.accumulate(labels({0, 0, 1, 1}), labels({0, 1, 1, 1}));
  test::TempDir dir;
  write_miou_csv(miou(cm), dir.path() / "miou.csv");
  const auto b = test::read_bytes(dir.path() / "miou.csv");
  const std::string text(b.begin(), b.end());
  EXPECT_EQ(text.substr(0, 16), "class,iou\n0,0.5\n");
  EXPECT_NE(text.find("\n2,nan\n"), std::string::npos);
  const auto pos = text.find("mIoU,");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_DOUBLE_EQ(std::stod(text.substr(pos + 5)), 7.0 / 12.0);
}

TEST(Bench, QuantileInterpolates)
{
  EXPECT_EQ(quantile({3.0, 1.0, 2.0}, 0.5), 2.0);
  EXPECT_EQ(quantile({1.0, 2.0, 3.0, 4.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({0.0, 10.0}, 0.95), 9.5);
  EXPECT_EQ(quantile({5.0}, 0.95), 5.0);
  EXPECT_THROW(quantile({}, 0.5), DomainError);
}

TEST(Bench, NoOpStageAndAccounting)
{
  BenchRecorder rec;
  for (int i = 0; i < 12; ++i) {
    const auto t0 = BenchRecorder::Clock::now();
    rec.time("noop", [] {});
    const int v = rec.time("work", [] {
          volatile int s = 0;
          for (int k = 0; k < 20000; ++k) {
            s = s + k;
          }
          return static_cast<int>(s);
        });
    EXPECT_GT(v, 0);
    rec.record("total", BenchRecorder::elapsed_ms(t0));
  }
  const BenchReport rep = summarize(rec, 2);
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_EQ(rep.rows[0].stage, "noop");
  EXPECT_LT(rep.row("noop").median_ms, 1.0);
  for (std::size_t i = 2; i < 12; ++i) {
    EXPECT_LE(rec.samples("noop")[i] + rec.samples("work")[i], rec.samples("total")[i]);
  }
  EXPECT_THROW(summarize(rec, 12), DomainError);
  EXPECT_THROW(rep.row("knn"), DomainError);
}

TEST(Bench, CsvRoundTrips)
{
  std::mt19937_64 rng(5);
  BenchReport rep;
  for (const char * s : {"project", "group", "forward", "reproject", "knn", "total"}) {
    const double a = std::uniform_real_distribution<double>(0.0, 100.0)(rng);
    rep.rows.push_back({s, a, a * 1.3});
  }
  EXPECT_EQ(parse_bench_csv(format_bench_csv(rep)), rep);
  EXPECT_THROW(parse_bench_csv("stage,ms\n"), FormatError);
  EXPECT_THROW(parse_bench_csv("stage,median_ms,p95_ms\nknn,1.0\n"), FormatError);
  EXPECT_THROW(parse_bench_csv("stage,median_ms,p95_ms\nknn,1.0,x\n"), FormatError);
}
