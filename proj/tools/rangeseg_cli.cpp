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

// rangeseg command-line entry point.
//
// Every subcommand resolves its settings as defaults < --config file <
// explicit flags (infer and bench put the run directory's config.txt between
// defaults and --config) and writes the resolved set to its output directory.
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage, 3 invalid config, 4 I/O,
// 5 malformed file, 6 training divergence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rangeseg/ad/checkpoint.hpp"
#include "rangeseg/config.hpp"
#include "rangeseg/evaluation.hpp"
#include "rangeseg/grouping.hpp"
#include "rangeseg/inference.hpp"
#include "rangeseg/model.hpp"
#include "rangeseg/postprocess.hpp"
#include "rangeseg/projection.hpp"
#include "rangeseg/scan_io.hpp"
#include "rangeseg/synth.hpp"
#include "rangeseg/training.hpp"

namespace fs = std::filesystem;
using namespace rangeseg;

namespace
{

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kConfig = 3, kIo = 4, kFormat = 5, kDivergence = 6 };

struct OptSpec
{
  std::string key;      ///< flag name without dashes, also the config key
  std::string def;      ///< default; empty means unset
  std::string help;
  bool flag = false;
};

/// One subcommand: its options and the values seen on the command line.
class Command
{
public:
  Command(CLI::App & parent, const std::string & name, const std::string & help, std::vector<OptSpec> specs)
  : app_(parent.add_subcommand(name, help)), specs_(std::move(specs))
  {
    app_->add_option("--config", config_path_, "key = value file; flags override it");
    for (const auto & s : specs_) {
      const std::string text = s.help + (s.def.empty() || s.flag ? "" : " [" + s.def + "]");
      if (s.flag) {
        opts_[s.key] = app_->add_flag("--" + s.key, flags_[s.key], text);
      } else {
        opts_[s.key] = app_->add_option("--" + s.key, values_[s.key], text);
      }
    }
  }

  bool parsed() const {return app_->parsed();}

  /// defaults < base < --config < flags
  KeyValueConfig resolve(const KeyValueConfig * base = nullptr) const
  {
    KeyValueConfig kv;
    for (const auto & s : specs_) {
      if (!s.def.empty()) {
        kv.set(s.key, s.def);
      }
    }
    if (base) {
      for (const auto & k : base->keys()) {
        if (known(k)) {
          kv.set(k, base->get(k));
        }
      }
    }
    if (!config_path_.empty()) {
      const KeyValueConfig file = KeyValueConfig::load(config_path_);
      for (const auto & k : file.keys()) {
        if (!known(k)) {
          throw ConfigError(config_path_ + ": unknown key '" + k + "' for this subcommand");
        }
      }
      kv.merge(file);
    }
    for (const auto & s : specs_) {
      if (opts_.at(s.key)->count() > 0) {
        kv.set(s.key, s.flag ? (flags_.at(s.key) ? "true" : "false") : values_.at(s.key));
      }
    }
    return kv;
  }

private:
  bool known(const std::string & k) const
  {
    for (const auto & s : specs_) {
      if (s.key == k) {
        return true;
      }
    }
    return false;
  }

  CLI::App * app_;
  std::vector<OptSpec> specs_;
  std::string config_path_;
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> flags_;
  std::map<std::string, CLI::Option *> opts_;
};

std::vector<OptSpec> concat(std::initializer_list<std::vector<OptSpec>> parts)
{
  std::vector<OptSpec> out;
  for (const auto & p : parts) {
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

const std::vector<OptSpec> kProjectionOpts = {
  {"width", "2048", "range image width (pixels)"},
  {"height", "64", "range image height (pixels)"},
  {"fov-up-deg", "", "f_up of the projection, degrees (required)"},
  {"fov-down-deg", "", "f_down of the projection, degrees (required)"},
};

const std::vector<OptSpec> kGroupingOpts = {
  {"k", "4", "grouping window side"},
  {"stride", "4", "grouping stride"},
};

const std::vector<OptSpec> kModelOpts = {
  {"preset", "tiny", "network size: full, small or tiny"},
  {"num-classes", "19", "number of semantic classes"},
  {"ignore-id", "255", "label id excluded from loss and metrics"},
  {"circular", "", "circular horizontal padding", true},
  {"branch-merge", "add", "branch merge: add or concat"},
  {"no-local", "", "disable the local feature extractor", true},
  {"no-context", "", "disable the context feature extractor", true},
  {"no-attention", "", "disable the attention fusion", true},
  {"no-spatial", "", "disable the spatial feature extractor", true},
  {"no-relative", "", "feed only the 5 raw point features", true},
};

const std::vector<OptSpec> kKnnOpts = {
  {"knn", "", "refine point labels with depth KNN", true},
  {"knn-window", "7", "KNN window side (odd)"},
  {"knn-k", "7", "KNN neighbour count"},
  {"knn-weighted", "", "Gaussian depth-weighted votes", true},
};

bool flag_on(const KeyValueConfig & kv, const std::string & key) {return kv.has(key) && kv.get_bool(key);}

int get_int(const KeyValueConfig & kv, const std::string & key)
{
  const long long v = kv.get_int(key);
  if (v < INT32_MIN || v > INT32_MAX) {
    throw ConfigError("config key '" + key + "' is out of range");
  }
  return static_cast<int>(v);
}

ProjectionConfig projection_from(const KeyValueConfig & kv)
{
  for (const char * k : {"fov-up-deg", "fov-down-deg"}) {
    if (!kv.has(k)) {
      throw ConfigError(std::string("missing --") + k + " (the sensor field of view has no default)");
    }
  }
  ProjectionConfig p{get_int(kv, "width"), get_int(kv, "height"), degrees_to_radians(kv.get_double("fov-up-deg")),
    degrees_to_radians(kv.get_double("fov-down-deg"))};
  p.validate();
  return p;
}

GroupingConfig grouping_from(const KeyValueConfig & kv)
{
  GroupingConfig g;
  g.k = get_int(kv, "k");
  g.stride = get_int(kv, "stride");
  return g;
}

/// The network is built around 4x4 groups with stride 4.
void require_network_grouping(const KeyValueConfig & kv)
{
  const GroupingConfig g = grouping_from(kv);
  const GroupingConfig n = network_grouping();
  if (g.k != n.k || g.stride != n.stride) {
    throw ConfigError("the network needs --k 4 --stride 4 (its learned grid is H/4 x W/4)");
  }
}

ModelConfig model_from(const KeyValueConfig & kv)
{
  ModelConfig m = ModelConfig::from_preset(kv.get("preset"), get_int(kv, "num-classes"));
  m.circular_width = flag_on(kv, "circular");
  const std::string merge = kv.get("branch-merge");
  if (merge == "add") {
    m.branch_merge = BranchMerge::add;
  } else if (merge == "concat") {
    m.branch_merge = BranchMerge::concat;
  } else {
    throw ConfigError("branch-merge must be add or concat, got '" + merge + "'");
  }
  m.use_local = !flag_on(kv, "no-local");
  m.use_context = !flag_on(kv, "no-context");
  m.use_attention = !flag_on(kv, "no-attention");
  m.use_spatial = !flag_on(kv, "no-spatial");
  m.use_relative_features = !flag_on(kv, "no-relative");
  m.validate();
  return m;
}

ClassId ignore_from(const KeyValueConfig & kv)
{
  const long long v = kv.get_int("ignore-id");
  if (v < 0 || v > 0xFFFF) {
    throw ConfigError("ignore-id must fit in 16 bits");
  }
  return static_cast<ClassId>(v);
}

KNNConfig knn_from(const KeyValueConfig & kv)
{
  KNNConfig k;
  k.window = get_int(kv, "knn-window");
  k.k = get_int(kv, "knn-k");
  k.weighted = flag_on(kv, "knn-weighted");
  k.validate();
  return k;
}

std::uint64_t seed_from(const KeyValueConfig & kv)
{
  const long long v = kv.get_int("seed");
  if (v < 0) {
    throw ConfigError("seed must be non-negative");
  }
  return static_cast<std::uint64_t>(v);
}

fs::path out_dir(const KeyValueConfig & kv)
{
  if (!kv.has("out")) {
    throw ConfigError("missing --out directory");
  }
  const fs::path dir = kv.get("out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  }
  return dir;
}

fs::path required_path(const KeyValueConfig & kv, const std::string & key)
{
  if (!kv.has(key)) {
    throw ConfigError("missing --" + key);
  }
  return kv.get(key);
}

// ---------------------------------------------------------------------------

int run_synth(const KeyValueConfig & kv)
{
  SceneSpec spec;
  spec.beams = projection_from(kv);
  spec.seed = seed_from(kv);
  spec.range_noise = kv.get_double("noise");
  spec.sensor_height = kv.get_double("sensor-height");
  const int n = get_int(kv, "scans");
  const fs::path dir = out_dir(kv);
  generate_dataset(dir, n, spec);
  kv.save(dir / "config.txt");
  std::cout << "wrote " << n << " scans to " << dir.string() << "\n";
  return kOk;
}

int run_project(const KeyValueConfig & kv)
{
  const ProjectionConfig proj = projection_from(kv);
  const GroupingConfig g = grouping_from(kv);
  g.validate(proj.width, proj.height);
  const PointCloud cloud = read_scan(required_path(kv, "scan"));
  const fs::path dir = out_dir(kv);
  const RangeImage img = build_range_image(cloud, proj);
  export_range_image(img, dir / "range.bin");
  if (flag_on(kv, "groups")) {
    export_groups(augment_features(make_groups<double>(img, g)), dir / "groups.bin");
  }
  kv.save(dir / "config.txt");
  std::cout << "projected " << cloud.size() << " points onto " << img.valid_count() << " of "
            << proj.width * proj.height << " pixels\n";
  return kOk;
}

int run_train(const KeyValueConfig & kv)
{
  const ProjectionConfig proj = projection_from(kv);
  require_network_grouping(kv);
  const ModelConfig mcfg = model_from(kv);
  const ClassId ignore = ignore_from(kv);

  TrainConfig t;
  t.epochs = get_int(kv, "epochs");
  t.batch_size = kv.get("batch") == "auto" ? TrainConfig::default_batch_size(mcfg.preset) : get_int(kv, "batch");
  t.lr0 = kv.get_double("lr");
  t.lr_decay = kv.get_double("lr-decay");
  t.momentum = kv.get_double("momentum");
  t.weight_decay = kv.get_double("weight-decay");
  t.seed = seed_from(kv);
  t.augment = !flag_on(kv, "no-augment");
  t.eval_every = get_int(kv, "eval-every");
  t.checkpoint_every = get_int(kv, "checkpoint-every");
  t.validate();

  const fs::path data_dir = required_path(kv, "data");
  const auto data = load_dataset(data_dir, static_cast<ClassId>(mcfg.num_classes), ignore);
  std::vector<LabeledScan> val;
  if (kv.has("val")) {
    val = load_dataset(kv.get("val"), static_cast<ClassId>(mcfg.num_classes), ignore);
  }
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(mcfg.num_classes), 0);
  for (const auto & s : data) {
    count_classes(s.labels, ignore, counts);
  }
  const LossSpec loss = compute_class_weights(counts, kv.get_double("power-i"), ignore);

  const fs::path dir = out_dir(kv);
  KeyValueConfig resolved = kv;
  resolved.set("batch", std::to_string(t.batch_size));
  resolved.save(dir / "config.txt");
  {
    std::ofstream w(dir / "class_weights.csv");
    w.precision(17);
    w << "class,count,frequency,weight\n";
    for (std::size_t c = 0; c < loss.weights.size(); ++c) {
      w << c << "," << loss.counts[c] << "," << loss.frequencies[c] << "," << loss.weights[c] << "\n";
    }
  }

  SegmentationModel<float> model(mcfg, proj.width, proj.height, t.seed);
  TrainOutputs outputs;
  outputs.dir = dir;
  const bool quiet = flag_on(kv, "quiet");
  outputs.on_epoch = [quiet](const EpochMetrics & m) {
      if (!quiet) {
        std::printf("epoch %d lr %.6g loss %.6f", m.epoch, m.lr, m.train_loss);
        if (!std::isnan(m.val_miou)) {
          std::printf(" val_mIoU %.4f", m.val_miou);
        }
        std::printf("\n");
        std::fflush(stdout);
      }
    };
  train(model, data, val.empty() ? nullptr : &val, loss, proj, t, outputs);
  std::cout << "training finished; checkpoint at " << (dir / "checkpoint.rsck").string() << "\n";
  return kOk;
}

/// Model built from a resolved config and loaded from a checkpoint.
std::unique_ptr<SegmentationModel<float>> load_model(const KeyValueConfig & kv, const ProjectionConfig & proj)
{
  auto model = std::make_unique<SegmentationModel<float>>(model_from(kv), proj.width, proj.height, 0);
  ad::load_checkpoint(required_path(kv, "checkpoint"), model->parameters(), model->buffers());
  return model;
}

int run_infer(const KeyValueConfig & kv)
{
  const ProjectionConfig proj = projection_from(kv);
  require_network_grouping(kv);
  auto model = load_model(kv, proj);
  const std::optional<KNNConfig> knn = flag_on(kv, "knn") ? std::optional(knn_from(kv)) : std::nullopt;
  const fs::path data_dir = required_path(kv, "data");
  const fs::path dir = out_dir(kv);
  kv.save(dir / "config.txt");
  std::size_t n = 0;
  for (const auto & scan : list_scans(data_dir)) {
    const PointCloud cloud = read_scan(scan);
    write_predictions(segment_scan(*model, cloud, proj, knn), dir / (scan.stem().string() + ".label"));
    ++n;
  }
  std::cout << "wrote " << n << " prediction files to " << dir.string() << "\n";
  return kOk;
}

int run_eval(const KeyValueConfig & kv)
{
  const auto nc = static_cast<ClassId>(get_int(kv, "num-classes"));
  const ClassId ignore = ignore_from(kv);
  const fs::path pred_dir = required_path(kv, "pred");
  const fs::path data_dir = required_path(kv, "data");
  ConfusionMatrix cm(nc, ignore);
  std::size_t n = 0;
  for (const auto & scan : list_scans(data_dir)) {
    const fs::path pred_path = pred_dir / (scan.stem().string() + ".label");
    const auto bytes = rangeseg::detail::read_all_bytes(pred_path);
    const LabelSet pred = decode_labels(bytes.data(), bytes.size(), bytes.size() / 4, pred_path.string());
    const LabelSet truth = read_labels(label_path_for(data_dir, scan), pred.size());
    cm.accumulate(truth, pred);
    ++n;
  }
  const MiouResult r = miou(cm);
  const fs::path dir = out_dir(kv);
  write_miou_csv(r, dir / "miou.csv");
  kv.save(dir / "config.txt");
  std::printf("evaluated %zu scans: mIoU %.4f\n", n, r.mean);
  return kOk;
}

int run_bench(const KeyValueConfig & kv)
{
  const ProjectionConfig proj = projection_from(kv);
  const KNNConfig knn = knn_from(kv);
  const int repeat = get_int(kv, "repeat");
  const int warmup = get_int(kv, "warmup");
  if (repeat - warmup < 10 || warmup < 0) {
    throw ConfigError("bench needs warmup >= 0 and at least 10 measured repetitions");
  }
  std::vector<fs::path> scans;
  if (kv.has("scan")) {
    scans.push_back(kv.get("scan"));
  } else {
    scans = list_scans(required_path(kv, "data"));
  }
  const bool forward = !flag_on(kv, "no-forward");
  std::unique_ptr<SegmentationModel<float>> model;
  if (forward) {
    require_network_grouping(kv);
    if (kv.has("checkpoint")) {
      model = load_model(kv, proj);
    } else {
      model = std::make_unique<SegmentationModel<float>>(model_from(kv), proj.width, proj.height, seed_from(kv));
    }
  }
  const GroupingConfig g = network_grouping();
  std::vector<PointCloud> clouds;
  for (const auto & s : scans) {
    clouds.push_back(read_scan(s));
  }

  BenchRecorder rec;
  for (int i = 0; i < repeat; ++i) {
    const PointCloud & cloud = clouds[static_cast<std::size_t>(i) % clouds.size()];
    const auto t0 = BenchRecorder::Clock::now();
    RangeImage img = rec.time("project", [&] {return build_range_image(cloud, proj);});
    PreparedScan prep;
    prep.groups = rec.time("group", [&] {return augment_features(make_groups<double>(img, g));});
    prep.image = std::move(img);
    std::vector<ClassId> pixels(static_cast<std::size_t>(proj.width) * proj.height, 0);
    if (forward) {
      pixels = rec.time("forward", [&] {return predict_pixels(*model, {&prep}).front();});
    }
    rec.time("reproject", [&] {return reproject_labels(prep.image, pixels, cloud.size());});
    rec.time("knn", [&] {return knn_refine(cloud, prep.image, pixels, knn);});
    rec.record("total", BenchRecorder::elapsed_ms(t0));
  }
  const BenchReport rep = summarize(rec, static_cast<std::size_t>(warmup));
  const fs::path dir = out_dir(kv);
  {
    std::ofstream out(dir / "bench.csv");
    out << format_bench_csv(rep);
    if (!out) {
      throw IoError("cannot write '" + (dir / "bench.csv").string() + "'");
    }
  }
  kv.save(dir / "config.txt");
  double non_learning = 0.0;
  for (const auto & r : rep.rows) {
    std::printf("%-10s median %9.3f ms   p95 %9.3f ms\n", r.stage.c_str(), r.median_ms, r.p95_ms);
    if (r.stage != "total" && r.stage != "forward") {
      non_learning += r.median_ms;
    }
  }
  std::printf("non-learning stages: %.3f ms per scan\n", non_learning);
  std::printf("end to end: %.2f scans/s\n", 1000.0 / rep.row("total").median_ms);
  return kOk;
}

int run_params(const KeyValueConfig & kv)
{
  const int w = get_int(kv, "width"), h = get_int(kv, "height");
  std::vector<std::string> presets;
  if (kv.get("preset") == "all") {
    presets = {"full", "small", "tiny"};
  } else {
    presets = {kv.get("preset")};
  }
  for (const auto & p : presets) {
    KeyValueConfig one = kv;
    one.set("preset", p);
    SegmentationModel<float> m(model_from(one), w, h, 0);
    std::printf("%s %zu\n", p.c_str(), m.parameter_count());
  }
  return kOk;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"rangeseg: range-image LIDAR semantic segmentation"};
  app.require_subcommand(1);
  app.fallthrough(false);

  const std::vector<OptSpec> seed_opt = {{"seed", "0", "random seed"}};
  const std::vector<OptSpec> out_opt = {{"out", "", "output directory"}};

  std::vector<OptSpec> synth_proj = kProjectionOpts;
  synth_proj[0].def = "512";
  synth_proj[2].def = "15";
  synth_proj[3].def = "15";
  Command synth(app, "synth", "generate a synthetic labeled dataset", concat({synth_proj, seed_opt, out_opt, {
      {"scans", "200", "number of scans"},
      {"noise", "0.02", "range noise std (m)"},
      {"sensor-height", "1.73", "sensor height above ground (m)"},
    }}));
  Command project(app, "project", "project a scan to a range image dump", concat({kProjectionOpts, kGroupingOpts,
      out_opt, {
      {"scan", "", "input .bin scan"},
      {"groups", "", "also dump the 11-channel point groups", true},
    }}));
  Command trainc(app, "train", "train a model on a dataset directory", concat({kProjectionOpts, kGroupingOpts,
      kModelOpts, seed_opt, out_opt, {
      {"data", "", "training dataset directory (velodyne/, labels/)"},
      {"val", "", "validation dataset directory"},
      {"epochs", "500", "epochs"},
      {"batch", "auto", "batch size (auto: 3/6/8 for full/small/tiny)"},
      {"lr", "0.004", "initial learning rate"},
      {"lr-decay", "0.99", "learning-rate decay per epoch"},
      {"power-i", "0.25", "class-weight exponent"},
      {"momentum", "0", "SGD momentum"},
      {"weight-decay", "0", "L2 weight decay"},
      {"no-augment", "", "disable data augmentation", true},
      {"eval-every", "1", "epochs between validation passes (0: never)"},
      {"checkpoint-every", "0", "epochs between numbered checkpoints (0: last only)"},
      {"quiet", "", "no per-epoch output", true},
    }}));
  const std::vector<OptSpec> run_opts = {
    {"run", "", "training run directory (its config.txt and checkpoint.rsck are used)"},
    {"checkpoint", "", "checkpoint file"},
  };
  Command infer(app, "infer", "predict labels for every scan of a directory", concat({kProjectionOpts,
      kGroupingOpts, kModelOpts, kKnnOpts, run_opts, out_opt, {
      {"data", "", "directory with velodyne/ scans"},
    }}));
  Command eval(app, "eval", "mIoU of prediction files against ground truth", concat({out_opt, {
      {"pred", "", "directory of .label predictions"},
      {"data", "", "dataset directory with velodyne/ and labels/"},
      {"num-classes", "19", "number of semantic classes"},
      {"ignore-id", "255", "label id excluded from the metric"},
    }}));
  Command bench(app, "bench", "per-stage timing report", concat({kProjectionOpts, kGroupingOpts, kModelOpts,
      kKnnOpts, run_opts, seed_opt, out_opt, {
      {"scan", "", "single .bin scan to time"},
      {"data", "", "directory with velodyne/ scans"},
      {"repeat", "23", "timed iterations"},
      {"warmup", "3", "initial iterations left out of the statistics"},
      {"no-forward", "", "skip the network", true},
    }}));
  std::vector<OptSpec> params_model = kModelOpts;
  params_model[0].help = "network size: full, small, tiny or all";
  Command params(app, "params", "print parameter counts", concat({params_model, {
      {"width", "2048", "range image width"},
      {"height", "64", "range image height"},
    }}));
  if (argc < 2) {
    std::cerr << app.help();
    return kUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp & e) {
    return app.exit(e);
  } catch (const CLI::ParseError & e) {
    app.exit(e);
    return kUsage;
  }

  /// Run directory config sits between the defaults and --config.
  auto with_run = [](const Command & c) {
      KeyValueConfig first = c.resolve();
      if (!first.has("run")) {
        return first;
      }
      const fs::path run = first.get("run");
      KeyValueConfig base = KeyValueConfig::load(run / "config.txt");
      base.set("checkpoint", (run / "checkpoint.rsck").string());
      for (const char * k : {"out", "data", "seed"}) {
        if (base.has(k)) {
          base.set(k, "");
        }
      }
      KeyValueConfig cleaned;
      for (const auto & k : base.keys()) {
        if (!base.get(k).empty()) {
          cleaned.set(k, base.get(k));
        }
      }
      return c.resolve(&cleaned);
    };

  try {
    if (synth.parsed()) {
      return run_synth(synth.resolve());
    }
    if (project.parsed()) {
      return run_project(project.resolve());
    }
    if (trainc.parsed()) {
      return run_train(trainc.resolve());
    }
    if (infer.parsed()) {
      return run_infer(with_run(infer));
    }
    if (eval.parsed()) {
      return run_eval(eval.resolve());
    }
    if (bench.parsed()) {
      return run_bench(with_run(bench));
    }
    if (params.parsed()) {
      return run_params(params.resolve());
    }
  } catch (const ConfigError & e) {
    std::cerr << "rangeseg: config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError & e) {
    std::cerr << "rangeseg: i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError & e) {
    std::cerr << "rangeseg: format error: " << e.what() << "\n";
    return kFormat;
  } catch (const DivergenceError & e) {
    std::cerr << "rangeseg: training diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception & e) {
    std::cerr << "rangeseg: error: " << e.what() << "\n";
    return kFailure;
  }
  std::cerr << app.help();
  return kUsage;
}
