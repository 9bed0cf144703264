/* Copyright 2026 The mtdet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "mtdet/checkpoint.hpp"
#include "mtdet/data.hpp"
#include "mtdet/errors.hpp"
#include "mtdet/eval.hpp"
#include "mtdet/model.hpp"
#include "mtdet/render.hpp"
#include "mtdet/report.hpp"
#include "mtdet/synthgen.hpp"
#include "mtdet/training.hpp"

namespace mtdet::cli {
namespace fs = std::filesystem;

namespace {

constexpr const char* kDataRootEnv = "MTDET_DATA_ROOT";
// Exit code for a sweep in which at least one member failed.
constexpr int kPartialSweepExit = 10;

struct GenArgs {
  int n_images = 0;
  uint64_t seed = 0;
  std::string out;
  std::string profile = "desk";
  std::string id_prefix = "img_";
};

struct TrainArgs {
  std::string data;
  std::string out;
  double lambda = 0.2;
  int64_t steps = 2000;
  uint64_t seed = 0;
  std::optional<uint64_t> split_seed;
  int batch = 2;
  double lr = 0.02;
  double momentum = 0.9;
  std::vector<int64_t> decay_steps;
  int64_t checkpoint_every = 0;
  int64_t eval_every = 0;
  double clip_norm = 10.0;
  int64_t merge_threshold = 10;
  bool no_augment = false;
  bool no_class_branch = false;
  bool no_holdout = false;
  bool full_scale = false;
  bool scale_lr = false;
};

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string detections;
  std::string out;
  std::string split = "test";
  bool render = false;
  double render_threshold = 0.5;
  double score_floor = 0.05;
  int cutoff = 8;
  uint64_t seed = 0;
  int64_t merge_threshold = 10;
  bool no_holdout = false;
};

struct SweepArgs {
  TrainArgs train;
  std::vector<double> lambdas = {0, 0.1, 0.2, 0.3, 0.4, 0.5};
  int jobs = 1;
};

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) Fail(ErrorKind::kIo, "cannot write " + path.string());
  f << text;
  if (!f) Fail(ErrorKind::kIo, "short write to " + path.string());
}

std::string ResolveData(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kDataRootEnv); env && *env) return env;
  Fail(ErrorKind::kUsage, std::string("--data is required (or set ") + kDataRootEnv + ")");
}

void AddTrainFlags(CLI::App* cmd, TrainArgs& a, bool with_lambda) {
  cmd->add_option("--data", a.data, "Dataset directory or annotations.jsonl");
  cmd->add_option("--out", a.out, "Output directory")->required();
  if (with_lambda) cmd->add_option("--lambda", a.lambda, "Weight of the class loss")->capture_default_str();
  cmd->add_option("--steps", a.steps, "Total SGD steps")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "Seed for init, sampling, augmentation and split")->capture_default_str();
  cmd->add_option("--split-seed", a.split_seed, "Split seed (defaults to --seed)");
  cmd->add_option("--batch", a.batch, "Images per step")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--lr", a.lr, "Base learning rate")->capture_default_str();
  cmd->add_option("--momentum", a.momentum, "SGD momentum")->capture_default_str();
  cmd->add_option("--decay-steps", a.decay_steps, "Steps at which lr drops 10x (default 75% and 87.5%)")
      ->delimiter(',');
  cmd->add_option("--checkpoint-every", a.checkpoint_every, "Checkpoint cadence in steps (0: final only)");
  cmd->add_option("--eval-every", a.eval_every, "Evaluation cadence in steps (0: none)");
  cmd->add_option("--clip-norm", a.clip_norm, "Gradient norm clip")->capture_default_str();
  cmd->add_option("--merge-threshold", a.merge_threshold, "Genera with fewer instances become else")
      ->capture_default_str();
  cmd->add_flag("--no-augment", a.no_augment, "Disable rotation and crop");
  cmd->add_flag("--no-class-branch", a.no_class_branch, "Build the model without the class head");
  cmd->add_flag("--no-holdout", a.no_holdout, "Train and evaluate on every image");
  cmd->add_flag("--full-scale", a.full_scale, "Use the deep five-level configuration");
  cmd->add_flag("--scale-lr", a.scale_lr, "Scale lr by batch/32");
}

TrainConfig MakeTrainConfig(const TrainArgs& a) {
  TrainConfig c = TrainConfig::Desk(a.steps);
  if (!a.decay_steps.empty()) c.decay_steps = a.decay_steps;
  c.base_lr = a.lr;
  c.momentum = a.momentum;
  c.batch_size = a.batch;
  c.lambda = a.lambda;
  c.seed = a.seed;
  c.checkpoint_every = a.checkpoint_every;
  c.eval_every = a.eval_every;
  c.clip_norm = a.clip_norm;
  c.augment.enabled = !a.no_augment;
  c.scale_lr_with_batch = a.scale_lr;
  c.Validate();
  return c;
}

ModelConfig MakeModelConfig(const TrainArgs& a, int num_genera) {
  ModelConfig m = a.full_scale ? ModelConfig::FullScale(num_genera) : ModelConfig::Desk(num_genera);
  m.class_branch = !a.no_class_branch;
  m.Validate();
  return m;
}

PreparedData Prepare(const TrainArgs& a) {
  PrepareOptions po;
  po.split_seed = a.split_seed.value_or(a.seed);
  po.merge_threshold = a.merge_threshold;
  po.holdout = !a.no_holdout;
  return PrepareData(LoadDataset(ResolveData(a.data)), po);
}

int CmdGen(const GenArgs& a, std::ostream& out) {
  CorpusOptions options;
  options.id_prefix = a.id_prefix;
  const fs::path manifest = EmitCorpus(a.n_images, ImbalanceProfile::Parse(a.profile), a.out, a.seed, options);
  const Dataset ds = LoadDataset(manifest, {false});
  std::map<std::string, int64_t> counts;
  for (const auto& im : ds.images) {
    for (const auto& inst : im.instances) ++counts[inst.genus];
  }
  out << "images: " << ds.images.size() << "\n";
  out << "instances: " << ds.NumInstances() << "\n";
  for (const auto& g : ds.taxonomy.genera()) {
    out << "  " << g << " (" << ds.taxonomy.ClassOf(g) << "): " << counts[g] << "\n";
  }
  out << "manifest: " << manifest.string() << "\n";
  return 0;
}

int CmdTrain(const TrainArgs& a, std::ostream& out) {
  const TrainConfig tc = MakeTrainConfig(a);
  const PreparedData data = Prepare(a);
  const ModelConfig mc = MakeModelConfig(a, data.taxonomy().num_genera());
  fs::create_directories(a.out);
  nlohmann::json cfg = {{"train", ToJson(tc)}, {"model", ToJson(mc)}};
  WriteFile(fs::path(a.out) / "train_config.json", cfg.dump(2) + "\n");
  TrainOptions opts;
  opts.out_dir = a.out;
  opts.eval_on_train = a.no_holdout;
  const TrainResult r = Train(data, tc, mc, opts);
  const auto& last = r.log.steps.back();
  out << "genera after merge: " << data.taxonomy().num_genera() << " (train images " << data.train.size()
      << ", test images " << data.test.size() << ")\n";
  out << "steps: " << r.log.steps.size() << "  final total loss: " << FormatNumber(last.loss.total)
      << " (box " << FormatNumber(last.loss.box) << ", genus " << FormatNumber(last.loss.genus) << ", class "
      << FormatNumber(last.loss.cls) << ")\n";
  for (const auto& e : r.log.evals) {
    out << "eval@" << e.step << ": genus mAP " << FormatNumber(e.map_genus) << ", class mAP "
        << FormatNumber(e.map_class) << "\n";
  }
  out << "checkpoint: " << r.checkpoint.string() << "\n";
  out << "log: " << (fs::path(a.out) / "train_log.jsonl").string() << "\n";
  return 0;
}

std::vector<AnnotatedImage> SelectSplit(const PreparedData& d, const std::string& split) {
  if (split == "train") return d.train;
  if (split == "test") return d.test;
  std::map<std::string, const AnnotatedImage*> all;
  for (const auto& im : d.train) all[im.image_id] = &im;
  for (const auto& im : d.test) all[im.image_id] = &im;
  std::vector<AnnotatedImage> out;
  for (const auto& [id, im] : all) out.push_back(*im);
  return out;
}

int CmdEval(const EvalArgs& a, std::ostream& out) {
  if (a.checkpoint.empty() == a.detections.empty()) {
    Fail(ErrorKind::kUsage, "give exactly one of --checkpoint or --detections");
  }
  const fs::path out_dir = a.out;
  Dataset ds = LoadDataset(ResolveData(a.data));
  std::vector<AnnotatedImage> images;
  std::vector<std::vector<EvalDetection>> dets;
  Taxonomy taxonomy;
  if (!a.checkpoint.empty()) {
    const LoadedCheckpoint ck = LoadCheckpoint(a.checkpoint);
    const PreparedData d = PrepareForCheckpoint(std::move(ds), ck.meta);
    images = SelectSplit(d, a.split);
    taxonomy = d.taxonomy();
    PredictOptions po;
    po.score_floor = a.score_floor;
    for (const auto& im : images) dets.push_back(DetectImage(*ck.detector, im, taxonomy, d.stats, po));
  } else {
    PrepareOptions po;
    po.split_seed = a.seed;
    po.merge_threshold = a.merge_threshold;
    po.holdout = !a.no_holdout;
    const PreparedData d = PrepareData(std::move(ds), po);
    images = SelectSplit(d, a.split);
    taxonomy = d.taxonomy();
    std::map<std::string, size_t> index;
    for (size_t i = 0; i < images.size(); ++i) index[images[i].image_id] = i;
    dets.resize(images.size());
    for (auto& r : ReadDetections(a.detections)) {
      const auto it = index.find(r.image_id);
      if (it == index.end()) continue;  // image outside the evaluated split
      const auto rl = d.merge.relabel.find(r.detection.genus);
      if (rl == d.merge.relabel.end()) {
        Fail(ErrorKind::kLookup, "detection genus '" + r.detection.genus + "' is not in the taxonomy");
      }
      r.detection.genus = rl->second;
      dets[it->second].push_back(r.detection);
    }
  }
  if (images.empty()) Fail(ErrorKind::kConfiguration, "the " + a.split + " split has no images");
  std::vector<std::vector<Instance>> gts;
  std::vector<DetectionRecord> records;
  for (size_t i = 0; i < images.size(); ++i) {
    gts.push_back(images[i].instances);
    for (const auto& d : dets[i]) records.push_back({images[i].image_id, d});
  }
  const EvalReport report = Evaluate(gts, dets, taxonomy);
  ReportOptions ro;
  ro.cutoff = a.cutoff;
  fs::create_directories(out_dir);
  const std::string text = EmitReportText(report, ro);
  WriteFile(out_dir / "report.csv", EmitReportCsv(report, ro));
  WriteFile(out_dir / "report.txt", text);
  WriteDetections(out_dir / "detections.jsonl", records);
  if (a.render) {
    fs::create_directories(out_dir / "render");
    RenderOptions rend;
    rend.min_confidence = a.render_threshold;
    for (size_t i = 0; i < images.size(); ++i) {
      WritePng((out_dir / "render" / (images[i].image_id + ".png")).string(),
               RenderDetections(images[i].pixels, dets[i], rend));
    }
  }
  out << text;
  out << "report: " << (out_dir / "report.csv").string() << "\n";
  return 0;
}

int CmdSweep(SweepArgs a, std::ostream& out) {
  TrainConfig tc = MakeTrainConfig(a.train);
  if (tc.eval_every == 0) tc.eval_every = std::max<int64_t>(1, tc.total_steps / 5);
  const PreparedData data = Prepare(a.train);
  const ModelConfig mc = MakeModelConfig(a.train, data.taxonomy().num_genera());
  const SweepResult r = SweepLambda(data, tc, mc, a.lambdas, a.train.out, a.jobs);
  out << SweepCsv(r);
  const auto best = r.BestLambda();
  out << "best lambda: " << (best ? FormatNumber(*best) : std::string("NA")) << "\n";
  return r.ok() ? 0 : kPartialSweepExit;
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-task algae detector: corpus generation, training, evaluation, lambda sweeps"};
  app.name(args.empty() ? "mtdet" : fs::path(args[0]).filename().string());
  app.set_config("--config", "", "TOML or INI file supplying any flag; command-line flags win");
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Emit a synthetic annotated corpus");
  g->add_option("--n-images", gen.n_images, "Number of images")->required();
  g->add_option("--seed", gen.seed, "Corpus seed")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--profile", gen.profile, "desk, desk-norare, or NAME:weight,...,NAME#count")
      ->capture_default_str();
  g->add_option("--id-prefix", gen.id_prefix, "Image id prefix")->capture_default_str();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a detector");
  AddTrainFlags(t, train, true);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a checkpoint or a detections file");
  e->add_option("--data", ev.data, "Dataset directory or annotations.jsonl");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint to run");
  e->add_option("--detections", ev.detections, "Line-delimited detections to score instead");
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_option("--split", ev.split, "Images to score")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();
  e->add_flag("--render", ev.render, "Write annotated PNGs under <out>/render");
  e->add_option("--render-threshold", ev.render_threshold, "Minimum confidence drawn")->capture_default_str();
  e->add_option("--score-floor", ev.score_floor, "Minimum detection confidence")->capture_default_str();
  e->add_option("--cutoff", ev.cutoff, "Named genus rows before the aggregate")->capture_default_str();
  e->add_option("--seed", ev.seed, "Split seed with --detections")->capture_default_str();
  e->add_option("--merge-threshold", ev.merge_threshold, "Rare-genus threshold with --detections")
      ->capture_default_str();
  e->add_flag("--no-holdout", ev.no_holdout, "Treat every image as both train and test with --detections");

  SweepArgs sweep;
  auto* s = app.add_subcommand("sweep", "Train and evaluate once per lambda");
  AddTrainFlags(s, sweep.train, false);
  s->add_option("--lambdas", sweep.lambdas, "Comma-separated lambda values")->delimiter(',')->capture_default_str();
  s->add_option("--jobs", sweep.jobs, "Concurrent member runs")->capture_default_str()->check(CLI::PositiveNumber);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& pe) {
    err << "usage error: " << pe.what() << "\n";
    err << "run with --help for usage\n";
    return ExitCodeFor(ErrorKind::kUsage);
  }

  try {
    if (*g) return CmdGen(gen, out);
    if (*t) return CmdTrain(train, out);
    if (*e) return CmdEval(ev, out);
    if (*s) return CmdSweep(sweep, out);
  } catch (const Error& ex) {
    err << "error (" << ErrorKindName(ex.kind()) << "): " << ex.what() << "\n";
    return ExitCodeFor(ex.kind());
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "error (io): " << ex.what() << "\n";
    return ExitCodeFor(ErrorKind::kIo);
  }
  return ExitCodeFor(ErrorKind::kUsage);
}

}  // namespace mtdet::cli
