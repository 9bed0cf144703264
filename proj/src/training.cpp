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
#include "mtdet/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "mtdet/errors.hpp"
#include "mtdet/kernels.hpp"
#include "mtdet/report.hpp"
#include "mtdet/rng.hpp"

namespace mtdet {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr uint64_t kInitSalt = 0x1417;
constexpr uint64_t kEpochSalt = 0xe90c;
constexpr uint64_t kAugmentSalt = 0xa0a0a0a0a0a0a0a0ull;
constexpr uint64_t kSamplingSalt = 0x5e5e5e5e5e5e5e5eull;

json LossJson(const LossBreakdown& l) {
  return {{"rpn_objectness", l.rpn_objectness}, {"rpn_box", l.rpn_box}, {"roi_box", l.roi_box},
          {"box", l.box},   {"genus", l.genus}, {"cls", l.cls},
          {"lambda", l.lambda}, {"total", l.total}};
}

LossBreakdown LossFromJson(const json& j) {
  LossBreakdown l;
  l.rpn_objectness = j.at("rpn_objectness").get<double>();
  l.rpn_box = j.at("rpn_box").get<double>();
  l.roi_box = j.at("roi_box").get<double>();
  l.box = j.at("box").get<double>();
  l.genus = j.at("genus").get<double>();
  l.cls = j.at("cls").get<double>();
  l.lambda = j.at("lambda").get<double>();
  l.total = j.at("total").get<double>();
  return l;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) Fail(ErrorKind::kIo, "short write to " + path.string());
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration and schedule

void TrainConfig::Validate() const {
  auto bad = [](const std::string& m) { Fail(ErrorKind::kConfiguration, m); };
  if (!(base_lr > 0) || !std::isfinite(base_lr)) bad("learning rate must be positive");
  if (!(momentum >= 0 && momentum < 1)) bad("momentum must lie in [0, 1)");
  if (batch_size < 1) bad("batch size must be at least 1");
  if (total_steps < 1) bad("total steps must be at least 1");
  for (size_t i = 0; i < decay_steps.size(); ++i) {
    if (decay_steps[i] < 1) bad("decay steps must be positive");
    if (i > 0 && decay_steps[i] <= decay_steps[i - 1]) bad("decay steps must be strictly increasing");
  }
  if (!(decay_factor > 0 && decay_factor <= 1)) bad("decay factor must lie in (0, 1]");
  if (!(lambda >= 0) || !std::isfinite(lambda)) bad("lambda must be a finite non-negative number");
  if (!(clip_norm > 0)) bad("clip norm must be positive");
  if (checkpoint_every < 0 || eval_every < 0) bad("cadences must be non-negative");
  if (scale_lr_with_batch && reference_batch < 1) bad("reference batch must be at least 1");
}

double TrainConfig::EffectiveBaseLr() const {
  return scale_lr_with_batch ? base_lr * batch_size / reference_batch : base_lr;
}

TrainConfig TrainConfig::Desk(int64_t total_steps) {
  TrainConfig c;
  c.total_steps = total_steps;
  const int64_t first = std::max<int64_t>(1, total_steps * 3 / 4);
  const int64_t second = std::max<int64_t>(first + 1, total_steps * 7 / 8);
  c.decay_steps = {first, second};
  return c;
}

json ToJson(const TrainConfig& c) {
  return {{"base_lr", c.base_lr},
          {"momentum", c.momentum},
          {"batch_size", c.batch_size},
          {"decay_steps", c.decay_steps},
          {"decay_factor", c.decay_factor},
          {"total_steps", c.total_steps},
          {"lambda", c.lambda},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"eval_every", c.eval_every},
          {"clip_norm", c.clip_norm},
          {"augment",
           {{"enabled", c.augment.enabled},
            {"rotate_probability", c.augment.rotate_probability},
            {"crop", c.augment.crop},
            {"crop_min_fraction", c.augment.crop_min_fraction}}},
          {"scale_lr_with_batch", c.scale_lr_with_batch},
          {"reference_batch", c.reference_batch}};
}

double LrAt(int64_t step, const TrainConfig& config) {
  if (step < 0) Fail(ErrorKind::kConfiguration, "learning rate queried at negative step");
  double lr = config.EffectiveBaseLr();
  for (int64_t d : config.decay_steps) {
    if (step >= d) lr *= config.decay_factor;
  }
  return lr;
}

json ToJson(const StepRecord& r) {
  return {{"event", "step"},         {"step", r.step},
          {"lr", r.lr},              {"grad_norm", r.grad_norm},
          {"loss", LossJson(r.loss)}, {"wall_seconds", r.wall_seconds}};
}

json ToJson(const EvalRecord& r) {
  return {{"event", "eval"}, {"step", r.step}, {"map_genus", r.map_genus}, {"map_class", r.map_class}};
}

TrainLog ReadTrainLog(const fs::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIngestion, "cannot open train log " + path.string());
  TrainLog log;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string ev = j.at("event").get<std::string>();
      if (ev == "step") {
        StepRecord r;
        r.step = j.at("step").get<int64_t>();
        r.lr = j.at("lr").get<double>();
        r.grad_norm = j.at("grad_norm").get<double>();
        r.loss = LossFromJson(j.at("loss"));
        r.wall_seconds = j.at("wall_seconds").get<double>();
        log.steps.push_back(r);
      } else if (ev == "eval") {
        log.evals.push_back({j.at("step").get<int64_t>(), j.at("map_genus").get<double>(),
                             j.at("map_class").get<double>()});
      } else {
        Fail(ErrorKind::kIngestion, path.string() + ":" + std::to_string(n) + ": unknown event " + ev);
      }
    } catch (const json::exception& e) {
      Fail(ErrorKind::kIngestion, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return log;
}

// ---------------------------------------------------------------------------
// Data preparation

NormalizationStats ComputeTrainingStats(std::span<const AnnotatedImage> images, int size) {
  std::array<double, 3> sum{0, 0, 0}, sq{0, 0, 0};
  double n = 0;
  for (const auto& im : images) {
    const Sample s = ResizeSample(im, size);
    for (int c = 0; c < 3; ++c) {
      const float* p = s.image.channel(c);
      double a = 0, b = 0;
      for (size_t i = 0; i < s.image.plane(); ++i) {
        a += p[i];
        b += static_cast<double>(p[i]) * p[i];
      }
      sum[c] += a;
      sq[c] += b;
    }
    n += static_cast<double>(s.image.plane());
  }
  NormalizationStats st;
  if (n == 0) return st;
  for (int c = 0; c < 3; ++c) {
    st.mean[c] = sum[c] / n;
    const double var = std::max(0.0, sq[c] / n - st.mean[c] * st.mean[c]);
    st.stddev[c] = var > 0 ? std::sqrt(var) : 1.0;
  }
  return st;
}

namespace {

void SplitImages(const Dataset& dataset, const PrepareOptions& options, PreparedData& d) {
  if (dataset.images.empty()) Fail(ErrorKind::kConfiguration, "dataset has no images");
  d.options = options;
  d.source_taxonomy = dataset.taxonomy;
  std::vector<std::string> ids;
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < dataset.images.size(); ++i) {
    ids.push_back(dataset.images[i].image_id);
    index[dataset.images[i].image_id] = i;
  }
  if (options.holdout) {
    d.split = SplitDataset(ids, options.split_seed);
  } else {
    std::sort(ids.begin(), ids.end());
    d.split.train = ids;
    d.split.test = ids;
    d.split.seed = options.split_seed;
  }
  if (d.split.train.empty()) Fail(ErrorKind::kConfiguration, "training split is empty");
  for (const auto& id : d.split.train) d.train.push_back(dataset.images[index.at(id)]);
  for (const auto& id : d.split.test) d.test.push_back(dataset.images[index.at(id)]);
}

}  // namespace

PreparedData PrepareData(Dataset dataset, const PrepareOptions& options) {
  PreparedData d;
  SplitImages(dataset, options, d);
  d.merge = MergeRareGenera(CountGenera(d.train, d.source_taxonomy), d.source_taxonomy,
                            options.merge_threshold);
  RelabelGenera(d.train, d.merge.relabel);
  RelabelGenera(d.test, d.merge.relabel);
  d.stats = ComputeTrainingStats(d.train);
  return d;
}

PreparedData PrepareForCheckpoint(Dataset dataset, const CheckpointMeta& meta) {
  VerifyTaxonomy(meta, dataset.taxonomy);
  PrepareOptions options;
  options.split_seed = meta.split_seed;
  options.holdout = meta.holdout;
  PreparedData d;
  SplitImages(dataset, options, d);
  d.merge.taxonomy = meta.taxonomy;
  d.merge.relabel = meta.relabel;
  RelabelGenera(d.train, d.merge.relabel);
  RelabelGenera(d.test, d.merge.relabel);
  d.merge.merged_census = CountGenera(d.train, d.merge.taxonomy);
  d.stats = meta.stats;
  return d;
}

// ---------------------------------------------------------------------------
// Inference helpers

std::vector<EvalDetection> DetectImage(const Detector& detector, const AnnotatedImage& image,
                                       const Taxonomy& taxonomy, const NormalizationStats& stats,
                                       const PredictOptions& options) {
  const int size = detector.config().input_size;
  const Sample s = ResizeAndStandardize(image, stats, size);
  const double sx = static_cast<double>(image.width) / size;
  const double sy = static_cast<double>(image.height) / size;
  std::vector<EvalDetection> out;
  for (const auto& d : detector.Predict(Detector::ImageTensor(s.image), options)) {
    BoundingBox b{d.box.x1 * sx, d.box.y1 * sy, d.box.x2 * sx, d.box.y2 * sy};
    out.push_back({b, taxonomy.genera()[d.genus], d.confidence});
  }
  return out;
}

DetectorEval EvaluateDetector(const Detector& detector, std::span<const AnnotatedImage> images,
                              const Taxonomy& taxonomy, const NormalizationStats& stats,
                              const PredictOptions& options) {
  std::vector<std::vector<Instance>> gts;
  std::vector<std::vector<EvalDetection>> dets;
  DetectorEval out;
  for (const auto& im : images) {
    gts.push_back(im.instances);
    dets.push_back(DetectImage(detector, im, taxonomy, stats, options));
    for (const auto& d : dets.back()) out.detections.push_back({im.image_id, d});
  }
  out.report = Evaluate(gts, dets, taxonomy);
  return out;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const PreparedData& data, const TrainConfig& train, const ModelConfig& model)
    : data_(data), train_(train) {
  train_.Validate();
  if (data_.train.empty()) Fail(ErrorKind::kConfiguration, "cannot train on an empty dataset");
  if (model.num_genera != data_.taxonomy().num_genera()) {
    Fail(ErrorKind::kConfiguration, "model has " + std::to_string(model.num_genera) +
                                        " genera but the taxonomy has " +
                                        std::to_string(data_.taxonomy().num_genera()));
  }
  detector_ = std::make_unique<Detector>(model, MixSeed(train_.seed, kInitSalt));
}

StepRecord Trainer::Step() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& kt = kernels::Active();
  ParamStore& store = detector_->params();
  store.ZeroGrad();
  const int b = train_.batch_size;
  const size_t n = data_.train.size();
  LossBreakdown mean;
  for (int i = 0; i < b; ++i) {
    const int64_t k = samples_drawn_++;
    const int64_t epoch = k / static_cast<int64_t>(n);
    if (epoch != order_epoch_) {
      order_.resize(n);
      std::iota(order_.begin(), order_.end(), 0);
      Rng(MixSeed(train_.seed, kEpochSalt + static_cast<uint64_t>(epoch))).Shuffle(order_);
      order_epoch_ = epoch;
    }
    const AnnotatedImage& image = data_.train[order_[k % n]];
    const Sample s = MakeTrainingSample(image, data_.stats, train_.augment,
                                        MixSeed(train_.seed ^ kAugmentSalt, static_cast<uint64_t>(k)));
    const LossBreakdown l =
        detector_->TrainStep(s, data_.taxonomy(), {train_.lambda},
                             MixSeed(train_.seed ^ kSamplingSalt, static_cast<uint64_t>(k)), 1.f / b);
    mean.rpn_objectness += l.rpn_objectness / b;
    mean.rpn_box += l.rpn_box / b;
    mean.roi_box += l.roi_box / b;
    mean.genus += l.genus / b;
    mean.cls += l.cls / b;
  }
  mean.box = mean.rpn_objectness + mean.rpn_box + mean.roi_box;
  mean.lambda = train_.lambda;
  mean.total = mean.box + mean.genus + mean.lambda * mean.cls;

  double sq = 0;
  for (const auto& p : store.params()) sq += kt.sum_squares(p->grad.size(), p->grad.ptr());
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) {
    Fail(ErrorKind::kNumeric, "non-finite gradient norm at step " + std::to_string(steps_done_));
  }
  if (norm > train_.clip_norm) {
    const float f = static_cast<float>(train_.clip_norm / norm);
    for (const auto& p : store.params()) kt.scale(p->grad.size(), f, p->grad.ptr());
  }
  const double lr = LrAt(steps_done_, train_);
  for (const auto& p : store.params()) {
    kt.sgd_momentum(p->value.size(), static_cast<float>(lr), static_cast<float>(train_.momentum),
                    p->grad.ptr(), p->velocity.ptr(), p->value.ptr());
  }
  StepRecord r;
  r.step = steps_done_++;
  r.loss = mean;
  r.lr = lr;
  r.grad_norm = norm;
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

CheckpointMeta Trainer::Meta() const {
  CheckpointMeta m;
  m.model = detector_->config();
  m.taxonomy = data_.taxonomy();
  m.source_fingerprint = data_.source_taxonomy.Fingerprint();
  m.relabel = data_.merge.relabel;
  m.stats = data_.stats;
  m.step = steps_done_;
  m.split_seed = data_.options.split_seed;
  m.holdout = data_.options.holdout;
  m.lambda = train_.lambda;
  return m;
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult Train(const PreparedData& data, const TrainConfig& train, const ModelConfig& model,
                  const TrainOptions& options) {
  Trainer trainer(data, train, model);
  const bool write = !options.out_dir.empty();
  std::ofstream log;
  if (write) {
    fs::create_directories(options.out_dir);
    log.open(options.out_dir / "train_log.jsonl", std::ios::trunc);
    if (!log) Fail(ErrorKind::kIo, "cannot write " + (options.out_dir / "train_log.jsonl").string());
  }
  TrainResult result;
  const auto& eval_images = options.eval_on_train ? data.train : data.test;
  const int64_t total = trainer.config().total_steps;
  while (trainer.steps_done() < total) {
    StepRecord rec;
    try {
      rec = trainer.Step();
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumeric) throw;
      std::string where;
      if (write) {
        const fs::path p = options.out_dir / "last_good.ckpt";
        SaveCheckpoint(p, trainer.detector(), trainer.Meta());
        where = "; parameters before the failing step saved to " + p.string();
      }
      Fail(ErrorKind::kNumeric, std::string(e.what()) + where);
    }
    result.log.steps.push_back(rec);
    if (write) log << ToJson(rec).dump() << '\n' << std::flush;
    if (options.on_step) options.on_step(rec);
    const int64_t done = trainer.steps_done();
    const int64_t ce = trainer.config().checkpoint_every;
    if (write && ce > 0 && done % ce == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "step_%06lld.ckpt", static_cast<long long>(done));
      SaveCheckpoint(options.out_dir / "checkpoints" / name, trainer.detector(), trainer.Meta());
    }
    const int64_t ee = trainer.config().eval_every;
    if (ee > 0 && (done % ee == 0 || done == total)) {
      const DetectorEval ev =
          EvaluateDetector(trainer.detector(), eval_images, data.taxonomy(), data.stats, options.predict);
      const EvalRecord er{done, ev.report.map_genus, ev.report.map_class};
      result.log.evals.push_back(er);
      if (write) log << ToJson(er).dump() << '\n' << std::flush;
    }
  }
  result.meta = trainer.Meta();
  if (write) {
    result.checkpoint = options.out_dir / "model.ckpt";
    SaveCheckpoint(result.checkpoint, trainer.detector(), result.meta);
  }
  // Hand the trained model to the caller.
  auto owned = std::make_unique<Detector>(model, 0);
  const auto& src = trainer.detector().params().params();
  const auto& dst = owned->params().params();
  for (size_t i = 0; i < src.size(); ++i) {
    dst[i]->value.data = src[i]->value.data;
    dst[i]->velocity.data = src[i]->velocity.data;
  }
  result.detector = std::move(owned);
  return result;
}

// ---------------------------------------------------------------------------
// Lambda sweep

bool SweepResult::ok() const {
  return std::all_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.error.empty(); });
}

std::optional<double> SweepResult::BestLambda() const {
  std::optional<double> best;
  double best_map = -1;
  for (const auto& r : rows) {
    if (!r.error.empty() || !r.map_genus) continue;
    if (*r.map_genus > best_map) {
      best_map = *r.map_genus;
      best = r.lambda;
    }
  }
  return best;
}

std::string LambdaTag(double lambda) { return FormatNumber(lambda); }

std::string SweepCsv(const SweepResult& result) {
  std::ostringstream os;
  os << "lambda,final_map_genus,final_map_class\n";
  for (const auto& r : result.rows) {
    os << FormatNumber(r.lambda) << ',' << FormatNumber(r.map_genus) << ',' << FormatNumber(r.map_class)
       << '\n';
  }
  for (const auto& r : result.rows) {
    if (r.error.empty()) continue;
    std::string msg = r.error;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    os << "# lambda=" << FormatNumber(r.lambda) << " failed: " << msg << '\n';
  }
  return os.str();
}

SweepResult SweepLambda(const PreparedData& data, const TrainConfig& train_template,
                        const ModelConfig& model, std::vector<double> lambdas, const fs::path& out_dir,
                        int jobs) {
  if (lambdas.empty()) Fail(ErrorKind::kUsage, "sweep needs at least one lambda");
  for (double l : lambdas) {
    if (!(l >= 0) || !std::isfinite(l)) Fail(ErrorKind::kUsage, "sweep lambdas must be finite and non-negative");
  }
  std::sort(lambdas.begin(), lambdas.end());
  if (std::adjacent_find(lambdas.begin(), lambdas.end()) != lambdas.end()) {
    Fail(ErrorKind::kUsage, "sweep lambdas must be distinct");
  }
  train_template.Validate();
  fs::create_directories(out_dir);

  SweepResult result;
  result.rows.resize(lambdas.size());
  result.series.resize(lambdas.size());
  auto run_member = [&](size_t i) {
    SweepRow& row = result.rows[i];
    row.lambda = lambdas[i];
    TrainConfig tc = train_template;
    tc.lambda = lambdas[i];
    if (tc.eval_every <= 0) tc.eval_every = tc.total_steps;
    TrainOptions opts;
    opts.out_dir = out_dir / ("lambda_" + LambdaTag(lambdas[i]));
    try {
      TrainResult tr = Train(data, tc, model, opts);
      result.series[i] = tr.log.evals;
      if (!tr.log.evals.empty()) {
        row.map_genus = tr.log.evals.back().map_genus;
        row.map_class = tr.log.evals.back().map_class;
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };
  const size_t workers = std::clamp<size_t>(static_cast<size_t>(std::max(jobs, 1)), 1, lambdas.size());
  if (workers == 1) {
    for (size_t i = 0; i < lambdas.size(); ++i) run_member(i);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (size_t i = next++; i < lambdas.size(); i = next++) run_member(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  WriteText(out_dir / "sweep.csv", SweepCsv(result));
  for (size_t i = 0; i < lambdas.size(); ++i) {
    std::ostringstream os;
    os << "step,map_genus,map_class\n";
    for (const auto& e : result.series[i]) {
      os << e.step << ',' << FormatNumber(e.map_genus) << ',' << FormatNumber(e.map_class) << '\n';
    }
    WriteText(out_dir / ("series_lambda_" + LambdaTag(lambdas[i]) + ".csv"), os.str());
  }
  std::ostringstream summary;
  const auto best = result.BestLambda();
  summary << "members: " << lambdas.size() << "\n";
  summary << "failed: "
          << std::count_if(result.rows.begin(), result.rows.end(), [](const SweepRow& r) { return !r.error.empty(); })
          << "\n";
  summary << "best_lambda: " << (best ? FormatNumber(*best) : std::string("NA")) << "\n";
  const auto it = std::find_if(result.rows.begin(), result.rows.end(),
                               [](const SweepRow& r) { return r.lambda == 0.2; });
  if (it != result.rows.end() && best) {
    summary << "lambda_0.2_is_best: " << (*best == 0.2 ? "yes" : "no") << "\n";
  }
  WriteText(out_dir / "sweep_summary.txt", summary.str());
  return result;
}

}  // namespace mtdet
