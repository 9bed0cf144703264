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
#ifndef MTDET_TRAINING_HPP_
#define MTDET_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtdet/checkpoint.hpp"
#include "mtdet/data.hpp"
#include "mtdet/eval.hpp"
#include "mtdet/model.hpp"

namespace mtdet {

struct TrainConfig {
  double base_lr = 0.02;
  double momentum = 0.9;
  int batch_size = 2;
  std::vector<int64_t> decay_steps = {6000, 7000};
  double decay_factor = 0.1;
  int64_t total_steps = 8000;
  double lambda = 0.2;
  uint64_t seed = 0;
  int64_t checkpoint_every = 0;  // 0: final checkpoint only
  int64_t eval_every = 0;        // 0: no periodic evaluation
  double clip_norm = 10.0;
  AugmentConfig augment;
  // Opt-in linear scaling of base_lr by batch_size / reference_batch.
  bool scale_lr_with_batch = false;
  int reference_batch = 32;

  void Validate() const;
  double EffectiveBaseLr() const;
  // Desk horizon: decays at 75% and 87.5% of `total_steps`.
  static TrainConfig Desk(int64_t total_steps);
};

nlohmann::json ToJson(const TrainConfig& config);

// Piecewise constant: base rate times decay_factor per decay step reached.
double LrAt(int64_t step, const TrainConfig& config);

struct StepRecord {
  int64_t step = 0;  // zero-based update index
  LossBreakdown loss;
  double lr = 0;
  double grad_norm = 0;  // before clipping
  double wall_seconds = 0;
};

struct EvalRecord {
  int64_t step = 0;  // updates completed
  double map_genus = 0;
  double map_class = 0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
};

nlohmann::json ToJson(const StepRecord& r);
nlohmann::json ToJson(const EvalRecord& r);
// One JSON object per line, tagged by "event".
TrainLog ReadTrainLog(const std::filesystem::path& path);

struct PrepareOptions {
  uint64_t split_seed = 0;
  int64_t merge_threshold = 10;
  bool holdout = true;  // false trains and tests on every image
};

// Split, rare-genus merge from training counts applied to both sides, and
// normalization statistics from the training side.
struct PreparedData {
  Taxonomy source_taxonomy;
  MergeResult merge;
  DatasetSplit split;
  std::vector<AnnotatedImage> train;
  std::vector<AnnotatedImage> test;
  NormalizationStats stats;
  PrepareOptions options;

  const Taxonomy& taxonomy() const { return merge.taxonomy; }
};

PreparedData PrepareData(Dataset dataset, const PrepareOptions& options = {});

// Rebuilds the split and labels a checkpoint was trained with. Validation
// error when the dataset taxonomy differs from the training one.
PreparedData PrepareForCheckpoint(Dataset dataset, const CheckpointMeta& meta);

// Streaming per-channel statistics at the network input size.
NormalizationStats ComputeTrainingStats(std::span<const AnnotatedImage> images, int size = kInputSize);

struct DetectorEval {
  EvalReport report;
  std::vector<DetectionRecord> detections;  // original image coordinates
};

// Detections for one image, mapped back to its own pixel frame.
std::vector<EvalDetection> DetectImage(const Detector& detector, const AnnotatedImage& image,
                                       const Taxonomy& taxonomy, const NormalizationStats& stats,
                                       const PredictOptions& options = {});

DetectorEval EvaluateDetector(const Detector& detector, std::span<const AnnotatedImage> images,
                              const Taxonomy& taxonomy, const NormalizationStats& stats,
                              const PredictOptions& options = {});

// One optimizer at a time over a prepared dataset; deterministic in the seed.
class Trainer {
 public:
  Trainer(const PreparedData& data, const TrainConfig& train, const ModelConfig& model);

  // Forward, backward, clip and SGD update for one batch. Numeric errors are
  // raised before any parameter changes.
  StepRecord Step();

  int64_t steps_done() const { return steps_done_; }
  Detector& detector() { return *detector_; }
  const Detector& detector() const { return *detector_; }
  const TrainConfig& config() const { return train_; }
  CheckpointMeta Meta() const;

 private:
  const PreparedData& data_;
  TrainConfig train_;
  std::unique_ptr<Detector> detector_;
  int64_t steps_done_ = 0;
  int64_t samples_drawn_ = 0;
  std::vector<int> order_;
  int64_t order_epoch_ = -1;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: nothing is written
  bool eval_on_train = false;     // periodic evaluation split
  PredictOptions predict;
  std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
  TrainLog log;
  std::filesystem::path checkpoint;  // empty when out_dir is empty
  std::unique_ptr<Detector> detector;
  CheckpointMeta meta;
};

// Writes <out>/train_log.jsonl, <out>/checkpoints/step_NNNNNN.ckpt at the
// cadence and <out>/model.ckpt at the end. A non-finite loss stores
// <out>/last_good.ckpt and rethrows.
TrainResult Train(const PreparedData& data, const TrainConfig& train, const ModelConfig& model,
                  const TrainOptions& options = {});

struct SweepRow {
  double lambda = 0;
  std::optional<double> map_genus;
  std::optional<double> map_class;
  std::string error;  // non-empty when the member failed
};

struct SweepResult {
  std::vector<SweepRow> rows;                  // ascending lambda
  std::vector<std::vector<EvalRecord>> series;  // per row
  bool ok() const;
  // Highest genus mAP among successful rows, ties to the smaller lambda.
  std::optional<double> BestLambda() const;
};

// Member runs share the template's seed; `jobs` bounds concurrent members.
// Writes <out>/sweep.csv, <out>/series_lambda_<v>.csv, <out>/sweep_summary.txt
// and each member's run under <out>/lambda_<v>/.
SweepResult SweepLambda(const PreparedData& data, const TrainConfig& train_template,
                        const ModelConfig& model, std::vector<double> lambdas,
                        const std::filesystem::path& out_dir, int jobs = 1);

std::string SweepCsv(const SweepResult& result);
std::string LambdaTag(double lambda);

}  // namespace mtdet

#endif  // MTDET_TRAINING_HPP_
