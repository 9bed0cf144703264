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
#ifndef MTDET_MODEL_HPP_
#define MTDET_MODEL_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtdet/data.hpp"
#include "mtdet/geometry.hpp"
#include "mtdet/layers.hpp"
#include "mtdet/loss.hpp"
#include "mtdet/taxonomy.hpp"
#include "mtdet/tensor.hpp"

namespace mtdet {

struct BackboneConfig {
  int stem_channels = 16;
  int stem_kernel = 4;  // stride equals kernel
  std::vector<int> stage_channels = {32, 64, 96};
  // Extra stride-1 3x3 convolutions after each stage's stride-2 one.
  std::vector<int> blocks_per_stage = {1, 1, 1};
  int fpn_channels = 64;

  int num_levels() const { return static_cast<int>(stage_channels.size()); }
  int StrideOfLevel(int level) const { return stem_kernel << (level + 1); }
};

struct ProposalConfig {
  int pre_nms_topk_train = 1000;  // per level
  int post_nms_topk_train = 300;
  int pre_nms_topk_test = 500;
  int post_nms_topk_test = 150;
  double nms_threshold = 0.7;
  int batch_per_image = 256;
  double positive_fraction = 0.5;
  double foreground_iou = 0.7;
  double background_iou = 0.3;
  double smooth_l1_beta = 1.0 / 9.0;
};

struct RegionConfig {
  int batch_per_image = 128;
  double positive_fraction = 0.25;
  double foreground_iou = 0.5;
  int pool_size = 7;
  int sampling_ratio = 2;
  DeltaWeights box_weights{10, 10, 5, 5};
  double smooth_l1_beta = 1.0;
};

struct ModelConfig {
  int num_genera = 2;
  int num_classes = kNumBiologicalClasses;
  // Width m of the shared per-region feature feeding the genus and class heads.
  int roi_feature_dim = 256;
  int input_size = kInputSize;
  AnchorGrid anchors;
  BackboneConfig backbone;
  ProposalConfig proposals;
  RegionConfig regions;
  // False builds the baseline detector with no biological-class branch.
  bool class_branch = true;

  void Validate() const;
  // Three-level pyramid sized for CPU runs.
  static ModelConfig Desk(int num_genera);
  // Five levels with anchor sizes 32..512 and a deeper, wider backbone.
  static ModelConfig FullScale(int num_genera);
};

nlohmann::json ToJson(const ModelConfig& config);
ModelConfig ModelConfigFromJson(const nlohmann::json& j);

struct LossWeights {
  double lambda = 0.2;

  void Validate() const;
};

struct LossBreakdown {
  double rpn_objectness = 0;
  double rpn_box = 0;
  double roi_box = 0;
  double box = 0;  // rpn_objectness + rpn_box + roi_box
  double genus = 0;
  double cls = 0;
  double lambda = 0;
  double total = 0;  // box + genus + lambda * cls
};

// Loss inputs for one image: the sampled anchors of the proposal stage and the
// sampled regions of the region stage.
template <typename T>
struct StageOutputs {
  std::vector<T> objectness;            // N
  std::vector<int> objectness_label;    // N; 1 foreground, 0 background
  std::vector<T> anchor_deltas;         // N x 4
  std::vector<T> anchor_delta_targets;  // N x 4, read for foreground only

  int num_regions = 0;
  int genus_columns = 0;  // num_genera + 1 (last column is background)
  int class_columns = 0;  // num_classes + 1, or 0 without the class branch
  std::vector<T> genus_logits;  // R x genus_columns
  std::vector<T> class_logits;  // R x class_columns
  std::vector<T> box_deltas;    // R x 4
  std::vector<int> genus_target;  // background == genus_columns - 1
  std::vector<int> class_target;  // background == class_columns - 1
  std::vector<T> box_targets;     // R x 4, read for foreground only
};

template <typename T>
struct StageGradients {
  std::vector<T> objectness;
  std::vector<T> anchor_deltas;
  std::vector<T> genus_logits;
  std::vector<T> class_logits;
  std::vector<T> box_deltas;
};

struct LossOptions {
  double rpn_beta = 1.0 / 9.0;
  double roi_beta = 1.0;
};

// Genus and class losses are mean cross-entropies over the same sampled
// regions; box terms are normalized by the number of sampled anchors or
// regions. Throws a numeric error on a non-finite result.
template <typename T>
LossBreakdown ComputeLoss(const StageOutputs<T>& out, const LossWeights& weights,
                          const LossOptions& options = {}, StageGradients<T>* grads = nullptr);

struct RegionTarget {
  int matched_gt = -1;  // -1 for background
  int genus = -1;       // genus index, or num_genera for background
  int cls = -1;         // class index, or num_classes for background
  double iou = 0;
};

// Positive iff IoU >= fg_iou with some ground truth; matched to the max-IoU
// ground truth, ties to the lowest index. Class targets come from the genus
// via the taxonomy.
std::vector<RegionTarget> AssignTargets(std::span<const BoundingBox> proposals,
                                        std::span<const Instance> ground_truth,
                                        const Taxonomy& taxonomy, double fg_iou = 0.5);

struct Detection {
  BoundingBox box;
  int genus = 0;
  std::vector<double> genus_scores;  // over foreground genera, sums to 1
  std::vector<double> class_scores;  // over the six classes, sums to 1
  double confidence = 0;
};

struct PredictOptions {
  double score_floor = 0.05;
  double nms_threshold = 0.5;
  int max_detections = 100;
};

// Per-image network outputs for every retained proposal.
struct RawOutputs {
  std::vector<BoundingBox> proposals;
  std::vector<double> proposal_scores;
  Tensor box_deltas;    // {R, 4}
  Tensor genus_logits;  // {R, num_genera + 1}
  Tensor class_logits;  // {R, num_classes + 1}; {R, 0} without the branch
};

class Detector {
 public:
  Detector(const ModelConfig& config, uint64_t init_seed);
  Detector(const Detector&) = delete;
  Detector& operator=(const Detector&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  // Parameters of the biological-class branch (empty without it).
  bool IsClassBranchParam(const Param& p) const;

  // Inference-mode outputs; image is {3, S, S} standardized.
  RawOutputs Forward(const Tensor& image) const;
  std::vector<RawOutputs> Forward(std::span<const Tensor> batch) const;

  std::vector<Detection> Predict(const Tensor& image, const PredictOptions& options = {}) const;

  // Forward, loss and backward on one sample; gradients of grad_scale * total
  // are accumulated into the parameters. Instances must use genera of
  // `taxonomy`.
  LossBreakdown TrainStep(const Sample& sample, const Taxonomy& taxonomy,
                          const LossWeights& weights, uint64_t sampling_seed, float grad_scale);

  static Tensor ImageTensor(const PlanarImage& image);

 private:
  struct Activations;

  void RunBackbone(const Tensor& image, Activations& act) const;
  void RunProposals(Activations& act, bool training) const;

  ModelConfig config_;
  ParamStore store_;
  Conv2d stem_;
  std::vector<std::vector<Conv2d>> stages_;
  std::vector<Conv2d> laterals_;
  Conv2d rpn_conv_, rpn_objectness_, rpn_deltas_;
  Linear fc1_, fc2_;
  Linear genus_head_, box_head_, class_head_;
  std::vector<FeatureDims> level_dims_;
  std::vector<BoundingBox> anchors_;
  std::vector<size_t> level_anchor_offset_;
};

}  // namespace mtdet

#endif  // MTDET_MODEL_HPP_
