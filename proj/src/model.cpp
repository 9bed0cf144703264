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
#include "mtdet/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mtdet/errors.hpp"
#include "mtdet/kernels.hpp"
#include "mtdet/rng.hpp"

namespace mtdet {
using nlohmann::json;

namespace {

// Bound on decoded log-scale deltas.
const double kMaxLogScale = std::log(1000.0 / 16.0);

template <typename T>
bool AllFinite(const std::vector<T>& v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void ModelConfig::Validate() const {
  auto bad = [](const std::string& what) { Fail(ErrorKind::kConfiguration, what); };
  if (num_classes != kNumBiologicalClasses) bad("num_classes must be 6");
  if (num_genera < 2) bad("num_genera must be at least 2");
  if (roi_feature_dim <= 0) bad("roi_feature_dim must be positive");
  anchors.Validate();
  const auto& b = backbone;
  if (b.stage_channels.empty()) bad("backbone needs at least one stage");
  if (b.blocks_per_stage.size() != b.stage_channels.size()) {
    bad("blocks_per_stage must have one entry per stage");
  }
  if (b.stem_channels <= 0 || b.stem_kernel <= 0 || b.fpn_channels <= 0) {
    bad("backbone widths must be positive");
  }
  for (int c : b.stage_channels) {
    if (c <= 0) bad("stage channels must be positive");
  }
  for (int n : b.blocks_per_stage) {
    if (n < 0) bad("blocks_per_stage must be non-negative");
  }
  if (anchors.num_levels() != b.num_levels()) bad("one anchor size per pyramid level is required");
  for (int l = 0; l < b.num_levels(); ++l) {
    if (anchors.strides[l] != b.StrideOfLevel(l)) {
      bad("anchor stride " + std::to_string(anchors.strides[l]) + " at level " +
          std::to_string(l) + " does not match backbone stride " +
          std::to_string(b.StrideOfLevel(l)));
    }
  }
  if (input_size <= 0 || input_size % b.stem_kernel != 0) bad("input size must be a multiple of the stem stride");
  if (proposals.batch_per_image <= 0 || regions.batch_per_image <= 0) bad("sample sizes must be positive");
  if (proposals.pre_nms_topk_train <= 0 || proposals.post_nms_topk_train <= 0 ||
      proposals.pre_nms_topk_test <= 0 || proposals.post_nms_topk_test <= 0) {
    bad("proposal counts must be positive");
  }
  if (regions.pool_size <= 0 || regions.sampling_ratio <= 0) bad("invalid region pooling");
}

ModelConfig ModelConfig::Desk(int num_genera) {
  ModelConfig c;
  c.num_genera = num_genera;
  c.anchors.ratios = {0.25, 0.5, 1.0, 2.0, 4.0};
  c.anchors.sizes = {32, 64, 128};
  c.anchors.strides = {8, 16, 32};
  return c;
}

ModelConfig ModelConfig::FullScale(int num_genera) {
  ModelConfig c;
  c.num_genera = num_genera;
  c.roi_feature_dim = 1024;
  c.anchors.ratios = {0.25, 0.5, 1.0, 2.0, 4.0};
  c.anchors.sizes = {32, 64, 128, 256, 512};
  c.anchors.strides = {4, 8, 16, 32, 64};
  c.backbone.stem_channels = 64;
  c.backbone.stem_kernel = 2;
  c.backbone.stage_channels = {256, 512, 1024, 2048, 2048};
  c.backbone.blocks_per_stage = {3, 4, 6, 3, 0};
  c.backbone.fpn_channels = 256;
  c.proposals.pre_nms_topk_train = 2000;
  c.proposals.post_nms_topk_train = 1000;
  c.proposals.pre_nms_topk_test = 1000;
  c.proposals.post_nms_topk_test = 1000;
  c.regions.batch_per_image = 512;
  return c;
}

json ToJson(const ModelConfig& c) {
  json j;
  j["num_genera"] = c.num_genera;
  j["num_classes"] = c.num_classes;
  j["roi_feature_dim"] = c.roi_feature_dim;
  j["input_size"] = c.input_size;
  j["class_branch"] = c.class_branch;
  j["anchors"] = {{"ratios", c.anchors.ratios}, {"sizes", c.anchors.sizes}, {"strides", c.anchors.strides}};
  j["backbone"] = {{"stem_channels", c.backbone.stem_channels},
                   {"stem_kernel", c.backbone.stem_kernel},
                   {"stage_channels", c.backbone.stage_channels},
                   {"blocks_per_stage", c.backbone.blocks_per_stage},
                   {"fpn_channels", c.backbone.fpn_channels}};
  const auto& p = c.proposals;
  j["proposals"] = {{"pre_nms_topk_train", p.pre_nms_topk_train},
                    {"post_nms_topk_train", p.post_nms_topk_train},
                    {"pre_nms_topk_test", p.pre_nms_topk_test},
                    {"post_nms_topk_test", p.post_nms_topk_test},
                    {"nms_threshold", p.nms_threshold},
                    {"batch_per_image", p.batch_per_image},
                    {"positive_fraction", p.positive_fraction},
                    {"foreground_iou", p.foreground_iou},
                    {"background_iou", p.background_iou},
                    {"smooth_l1_beta", p.smooth_l1_beta}};
  const auto& r = c.regions;
  j["regions"] = {{"batch_per_image", r.batch_per_image},
                  {"positive_fraction", r.positive_fraction},
                  {"foreground_iou", r.foreground_iou},
                  {"pool_size", r.pool_size},
                  {"sampling_ratio", r.sampling_ratio},
                  {"box_weights", {r.box_weights.wx, r.box_weights.wy, r.box_weights.ww, r.box_weights.wh}},
                  {"smooth_l1_beta", r.smooth_l1_beta}};
  return j;
}

ModelConfig ModelConfigFromJson(const json& j) {
  try {
    ModelConfig c;
    c.num_genera = j.at("num_genera").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.roi_feature_dim = j.at("roi_feature_dim").get<int>();
    c.input_size = j.at("input_size").get<int>();
    c.class_branch = j.at("class_branch").get<bool>();
    const auto& a = j.at("anchors");
    c.anchors.ratios = a.at("ratios").get<std::vector<double>>();
    c.anchors.sizes = a.at("sizes").get<std::vector<double>>();
    c.anchors.strides = a.at("strides").get<std::vector<int>>();
    const auto& b = j.at("backbone");
    c.backbone.stem_channels = b.at("stem_channels").get<int>();
    c.backbone.stem_kernel = b.at("stem_kernel").get<int>();
    c.backbone.stage_channels = b.at("stage_channels").get<std::vector<int>>();
    c.backbone.blocks_per_stage = b.at("blocks_per_stage").get<std::vector<int>>();
    c.backbone.fpn_channels = b.at("fpn_channels").get<int>();
    const auto& p = j.at("proposals");
    c.proposals.pre_nms_topk_train = p.at("pre_nms_topk_train").get<int>();
    c.proposals.post_nms_topk_train = p.at("post_nms_topk_train").get<int>();
    c.proposals.pre_nms_topk_test = p.at("pre_nms_topk_test").get<int>();
    c.proposals.post_nms_topk_test = p.at("post_nms_topk_test").get<int>();
    c.proposals.nms_threshold = p.at("nms_threshold").get<double>();
    c.proposals.batch_per_image = p.at("batch_per_image").get<int>();
    c.proposals.positive_fraction = p.at("positive_fraction").get<double>();
    c.proposals.foreground_iou = p.at("foreground_iou").get<double>();
    c.proposals.background_iou = p.at("background_iou").get<double>();
    c.proposals.smooth_l1_beta = p.at("smooth_l1_beta").get<double>();
    const auto& r = j.at("regions");
    c.regions.batch_per_image = r.at("batch_per_image").get<int>();
    c.regions.positive_fraction = r.at("positive_fraction").get<double>();
    c.regions.foreground_iou = r.at("foreground_iou").get<double>();
    c.regions.pool_size = r.at("pool_size").get<int>();
    c.regions.sampling_ratio = r.at("sampling_ratio").get<int>();
    const auto w = r.at("box_weights").get<std::vector<double>>();
    if (w.size() != 4) Fail(ErrorKind::kConfiguration, "box_weights needs 4 values");
    c.regions.box_weights = {w[0], w[1], w[2], w[3]};
    c.regions.smooth_l1_beta = r.at("smooth_l1_beta").get<double>();
    c.Validate();
    return c;
  } catch (const json::exception& e) {
    Fail(ErrorKind::kConfiguration, std::string("bad model config: ") + e.what());
  }
}

void LossWeights::Validate() const {
  if (!(lambda >= 0) || !std::isfinite(lambda)) {
    Fail(ErrorKind::kConfiguration, "lambda must be a finite non-negative number");
  }
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
LossBreakdown ComputeLoss(const StageOutputs<T>& out, const LossWeights& weights,
                          const LossOptions& options, StageGradients<T>* grads) {
  weights.Validate();
  const size_t n = out.objectness.size();
  const size_t r = static_cast<size_t>(out.num_regions);
  const size_t gc = static_cast<size_t>(out.genus_columns);
  const size_t cc = static_cast<size_t>(out.class_columns);
  if (out.objectness_label.size() != n || out.anchor_deltas.size() != 4 * n ||
      out.anchor_delta_targets.size() != 4 * n || out.genus_logits.size() != r * gc ||
      out.class_logits.size() != r * cc || out.box_deltas.size() != 4 * r ||
      out.genus_target.size() != r || out.box_targets.size() != 4 * r ||
      (cc > 0 && out.class_target.size() != r) || (r > 0 && gc < 2)) {
    Fail(ErrorKind::kConfiguration, "inconsistent loss input shapes");
  }
  if (grads) {
    grads->objectness.assign(n, T(0));
    grads->anchor_deltas.assign(4 * n, T(0));
    grads->genus_logits.assign(r * gc, T(0));
    grads->class_logits.assign(r * cc, T(0));
    grads->box_deltas.assign(4 * r, T(0));
  }
  const T lambda = static_cast<T>(weights.lambda);

  const T inv_n = n ? T(1) / static_cast<T>(n) : T(0);
  T obj_sum = 0, rpn_box_sum = 0;
  for (size_t i = 0; i < n; ++i) {
    obj_sum += BinaryCrossEntropyWithLogit<T>(out.objectness[i], out.objectness_label[i],
                                              grads ? &grads->objectness[i] : nullptr, inv_n);
    if (out.objectness_label[i]) {
      for (size_t c = 0; c < 4; ++c) {
        rpn_box_sum += SmoothL1<T>(out.anchor_deltas[4 * i + c] - out.anchor_delta_targets[4 * i + c],
                                   static_cast<T>(options.rpn_beta),
                                   grads ? &grads->anchor_deltas[4 * i + c] : nullptr, inv_n);
      }
    }
  }

  const T inv_r = r ? T(1) / static_cast<T>(r) : T(0);
  T genus_sum = 0, cls_sum = 0, roi_box_sum = 0;
  for (size_t i = 0; i < r; ++i) {
    std::span<const T> g(out.genus_logits.data() + i * gc, gc);
    genus_sum += CrossEntropy<T>(
        g, out.genus_target[i],
        grads ? std::span<T>(grads->genus_logits.data() + i * gc, gc) : std::span<T>(), inv_r);
    if (cc > 0) {
      std::span<const T> c(out.class_logits.data() + i * cc, cc);
      cls_sum += CrossEntropy<T>(
          c, out.class_target[i],
          grads ? std::span<T>(grads->class_logits.data() + i * cc, cc) : std::span<T>(),
          inv_r * lambda);
    }
    if (out.genus_target[i] != static_cast<int>(gc) - 1) {
      for (size_t k = 0; k < 4; ++k) {
        roi_box_sum += SmoothL1<T>(out.box_deltas[4 * i + k] - out.box_targets[4 * i + k],
                                   static_cast<T>(options.roi_beta),
                                   grads ? &grads->box_deltas[4 * i + k] : nullptr, inv_r);
      }
    }
  }

  LossBreakdown lb;
  lb.rpn_objectness = static_cast<double>(obj_sum * inv_n);
  lb.rpn_box = static_cast<double>(rpn_box_sum * inv_n);
  lb.roi_box = static_cast<double>(roi_box_sum * inv_r);
  lb.box = lb.rpn_objectness + lb.rpn_box + lb.roi_box;
  lb.genus = static_cast<double>(genus_sum * inv_r);
  lb.cls = static_cast<double>(cls_sum * inv_r);
  lb.lambda = weights.lambda;
  lb.total = lb.box + lb.genus + lb.lambda * lb.cls;
  if (!std::isfinite(lb.total) || !std::isfinite(lb.cls)) {
    std::ostringstream os;
    os << "non-finite loss: rpn_objectness=" << lb.rpn_objectness << " rpn_box=" << lb.rpn_box
       << " roi_box=" << lb.roi_box << " genus=" << lb.genus << " cls=" << lb.cls
       << " lambda=" << lb.lambda << " (finite inputs: objectness=" << AllFinite(out.objectness)
       << " genus_logits=" << AllFinite(out.genus_logits)
       << " class_logits=" << AllFinite(out.class_logits)
       << " box_deltas=" << AllFinite(out.box_deltas) << ")";
    Fail(ErrorKind::kNumeric, os.str());
  }
  return lb;
}

template LossBreakdown ComputeLoss<float>(const StageOutputs<float>&, const LossWeights&,
                                          const LossOptions&, StageGradients<float>*);
template LossBreakdown ComputeLoss<double>(const StageOutputs<double>&, const LossWeights&,
                                           const LossOptions&, StageGradients<double>*);

// ---------------------------------------------------------------------------
// Target assignment

std::vector<RegionTarget> AssignTargets(std::span<const BoundingBox> proposals,
                                        std::span<const Instance> ground_truth,
                                        const Taxonomy& taxonomy, double fg_iou) {
  std::vector<int> genus(ground_truth.size());
  for (size_t g = 0; g < ground_truth.size(); ++g) {
    genus[g] = taxonomy.GenusIndex(ground_truth[g].genus);
  }
  const int bg_genus = taxonomy.num_genera();
  const int bg_class = taxonomy.num_classes();
  std::vector<RegionTarget> out(proposals.size());
  for (size_t i = 0; i < proposals.size(); ++i) {
    RegionTarget& t = out[i];
    int best = -1;
    double best_iou = 0;
    for (size_t g = 0; g < ground_truth.size(); ++g) {
      const double v = IouUnchecked(proposals[i], ground_truth[g].box);
      if (best < 0 || v > best_iou) {
        best = static_cast<int>(g);
        best_iou = v;
      }
    }
    t.iou = best < 0 ? 0.0 : best_iou;
    if (best >= 0 && best_iou >= fg_iou) {
      t.matched_gt = best;
      t.genus = genus[best];
      t.cls = taxonomy.ClassIndexOfGenus(genus[best]);
    } else {
      t.genus = bg_genus;
      t.cls = bg_class;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detector

struct Detector::Activations {
  Tensor image;
  Tensor stem;
  std::vector<std::vector<Tensor>> stages;  // outputs of every conv per stage
  std::vector<Tensor> lateral;
  std::vector<Tensor> pyramid;
  std::vector<Tensor> rpn_hidden, rpn_objectness, rpn_deltas;
  std::vector<BoundingBox> proposals;
  std::vector<double> proposal_scores;

  const Tensor& StageOutput(int s) const { return stages[s].back(); }
};

struct RegionActivations {
  std::vector<BoundingBox> boxes;
  std::vector<int> level;
  Tensor pooled, f1, f2, genus, box, cls;
};

Detector::Detector(const ModelConfig& config, uint64_t init_seed) : config_(config) {
  config_.Validate();
  const auto& b = config_.backbone;
  const int a = config_.anchors.anchors_per_location();
  stem_ = Conv2d(store_, "backbone.stem", {3, b.stem_channels, b.stem_kernel, b.stem_kernel, 0, true});
  int in = b.stem_channels;
  stages_.resize(b.num_levels());
  for (int s = 0; s < b.num_levels(); ++s) {
    const int c = b.stage_channels[s];
    const std::string prefix = "backbone.stage" + std::to_string(s);
    stages_[s].push_back(Conv2d(store_, prefix + ".conv0", {in, c, 3, 2, 1, true}));
    for (int k = 0; k < b.blocks_per_stage[s]; ++k) {
      stages_[s].push_back(Conv2d(store_, prefix + ".conv" + std::to_string(k + 1), {c, c, 3, 1, 1, true}));
    }
    in = c;
  }
  for (int s = 0; s < b.num_levels(); ++s) {
    laterals_.push_back(Conv2d(store_, "fpn.lateral" + std::to_string(s),
                               {b.stage_channels[s], b.fpn_channels, 1, 1, 0, false}));
  }
  const int f = b.fpn_channels;
  rpn_conv_ = Conv2d(store_, "rpn.conv", {f, f, 3, 1, 1, true});
  rpn_objectness_ = Conv2d(store_, "rpn.objectness", {f, a, 1, 1, 0, false});
  rpn_deltas_ = Conv2d(store_, "rpn.deltas", {f, 4 * a, 1, 1, 0, false});
  const int pooled = f * config_.regions.pool_size * config_.regions.pool_size;
  const int m = config_.roi_feature_dim;
  fc1_ = Linear(store_, "roi.fc1", pooled, m, true);
  fc2_ = Linear(store_, "roi.fc2", m, m, true);
  genus_head_ = Linear(store_, "head.genus", m, config_.num_genera + 1, false);
  box_head_ = Linear(store_, "head.box", m, 4, false);
  if (config_.class_branch) {
    class_head_ = Linear(store_, "head.class", m, config_.num_classes + 1, false);
  }

  auto he = [&](const Conv2d& conv) {
    const auto& sp = conv.spec();
    InitNormal(*conv.weight(), std::sqrt(2.0 / (sp.in_channels * sp.kernel * sp.kernel)), init_seed);
  };
  he(stem_);
  for (auto& st : stages_) {
    for (auto& conv : st) he(conv);
  }
  for (auto& lat : laterals_) {
    InitNormal(*lat.weight(), std::sqrt(1.0 / lat.spec().in_channels), init_seed);
  }
  he(rpn_conv_);
  InitNormal(*rpn_objectness_.weight(), 0.01, init_seed);
  InitNormal(*rpn_deltas_.weight(), 0.01, init_seed);
  InitNormal(*fc1_.weight(), std::sqrt(2.0 / pooled), init_seed);
  InitNormal(*fc2_.weight(), std::sqrt(2.0 / m), init_seed);
  InitNormal(*genus_head_.weight(), 0.01, init_seed);
  InitNormal(*box_head_.weight(), 0.001, init_seed);
  if (config_.class_branch) InitNormal(*class_head_.weight(), 0.01, init_seed);

  FeatureDims d = stem_.OutputDims(config_.input_size, config_.input_size);
  for (int s = 0; s < b.num_levels(); ++s) {
    for (const auto& conv : stages_[s]) d = conv.OutputDims(d.height, d.width);
    level_dims_.push_back(d);
  }
  for (int s = b.num_levels() - 2; s >= 0; --s) {
    if ((level_dims_[s].height + 1) / 2 != level_dims_[s + 1].height ||
        (level_dims_[s].width + 1) / 2 != level_dims_[s + 1].width) {
      Fail(ErrorKind::kConfiguration, "pyramid levels are not a factor of two apart");
    }
  }
  anchors_ = TileAnchors(config_.anchors, level_dims_);
  size_t offset = 0;
  for (const auto& dims : level_dims_) {
    level_anchor_offset_.push_back(offset);
    offset += static_cast<size_t>(dims.height) * dims.width * a;
  }
  level_anchor_offset_.push_back(offset);
}

bool Detector::IsClassBranchParam(const Param& p) const {
  return config_.class_branch && (&p == class_head_.weight() || &p == class_head_.bias());
}

Tensor Detector::ImageTensor(const PlanarImage& image) {
  Tensor t({3, image.height, image.width});
  std::copy(image.data.begin(), image.data.end(), t.data.begin());
  return t;
}

void Detector::RunBackbone(const Tensor& image, Activations& act) const {
  const int s = config_.input_size;
  if (image.shape != std::vector<int>{3, s, s}) {
    Fail(ErrorKind::kConfiguration, "input " + ShapeString(image.shape) + " does not match the configured (3, " +
                                        std::to_string(s) + ", " + std::to_string(s) + ")");
  }
  const int levels = config_.backbone.num_levels();
  act.stem = stem_.Forward(image);
  act.stages.assign(levels, {});
  const Tensor* x = &act.stem;
  for (int st = 0; st < levels; ++st) {
    for (const auto& conv : stages_[st]) {
      act.stages[st].push_back(conv.Forward(*x));
      x = &act.stages[st].back();
    }
  }
  act.lateral.resize(levels);
  act.pyramid.resize(levels);
  for (int l = 0; l < levels; ++l) act.lateral[l] = laterals_[l].Forward(act.StageOutput(l));
  act.pyramid[levels - 1] = act.lateral[levels - 1];
  for (int l = levels - 2; l >= 0; --l) act.pyramid[l] = UpsampleAdd(act.lateral[l], act.pyramid[l + 1]);
  act.rpn_hidden.resize(levels);
  act.rpn_objectness.resize(levels);
  act.rpn_deltas.resize(levels);
  for (int l = 0; l < levels; ++l) {
    act.rpn_hidden[l] = rpn_conv_.Forward(act.pyramid[l]);
    act.rpn_objectness[l] = rpn_objectness_.Forward(act.rpn_hidden[l]);
    act.rpn_deltas[l] = rpn_deltas_.Forward(act.rpn_hidden[l]);
  }
}

void Detector::RunProposals(Activations& act, bool training) const {
  const auto& pc = config_.proposals;
  const int a = config_.anchors.anchors_per_location();
  const int pre = training ? pc.pre_nms_topk_train : pc.pre_nms_topk_test;
  const int post = training ? pc.post_nms_topk_train : pc.post_nms_topk_test;
  const ClipWindow clip{static_cast<double>(config_.input_size), static_cast<double>(config_.input_size)};
  struct Candidate {
    BoundingBox box;
    double logit;
  };
  std::vector<Candidate> all;
  for (int l = 0; l < config_.backbone.num_levels(); ++l) {
    const int hw = level_dims_[l].height * level_dims_[l].width;
    const int count = hw * a;
    const float* obj = act.rpn_objectness[l].ptr();
    const float* del = act.rpn_deltas[l].ptr();
    auto logit_of = [&](int local) { return obj[(local % a) * hw + local / a]; };
    std::vector<int> order(count);
    std::iota(order.begin(), order.end(), 0);
    const int k = std::min(pre, count);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int x, int y) {
      const float lx = logit_of(x), ly = logit_of(y);
      return lx > ly || (lx == ly && x < y);
    });
    std::vector<ScoredBox> level_boxes;
    for (int i = 0; i < k; ++i) {
      const int local = order[i];
      const int ai = local % a, loc = local / a;
      const BoxDeltas d{del[(4 * ai + 0) * hw + loc], del[(4 * ai + 1) * hw + loc],
                        del[(4 * ai + 2) * hw + loc], del[(4 * ai + 3) * hw + loc]};
      const BoundingBox box =
          DecodeDeltas(anchors_[level_anchor_offset_[l] + local], d, {}, clip, kMaxLogScale);
      if (!box.IsValid()) continue;
      level_boxes.push_back({box, logit_of(local)});
    }
    for (int i : Nms(level_boxes, pc.nms_threshold)) {
      all.push_back({level_boxes[i].box, level_boxes[i].score});
    }
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Candidate& x, const Candidate& y) { return x.logit > y.logit; });
  if (static_cast<int>(all.size()) > post) all.resize(post);
  act.proposals.clear();
  act.proposal_scores.clear();
  for (const auto& c : all) {
    act.proposals.push_back(c.box);
    act.proposal_scores.push_back(1.0 / (1.0 + std::exp(-c.logit)));
  }
}

namespace {

int PoolLevel(const BoundingBox& box, const AnchorGrid& grid) {
  const double scale = std::sqrt(std::max(box.Area(), 1e-12));
  const int lvl = static_cast<int>(std::floor(std::log2(scale / grid.sizes[0]) + 1e-6));
  return std::clamp(lvl, 0, grid.num_levels() - 1);
}

}  // namespace

namespace {

RegionActivations PoolAndHeads(const std::vector<Tensor>& pyramid, const ModelConfig& cfg,
                               std::vector<BoundingBox> boxes, const Linear& fc1, const Linear& fc2,
                               const Linear& genus, const Linear& box, const Linear* cls) {
  RegionActivations ra;
  ra.boxes = std::move(boxes);
  const int r = static_cast<int>(ra.boxes.size());
  const int s = cfg.regions.pool_size;
  const int f = cfg.backbone.fpn_channels;
  ra.pooled = Tensor({r, f * s * s});
  ra.level.resize(r);
  const RoiAlignSpec spec{s, cfg.regions.sampling_ratio};
  for (int l = 0; l < cfg.backbone.num_levels(); ++l) {
    std::vector<BoundingBox> lb;
    std::vector<int> rows;
    for (int i = 0; i < r; ++i) {
      if (l == 0) ra.level[i] = PoolLevel(ra.boxes[i], cfg.anchors);
      if (ra.level[i] == l) {
        lb.push_back(ra.boxes[i]);
        rows.push_back(i);
      }
    }
    if (!rows.empty()) {
      RoiAlignForward(pyramid[l], 1.0 / cfg.backbone.StrideOfLevel(l), lb, spec, ra.pooled, rows);
    }
  }
  ra.f1 = fc1.Forward(ra.pooled);
  ra.f2 = fc2.Forward(ra.f1);
  ra.genus = genus.Forward(ra.f2);
  ra.box = box.Forward(ra.f2);
  ra.cls = cls ? cls->Forward(ra.f2) : Tensor({r, 0});
  return ra;
}

}  // namespace

RawOutputs Detector::Forward(const Tensor& image) const {
  Activations act;
  RunBackbone(image, act);
  RunProposals(act, false);
  RegionActivations ra = PoolAndHeads(act.pyramid, config_, act.proposals, fc1_, fc2_, genus_head_,
                                      box_head_, config_.class_branch ? &class_head_ : nullptr);
  RawOutputs out;
  out.proposals = std::move(ra.boxes);
  out.proposal_scores = std::move(act.proposal_scores);
  out.box_deltas = std::move(ra.box);
  out.genus_logits = std::move(ra.genus);
  out.class_logits = std::move(ra.cls);
  return out;
}

std::vector<RawOutputs> Detector::Forward(std::span<const Tensor> batch) const {
  std::vector<RawOutputs> out;
  out.reserve(batch.size());
  for (const auto& im : batch) out.push_back(Forward(im));
  return out;
}

std::vector<Detection> Detector::Predict(const Tensor& image, const PredictOptions& options) const {
  const RawOutputs raw = Forward(image);
  const int r = static_cast<int>(raw.proposals.size());
  const int g = config_.num_genera;
  const int nc = config_.num_classes;
  const ClipWindow clip{static_cast<double>(config_.input_size), static_cast<double>(config_.input_size)};
  const auto& weights = config_.regions.box_weights;
  // Genus -> class map is not part of the model; class scores without the
  // branch fall back to a uniform split.
  std::vector<Detection> candidates;
  std::vector<double> p(g + 1), q(nc + 1);
  for (int i = 0; i < r; ++i) {
    std::span<const float> gl(raw.genus_logits.ptr() + static_cast<size_t>(i) * (g + 1), g + 1);
    std::vector<double> gld(gl.begin(), gl.end());
    Softmax<double>(gld, p);
    std::vector<double> genus_scores(p.begin(), p.begin() + g);
    const double fg = std::accumulate(genus_scores.begin(), genus_scores.end(), 0.0);
    for (auto& v : genus_scores) v = fg > 0 ? v / fg : 1.0 / g;
    std::vector<double> class_scores(nc, 1.0 / nc);
    if (config_.class_branch) {
      std::span<const float> cl(raw.class_logits.ptr() + static_cast<size_t>(i) * (nc + 1), nc + 1);
      std::vector<double> cld(cl.begin(), cl.end());
      Softmax<double>(cld, q);
      const double cfg_sum = std::accumulate(q.begin(), q.begin() + nc, 0.0);
      for (int c = 0; c < nc; ++c) class_scores[c] = cfg_sum > 0 ? q[c] / cfg_sum : 1.0 / nc;
    }
    const float* dl = raw.box_deltas.ptr() + static_cast<size_t>(i) * 4;
    const BoundingBox box =
        DecodeDeltas(raw.proposals[i], {dl[0], dl[1], dl[2], dl[3]}, weights, clip, kMaxLogScale);
    if (!box.IsValid()) continue;
    for (int k = 0; k < g; ++k) {
      if (p[k] < options.score_floor) continue;
      candidates.push_back({box, k, genus_scores, class_scores, p[k]});
    }
  }
  std::vector<Detection> kept;
  for (int k = 0; k < g; ++k) {
    std::vector<ScoredBox> boxes;
    std::vector<int> index;
    for (size_t i = 0; i < candidates.size(); ++i) {
      if (candidates[i].genus == k) {
        boxes.push_back({candidates[i].box, candidates[i].confidence});
        index.push_back(static_cast<int>(i));
      }
    }
    for (int j : Nms(boxes, options.nms_threshold)) kept.push_back(candidates[index[j]]);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Detection& x, const Detection& y) { return x.confidence > y.confidence; });
  if (static_cast<int>(kept.size()) > options.max_detections) kept.resize(options.max_detections);
  return kept;
}

LossBreakdown Detector::TrainStep(const Sample& sample, const Taxonomy& taxonomy,
                                  const LossWeights& weights, uint64_t sampling_seed,
                                  float grad_scale) {
  if (taxonomy.num_genera() != config_.num_genera) {
    Fail(ErrorKind::kConfiguration, "taxonomy genus count does not match the model");
  }
  Rng rng(sampling_seed);
  Activations act;
  act.image = ImageTensor(sample.image);
  RunBackbone(act.image, act);
  RunProposals(act, true);

  std::vector<Instance> gts;
  for (const auto& inst : sample.instances) {
    if (inst.box.Width() >= 1 && inst.box.Height() >= 1) gts.push_back(inst);
  }
  const int levels = config_.backbone.num_levels();
  const int a = config_.anchors.anchors_per_location();
  const auto& pc = config_.proposals;

  // Proposal-stage labels: IoU >= fg positive, < bg negative, and the best
  // anchors of every ground truth positive.
  const size_t na = anchors_.size();
  std::vector<int8_t> label(na, 0);
  std::vector<int> matched(na, -1);
  if (!gts.empty()) {
    std::vector<double> best_for_gt(gts.size(), 0.0);
    std::vector<float> best_iou(na, 0.f);
    std::vector<std::vector<float>> ious(gts.size(), std::vector<float>(na));
    for (size_t g = 0; g < gts.size(); ++g) {
      for (size_t i = 0; i < na; ++i) {
        const float v = static_cast<float>(IouUnchecked(anchors_[i], gts[g].box));
        ious[g][i] = v;
        if (matched[i] < 0 || v > best_iou[i]) {
          best_iou[i] = v;
          matched[i] = static_cast<int>(g);
        }
        best_for_gt[g] = std::max<double>(best_for_gt[g], v);
      }
    }
    for (size_t i = 0; i < na; ++i) {
      label[i] = best_iou[i] >= pc.foreground_iou ? 1 : (best_iou[i] < pc.background_iou ? 0 : -1);
    }
    for (size_t g = 0; g < gts.size(); ++g) {
      if (best_for_gt[g] <= 0) continue;
      for (size_t i = 0; i < na; ++i) {
        if (ious[g][i] == static_cast<float>(best_for_gt[g])) label[i] = 1;
      }
    }
  }
  std::vector<int> pos, neg;
  for (size_t i = 0; i < na; ++i) {
    if (label[i] == 1) pos.push_back(static_cast<int>(i));
    if (label[i] == 0) neg.push_back(static_cast<int>(i));
  }
  rng.Shuffle(pos);
  rng.Shuffle(neg);
  const int max_pos = static_cast<int>(pc.batch_per_image * pc.positive_fraction);
  const int n_pos = std::min<int>(static_cast<int>(pos.size()), max_pos);
  const int n_neg = std::min<int>(static_cast<int>(neg.size()), pc.batch_per_image - n_pos);
  std::vector<int> sampled(pos.begin(), pos.begin() + n_pos);
  sampled.insert(sampled.end(), neg.begin(), neg.begin() + n_neg);

  StageOutputs<float> so;
  struct AnchorRef {
    int level, channel_obj, loc;
  };
  std::vector<AnchorRef> refs;
  for (int idx : sampled) {
    int l = 0;
    while (static_cast<size_t>(idx) >= level_anchor_offset_[l + 1]) ++l;
    const int local = idx - static_cast<int>(level_anchor_offset_[l]);
    const int hw = level_dims_[l].height * level_dims_[l].width;
    const int ai = local % a, loc = local / a;
    refs.push_back({l, ai, loc});
    so.objectness.push_back(act.rpn_objectness[l].data[static_cast<size_t>(ai) * hw + loc]);
    const int lab = label[idx] == 1 ? 1 : 0;
    so.objectness_label.push_back(lab);
    BoxDeltas t{};
    if (lab) t = EncodeDeltas(anchors_[idx], gts[matched[idx]].box);
    for (int c = 0; c < 4; ++c) {
      so.anchor_deltas.push_back(act.rpn_deltas[l].data[static_cast<size_t>(4 * ai + c) * hw + loc]);
    }
    so.anchor_delta_targets.insert(so.anchor_delta_targets.end(),
                                   {static_cast<float>(t.dx), static_cast<float>(t.dy),
                                    static_cast<float>(t.dw), static_cast<float>(t.dh)});
  }

  // Region stage: proposals plus ground truth boxes, sampled 1:3.
  std::vector<BoundingBox> candidates = act.proposals;
  for (const auto& g : gts) candidates.push_back(g.box);
  const auto& rc = config_.regions;
  const std::vector<RegionTarget> targets = AssignTargets(candidates, gts, taxonomy, rc.foreground_iou);
  std::vector<int> fg, bg;
  for (size_t i = 0; i < targets.size(); ++i) {
    (targets[i].matched_gt >= 0 ? fg : bg).push_back(static_cast<int>(i));
  }
  rng.Shuffle(fg);
  rng.Shuffle(bg);
  const int max_fg = static_cast<int>(rc.batch_per_image * rc.positive_fraction);
  const int n_fg = std::min<int>(static_cast<int>(fg.size()), max_fg);
  const int n_bg = std::min<int>(static_cast<int>(bg.size()), rc.batch_per_image - n_fg);
  std::vector<int> chosen(fg.begin(), fg.begin() + n_fg);
  chosen.insert(chosen.end(), bg.begin(), bg.begin() + n_bg);
  std::vector<BoundingBox> region_boxes;
  for (int i : chosen) region_boxes.push_back(candidates[i]);

  const Linear* cls_head = config_.class_branch ? &class_head_ : nullptr;
  RegionActivations ra = PoolAndHeads(act.pyramid, config_, region_boxes, fc1_, fc2_, genus_head_,
                                      box_head_, cls_head);
  const int r = static_cast<int>(chosen.size());
  so.num_regions = r;
  so.genus_columns = config_.num_genera + 1;
  so.class_columns = config_.class_branch ? config_.num_classes + 1 : 0;
  so.genus_logits = ra.genus.data;
  so.class_logits = ra.cls.data;
  so.box_deltas = ra.box.data;
  for (int k = 0; k < r; ++k) {
    const RegionTarget& t = targets[chosen[k]];
    so.genus_target.push_back(t.genus);
    if (config_.class_branch) so.class_target.push_back(t.cls);
    BoxDeltas d{};
    if (t.matched_gt >= 0) d = EncodeDeltas(region_boxes[k], gts[t.matched_gt].box, rc.box_weights);
    so.box_targets.insert(so.box_targets.end(),
                          {static_cast<float>(d.dx), static_cast<float>(d.dy),
                           static_cast<float>(d.dw), static_cast<float>(d.dh)});
  }

  StageGradients<float> grads;
  const LossOptions lo{pc.smooth_l1_beta, rc.smooth_l1_beta};
  const LossBreakdown lb = ComputeLoss(so, weights, lo, &grads);

  const auto& kt = kernels::Active();
  auto scaled = [&](std::vector<float>& v, std::vector<int> shape) {
    Tensor t(std::move(shape));
    if (!v.empty()) {
      std::copy(v.begin(), v.end(), t.data.begin());
      kt.scale(t.size(), grad_scale, t.ptr());
    }
    return t;
  };

  // Region heads. The class branch is accumulated last.
  Tensor d_f2({r, config_.roi_feature_dim});
  Tensor d_genus = scaled(grads.genus_logits, {r, so.genus_columns});
  Tensor d_box = scaled(grads.box_deltas, {r, 4});
  genus_head_.Backward(ra.f2, ra.genus, d_genus, &d_f2);
  box_head_.Backward(ra.f2, ra.box, d_box, &d_f2);
  if (cls_head) {
    Tensor d_cls = scaled(grads.class_logits, {r, so.class_columns});
    class_head_.Backward(ra.f2, ra.cls, d_cls, &d_f2);
  }
  Tensor d_f1({r, config_.roi_feature_dim});
  fc2_.Backward(ra.f1, ra.f2, d_f2, &d_f1);
  Tensor d_pooled(ra.pooled.shape);
  fc1_.Backward(ra.pooled, ra.f1, d_f1, &d_pooled);

  std::vector<Tensor> d_pyr;
  for (int l = 0; l < levels; ++l) d_pyr.emplace_back(act.pyramid[l].shape);
  const RoiAlignSpec spec{rc.pool_size, rc.sampling_ratio};
  for (int l = 0; l < levels; ++l) {
    std::vector<BoundingBox> lb_boxes;
    std::vector<int> rows;
    for (int i = 0; i < r; ++i) {
      if (ra.level[i] == l) {
        lb_boxes.push_back(ra.boxes[i]);
        rows.push_back(i);
      }
    }
    if (!rows.empty()) {
      RoiAlignBackward(d_pooled, 1.0 / config_.backbone.StrideOfLevel(l), lb_boxes, spec, rows, d_pyr[l]);
    }
  }

  // Proposal stage.
  std::vector<Tensor> d_obj, d_del;
  for (int l = 0; l < levels; ++l) {
    d_obj.emplace_back(act.rpn_objectness[l].shape);
    d_del.emplace_back(act.rpn_deltas[l].shape);
  }
  for (size_t s = 0; s < refs.size(); ++s) {
    const auto& ref = refs[s];
    const int hw = level_dims_[ref.level].height * level_dims_[ref.level].width;
    d_obj[ref.level].data[static_cast<size_t>(ref.channel_obj) * hw + ref.loc] +=
        grads.objectness[s] * grad_scale;
    for (int c = 0; c < 4; ++c) {
      d_del[ref.level].data[static_cast<size_t>(4 * ref.channel_obj + c) * hw + ref.loc] +=
          grads.anchor_deltas[4 * s + c] * grad_scale;
    }
  }
  for (int l = 0; l < levels; ++l) {
    Tensor d_hidden(act.rpn_hidden[l].shape);
    rpn_objectness_.Backward(act.rpn_hidden[l], act.rpn_objectness[l], d_obj[l], &d_hidden);
    rpn_deltas_.Backward(act.rpn_hidden[l], act.rpn_deltas[l], d_del[l], &d_hidden);
    rpn_conv_.Backward(act.pyramid[l], act.rpn_hidden[l], d_hidden, &d_pyr[l]);
  }

  // Top-down pathway, finest level first.
  for (int l = 0; l + 1 < levels; ++l) UpsampleAddBackward(d_pyr[l], d_pyr[l + 1]);
  std::vector<Tensor> d_stage;
  for (int l = 0; l < levels; ++l) {
    d_stage.emplace_back(act.StageOutput(l).shape);
    laterals_[l].Backward(act.StageOutput(l), act.lateral[l], d_pyr[l], &d_stage[l]);
  }

  // Backbone, deepest stage first.
  Tensor carry;
  for (int st = levels - 1; st >= 0; --st) {
    Tensor d = std::move(d_stage[st]);
    if (!carry.data.empty()) kt.axpy(d.size(), 1.f, carry.ptr(), d.ptr());
    for (int k = static_cast<int>(stages_[st].size()) - 1; k >= 0; --k) {
      const Tensor& in = k > 0 ? act.stages[st][k - 1] : (st > 0 ? act.StageOutput(st - 1) : act.stem);
      Tensor dx(in.shape);
      stages_[st][k].Backward(in, act.stages[st][k], d, &dx);
      d = std::move(dx);
    }
    carry = std::move(d);
  }
  stem_.Backward(act.image, act.stem, carry, nullptr);
  return lb;
}

}  // namespace mtdet
