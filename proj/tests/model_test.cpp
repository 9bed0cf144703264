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
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "mtdet/errors.hpp"
#include "mtdet/model.hpp"
#include "mtdet/rng.hpp"

namespace mtdet {
namespace {

constexpr int kSize = 256;

Taxonomy ThreeGenera() {
  return Taxonomy(testing::DeskClasses(),
                  {{"Alpha", "Chlorophyta"}, {"Beta", "Pyrrophyta"}, {"Gamma", "Chlorophyta"}});
}

ModelConfig SmallConfig(int genera, bool branch = true) {
  ModelConfig c = ModelConfig::Desk(genera);
  c.input_size = kSize;
  c.class_branch = branch;
  return c;
}

Sample NoiseSample(uint64_t seed) {
  Rng rng(seed);
  Sample s;
  s.image = PlanarImage(kSize, kSize);
  for (auto& v : s.image.data) v = static_cast<float>(rng.Normal() * 0.5);
  // A bright block per instance so the sample is not pure noise.
  s.instances = {{{30, 40, 110, 90}, "Alpha"}, {{150, 150, 230, 200}, "Beta"}, {{60, 160, 100, 240}, "Gamma"}};
  for (const auto& inst : s.instances) {
    for (int y = int(inst.box.y1); y < inst.box.y2; ++y) {
      for (int x = int(inst.box.x1); x < inst.box.x2; ++x) s.image.at(1, x, y) += 2.f;
    }
  }
  return s;
}

TEST(ModelConfigTest, DeskAndFullScaleValidate) {
  EXPECT_NO_THROW(ModelConfig::Desk(7).Validate());
  const ModelConfig p = ModelConfig::FullScale(27);
  EXPECT_NO_THROW(p.Validate());
  EXPECT_EQ(p.anchors.sizes.size(), 5u);
  EXPECT_EQ(p.anchors.sizes.front(), 32);
  EXPECT_EQ(p.anchors.sizes.back(), 512);
  EXPECT_EQ(p.anchors.ratios, (std::vector<double>{0.25, 0.5, 1, 2, 4}));
  const ModelConfig round = ModelConfigFromJson(ToJson(p));
  EXPECT_EQ(ToJson(round), ToJson(p));
}

TEST(ModelConfigTest, RejectsBadValues) {
  auto expect_bad = [](ModelConfig c) {
    try {
      c.Validate();
      ADD_FAILURE() << ToJson(c).dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kConfiguration);
    }
  };
  ModelConfig c = ModelConfig::Desk(3);
  c.num_classes = 5;
  expect_bad(c);
  c = ModelConfig::Desk(1);
  expect_bad(c);
  c = ModelConfig::Desk(3);
  c.input_size = 802;
  expect_bad(c);
  c = ModelConfig::Desk(3);
  c.anchors.strides[1] = 12;
  expect_bad(c);
  c = ModelConfig::Desk(3);
  c.roi_feature_dim = 0;
  expect_bad(c);
}

TEST(DetectorTest, InitIsDeterministicAndClassHeadIsLast) {
  Detector a(SmallConfig(3), 5), b(SmallConfig(3), 5), c(SmallConfig(3), 6);
  ASSERT_EQ(a.params().params().size(), b.params().params().size());
  bool any_diff = false;
  for (size_t i = 0; i < a.params().params().size(); ++i) {
    EXPECT_EQ(a.params().params()[i]->value.data, b.params().params()[i]->value.data);
    any_diff |= a.params().params()[i]->value.data != c.params().params()[i]->value.data;
  }
  EXPECT_TRUE(any_diff);
  const auto& ps = a.params().params();
  EXPECT_TRUE(a.IsClassBranchParam(*ps.back()));
  EXPECT_FALSE(a.IsClassBranchParam(*ps.front()));
  // The class head is a single m x 7 layer.
  const Param* w = a.params().Find("head.class.weight");
  ASSERT_NE(w, nullptr);
  EXPECT_EQ(w->value.shape, (std::vector<int>{7, a.config().roi_feature_dim}));
  EXPECT_EQ(a.params().Find("head.genus.weight")->value.shape, (std::vector<int>{4, a.config().roi_feature_dim}));

  // Without the branch, everything else is initialized identically.
  Detector base(SmallConfig(3, false), 5);
  EXPECT_EQ(base.params().Find("head.class.weight"), nullptr);
  for (const auto& p : base.params().params()) {
    EXPECT_EQ(p->value.data, a.params().Find(p->name)->value.data) << p->name;
  }
  EXPECT_EQ(base.params().params().size() + 2, ps.size());
}

TEST(DetectorTest, ForwardShapesAndDeterminism) {
  Detector d(SmallConfig(3), 1);
  const Tensor x = Detector::ImageTensor(NoiseSample(2).image);
  EXPECT_EQ(x.shape, (std::vector<int>{3, kSize, kSize}));
  const RawOutputs a = d.Forward(x), b = d.Forward(x);
  const int r = static_cast<int>(a.proposals.size());
  EXPECT_GT(r, 0);
  EXPECT_LE(r, d.config().proposals.post_nms_topk_test);
  EXPECT_EQ(a.genus_logits.shape, (std::vector<int>{r, 4}));
  EXPECT_EQ(a.class_logits.shape, (std::vector<int>{r, 7}));
  EXPECT_EQ(a.box_deltas.shape, (std::vector<int>{r, 4}));
  EXPECT_EQ(a.genus_logits.data, b.genus_logits.data);
  EXPECT_EQ(a.class_logits.data, b.class_logits.data);
  for (size_t i = 0; i < a.proposals.size(); ++i) {
    EXPECT_EQ(a.proposals[i], b.proposals[i]);
    EXPECT_TRUE(a.proposals[i].IsValid());
    EXPECT_GE(a.proposals[i].x1, 0);
    EXPECT_LE(a.proposals[i].x2, kSize);
    if (i > 0) {
      EXPECT_GE(a.proposal_scores[i - 1], a.proposal_scores[i]);
    }
  }
  Detector base(SmallConfig(3, false), 1);
  const RawOutputs c = base.Forward(x);
  EXPECT_EQ(c.class_logits.shape, (std::vector<int>{r, 0}));
  EXPECT_EQ(c.genus_logits.data, a.genus_logits.data);
  EXPECT_THROW(d.Forward(Tensor({3, 128, 128})), Error);
}

TEST(DetectorTest, PredictContracts) {
  Detector d(SmallConfig(3), 3);
  const Tensor x = Detector::ImageTensor(NoiseSample(4).image);
  PredictOptions opt;
  opt.score_floor = 0.0;
  const auto dets = d.Predict(x, opt);
  ASSERT_FALSE(dets.empty());
  for (size_t i = 0; i < dets.size(); ++i) {
    const auto& det = dets[i];
    ASSERT_EQ(det.genus_scores.size(), 3u);
    ASSERT_EQ(det.class_scores.size(), 6u);
    EXPECT_NEAR(std::accumulate(det.genus_scores.begin(), det.genus_scores.end(), 0.0), 1.0, 1e-5);
    EXPECT_NEAR(std::accumulate(det.class_scores.begin(), det.class_scores.end(), 0.0), 1.0, 1e-5);
    if (i > 0) {
      EXPECT_GE(dets[i - 1].confidence, det.confidence);
    }
    // Per-genus NMS: no two kept boxes of the same genus overlap past the threshold.
    for (size_t j = i + 1; j < dets.size(); ++j) {
      if (dets[j].genus == det.genus) {
        EXPECT_LT(Iou(dets[j].box, det.box), opt.nms_threshold);
      }
    }
  }
  EXPECT_LE(static_cast<int>(dets.size()), opt.max_detections);
  opt.score_floor = 0.99;
  for (const auto& det : d.Predict(x, opt)) EXPECT_GE(det.confidence, 0.99);
}

TEST(AssignTargetsTest, Examples) {
  const Taxonomy tax = ThreeGenera();
  const std::vector<Instance> gt = {{{0, 0, 10, 10}, "Beta"}, {{10, 0, 20, 10}, "Gamma"}};
  const std::vector<BoundingBox> props = {{0, 0, 10, 10}, {50, 50, 60, 60}, {5, 0, 15, 10}, {1, 0, 11, 10}};
  const auto t = AssignTargets(props, gt, tax);
  EXPECT_EQ(t[0].matched_gt, 0);
  EXPECT_EQ(t[0].genus, tax.GenusIndex("Beta"));
  EXPECT_EQ(t[0].cls, tax.ClassIndex("Pyrrophyta"));
  EXPECT_EQ(t[1].matched_gt, -1);
  EXPECT_EQ(t[1].genus, 3);
  EXPECT_EQ(t[1].cls, 6);
  // Equal IoU 1/3 with both: below 0.5, so background either way.
  EXPECT_EQ(t[2].matched_gt, -1);
  EXPECT_EQ(t[3].matched_gt, 0);
  // A genuine tie above the threshold goes to the lower index.
  const std::vector<Instance> twins = {{{0, 0, 10, 10}, "Gamma"}, {{0, 0, 10, 10}, "Alpha"}};
  const std::vector<BoundingBox> one = {{0, 0, 10, 10}};
  EXPECT_EQ(AssignTargets(one, twins, tax)[0].matched_gt, 0);
  EXPECT_TRUE(AssignTargets(one, {}, tax)[0].matched_gt == -1);
  const std::vector<Instance> unknown = {{{0, 0, 1, 1}, "Zeta"}};
  EXPECT_THROW(AssignTargets(one, unknown, tax), Error);
}

TEST(AssignTargetsTest, RandomizedExhaustiveOracle) {
  const Taxonomy tax = ThreeGenera();
  Rng rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Instance> gt;
    const int ng = static_cast<int>(rng.UniformInt(0, 5));
    for (int i = 0; i < ng; ++i) {
      const double x = rng.UniformInt(0, 40), y = rng.UniformInt(0, 40);
      gt.push_back({{x, y, x + rng.UniformInt(2, 20), y + rng.UniformInt(2, 20)}, tax.genera()[rng.UniformInt(0, 2)]});
    }
    std::vector<BoundingBox> props;
    for (int i = 0; i < 20; ++i) {
      if (ng > 0 && rng.Bernoulli(0.3)) {
        props.push_back(gt[rng.UniformInt(0, ng - 1)].box);  // exact copies create ties
      } else {
        const double x = rng.UniformInt(0, 40), y = rng.UniformInt(0, 40);
        props.push_back({x, y, x + rng.UniformInt(2, 20), y + rng.UniformInt(2, 20)});
      }
    }
    const auto t = AssignTargets(props, gt, tax);
    for (size_t i = 0; i < props.size(); ++i) {
      int best = -1;
      double best_iou = -1;
      for (int g = 0; g < ng; ++g) {
        const double v = Iou(props[i], gt[g].box);
        if (v > best_iou) {
          best_iou = v;
          best = g;
        }
      }
      if (best >= 0 && best_iou >= 0.5) {
        ASSERT_EQ(t[i].matched_gt, best);
        ASSERT_EQ(t[i].genus, tax.GenusIndex(gt[best].genus));
        ASSERT_EQ(t[i].cls, tax.ClassIndexOfGenus(t[i].genus));
      } else {
        ASSERT_EQ(t[i].matched_gt, -1);
        ASSERT_EQ(t[i].genus, 3);
        ASSERT_EQ(t[i].cls, 6);
      }
    }
  }
}

double RelErr(float a, float b) {
  return std::abs(double(a) - b) / std::max({1e-12, std::abs(double(a)), std::abs(double(b))});
}

TEST(TrainStepTest, LossIdentityAndGradients) {
  const Taxonomy tax = ThreeGenera();
  Detector d(SmallConfig(3), 7);
  d.params().ZeroGrad();
  const LossBreakdown lb = d.TrainStep(NoiseSample(1), tax, LossWeights{0.2}, 11, 1.f);
  EXPECT_LE(std::abs(lb.total - (lb.box + lb.genus + 0.2 * lb.cls)) / std::max(1.0, lb.total), 1e-6);
  EXPECT_GT(lb.genus, 0);
  EXPECT_GT(lb.cls, 0);
  EXPECT_GT(lb.rpn_box, 0);
  double norm = 0;
  for (const auto& p : d.params().params()) {
    for (float g : p->grad.data) {
      ASSERT_TRUE(std::isfinite(g)) << p->name;
      norm += double(g) * g;
    }
  }
  EXPECT_GT(norm, 0);
  // Same seed, same gradients.
  std::vector<float> first = d.params().params().front()->grad.data;
  d.params().ZeroGrad();
  const LossBreakdown again = d.TrainStep(NoiseSample(1), tax, LossWeights{0.2}, 11, 1.f);
  EXPECT_EQ(again.total, lb.total);
  EXPECT_EQ(d.params().params().front()->grad.data, first);
  // grad_scale is linear.
  d.params().ZeroGrad();
  d.TrainStep(NoiseSample(1), tax, LossWeights{0.2}, 11, 0.5f);
  const auto& half = d.params().params().front()->grad.data;
  for (size_t i = 0; i < half.size(); i += 97) EXPECT_NEAR(half[i], 0.5f * first[i], 1e-6f + 1e-5f * std::abs(first[i]));
  // An image with no instances is all background.
  Sample empty = NoiseSample(2);
  empty.instances.clear();
  d.params().ZeroGrad();
  const LossBreakdown bg = d.TrainStep(empty, tax, LossWeights{0.2}, 3, 1.f);
  EXPECT_EQ(bg.rpn_box, 0);
  EXPECT_EQ(bg.roi_box, 0);
  EXPECT_TRUE(std::isfinite(bg.total));
  EXPECT_THROW(d.TrainStep(NoiseSample(1), testing::MakeCensus37().taxonomy, LossWeights{}, 1, 1.f), Error);
}

TEST(TrainStepTest, LambdaZeroIsolatesClassBranch) {
  const Taxonomy tax = ThreeGenera();
  Detector with(SmallConfig(3), 21), without(SmallConfig(3, false), 21);
  with.params().ZeroGrad();
  without.params().ZeroGrad();
  const LossBreakdown a = with.TrainStep(NoiseSample(5), tax, LossWeights{0.0}, 13, 0.5f);
  const LossBreakdown b = without.TrainStep(NoiseSample(5), tax, LossWeights{0.0}, 13, 0.5f);
  EXPECT_EQ(a.total, a.box + a.genus);
  EXPECT_NEAR(a.total, b.total, 1e-6 * b.total);
  for (const auto& p : with.params().params()) {
    if (with.IsClassBranchParam(*p)) {
      for (float g : p->grad.data) ASSERT_EQ(g, 0.f) << p->name;
      continue;
    }
    const Param* q = without.params().Find(p->name);
    ASSERT_NE(q, nullptr) << p->name;
    for (size_t i = 0; i < p->grad.data.size(); ++i) {
      ASSERT_LE(RelErr(p->grad.data[i], q->grad.data[i]), 1e-6) << p->name << "[" << i << "]";
    }
  }
}

}  // namespace
}  // namespace mtdet
