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
#include <memory>

#include "mtdet/checkpoint.hpp"
#include "mtdet/errors.hpp"
#include "mtdet/synthgen.hpp"
#include "mtdet/training.hpp"
#include "test_util.hpp"

namespace mtdet {
namespace {

using testing::TempDir;

ErrorKind KindOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kUsage;
}

TEST(LrTest, DefaultSchedule) {
  const TrainConfig c;
  EXPECT_DOUBLE_EQ(LrAt(0, c), 0.02);
  EXPECT_DOUBLE_EQ(LrAt(5999, c), 0.02);
  EXPECT_NEAR(LrAt(6000, c), 0.002, 1e-15);
  EXPECT_NEAR(LrAt(6999, c), 0.002, 1e-15);
  EXPECT_NEAR(LrAt(7000, c), 0.0002, 1e-15);
  EXPECT_NEAR(LrAt(7500, c), 0.02 * 0.1 * 0.1, 1e-15);
  EXPECT_EQ(KindOf([&] { LrAt(-1, c); }), ErrorKind::kConfiguration);
}

TEST(LrTest, NonIncreasingWithOneJumpPerDecay) {
  for (const TrainConfig& c : {TrainConfig(), TrainConfig::Desk(400), TrainConfig::Desk(3)}) {
    int jumps = 0;
    for (int64_t s = 1; s <= c.total_steps + 10; ++s) {
      const double a = LrAt(s - 1, c), b = LrAt(s, c);
      ASSERT_LE(b, a);
      jumps += b != a;
    }
    EXPECT_EQ(jumps, static_cast<int>(c.decay_steps.size()));
  }
  const TrainConfig d = TrainConfig::Desk(400);
  EXPECT_EQ(d.decay_steps, (std::vector<int64_t>{300, 350}));
  EXPECT_NO_THROW(TrainConfig::Desk(1).Validate());
}

TEST(TrainConfigTest, Validation) {
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_EQ(KindOf([&] { c.Validate(); }), ErrorKind::kConfiguration);
  };
  bad([](TrainConfig& c) { c.base_lr = 0; });
  bad([](TrainConfig& c) { c.momentum = 1.0; });
  bad([](TrainConfig& c) { c.momentum = -0.1; });
  bad([](TrainConfig& c) { c.decay_steps = {7000, 6000}; });
  bad([](TrainConfig& c) { c.decay_steps = {6000, 6000}; });
  bad([](TrainConfig& c) { c.lambda = -0.5; });
  bad([](TrainConfig& c) { c.batch_size = 0; });
  bad([](TrainConfig& c) { c.total_steps = 0; });
  TrainConfig scaled;
  scaled.scale_lr_with_batch = true;
  scaled.batch_size = 8;
  EXPECT_NEAR(scaled.EffectiveBaseLr(), 0.02 * 8 / 32, 1e-15);
  EXPECT_NEAR(LrAt(0, scaled), 0.005, 1e-15);
  EXPECT_DOUBLE_EQ(TrainConfig().EffectiveBaseLr(), 0.02);
}

// A 6-image corpus shared by the slow tests.
class TrainingTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("train");
    CorpusOptions opt;
    opt.scene.width = opt.scene.height = 320;
    opt.scene.max_instances = 3;
    EmitCorpus(6, ImbalanceProfile::Parse("Cymbella:0.5,Pediastrum:0.3,Microcystis:0.2"), dir_->path() / "corpus", 5,
               opt);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static Dataset Load() { return LoadDataset(dir_->path() / "corpus"); }
  static TrainConfig Quick(int64_t steps) {
    TrainConfig c = TrainConfig::Desk(steps);
    c.batch_size = 1;
    c.seed = 3;
    return c;
  }
  static TempDir* dir_;
};
TempDir* TrainingTest::dir_ = nullptr;

TEST_F(TrainingTest, PrepareSplitsAndHoldsOut) {
  const PreparedData d = PrepareData(Load(), {.split_seed = 1});
  EXPECT_EQ(d.train.size(), 4u);
  EXPECT_EQ(d.test.size(), 2u);
  // Merged on training counts, relabeled on both sides.
  for (const auto& im : d.train) {
    for (const auto& inst : im.instances) EXPECT_TRUE(d.taxonomy().HasGenus(inst.genus));
  }
  for (const auto& im : d.test) {
    for (const auto& inst : im.instances) EXPECT_TRUE(d.taxonomy().HasGenus(inst.genus));
  }
  PrepareOptions all;
  all.holdout = false;
  all.merge_threshold = 0;
  const PreparedData e = PrepareData(Load(), all);
  EXPECT_EQ(e.train.size(), 6u);
  EXPECT_EQ(e.test.size(), 6u);
  EXPECT_EQ(e.taxonomy().num_genera(), e.source_taxonomy.num_genera());
  for (int c = 0; c < 3; ++c) EXPECT_GT(e.stats.stddev[c], 0);
  Dataset empty = Load();
  empty.images.clear();
  EXPECT_EQ(KindOf([&] { PrepareData(std::move(empty)); }), ErrorKind::kConfiguration);
}

TEST_F(TrainingTest, OneStepRunWritesLogAndCheckpoint) {
  PrepareOptions po;
  po.merge_threshold = 0;
  const PreparedData d = PrepareData(Load(), po);
  TempDir out("one");
  TrainOptions to;
  to.out_dir = out.path();
  const TrainResult r = Train(d, Quick(1), ModelConfig::Desk(d.taxonomy().num_genera()), to);
  ASSERT_EQ(r.log.steps.size(), 1u);
  EXPECT_EQ(r.log.steps[0].step, 0);
  const auto& lb = r.log.steps[0].loss;
  EXPECT_LE(std::abs(lb.total - (lb.box + lb.genus + lb.lambda * lb.cls)), 1e-6 * std::max(1.0, lb.total));
  const TrainLog back = ReadTrainLog(out / "train_log.jsonl");
  ASSERT_EQ(back.steps.size(), 1u);
  EXPECT_EQ(back.steps[0].loss.total, lb.total);
  EXPECT_EQ(back.steps[0].lr, 0.02);
  const LoadedCheckpoint ck = LoadCheckpoint(r.checkpoint);
  EXPECT_EQ(ck.meta.step, 1);
  EXPECT_EQ(ck.meta.taxonomy.Fingerprint(), d.taxonomy().Fingerprint());
  const auto& a = ck.detector->params().params();
  const auto& b = r.detector->params().params();
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value.data, b[i]->value.data) << a[i]->name;
}

TEST_F(TrainingTest, SeededRunsAreIdentical) {
  PrepareOptions po;
  po.merge_threshold = 0;
  const PreparedData d = PrepareData(Load(), po);
  const ModelConfig m = ModelConfig::Desk(d.taxonomy().num_genera());
  TrainConfig c = Quick(3);
  c.batch_size = 2;
  const TrainResult a = Train(d, c, m), b = Train(d, c, m);
  ASSERT_EQ(a.log.steps.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.log.steps[i].loss.total, b.log.steps[i].loss.total);
    EXPECT_EQ(a.log.steps[i].grad_norm, b.log.steps[i].grad_norm);
    EXPECT_GT(a.log.steps[i].grad_norm, 0);
  }
  for (size_t i = 0; i < a.detector->params().params().size(); ++i) {
    ASSERT_EQ(a.detector->params().params()[i]->value.data, b.detector->params().params()[i]->value.data);
  }
  c.seed = 4;
  const TrainResult other = Train(d, c, m);
  EXPECT_NE(other.log.steps[0].loss.total, a.log.steps[0].loss.total);
}

TEST_F(TrainingTest, TrainerRejectsMismatchedModel) {
  PrepareOptions po;
  po.merge_threshold = 0;
  const PreparedData d = PrepareData(Load(), po);
  EXPECT_EQ(KindOf([&] { Trainer t(d, Quick(1), ModelConfig::Desk(d.taxonomy().num_genera() + 1)); }),
            ErrorKind::kConfiguration);
}

TEST_F(TrainingTest, DivergenceSavesLastGoodCheckpoint) {
  PrepareOptions po;
  po.merge_threshold = 0;
  const PreparedData d = PrepareData(Load(), po);
  TrainConfig c = Quick(20);
  c.base_lr = 1e12;
  c.decay_steps = {100, 200};
  c.total_steps = 20;
  TempDir out("nan");
  TrainOptions to;
  to.out_dir = out.path();
  EXPECT_EQ(KindOf([&] { Train(d, c, ModelConfig::Desk(d.taxonomy().num_genera()), to); }), ErrorKind::kNumeric);
  EXPECT_TRUE(std::filesystem::exists(out / "last_good.ckpt"));
  EXPECT_FALSE(std::filesystem::exists(out / "model.ckpt"));
  EXPECT_NO_THROW(LoadCheckpoint(out / "last_good.ckpt"));
}

TEST_F(TrainingTest, DegenerateSweepMatchesPlainRun) {
  PrepareOptions po;
  po.merge_threshold = 0;
  const PreparedData d = PrepareData(Load(), po);
  const ModelConfig m = ModelConfig::Desk(d.taxonomy().num_genera());
  TrainConfig c = Quick(2);
  c.lambda = 0;
  c.eval_every = 2;
  TempDir out("sweep");
  const SweepResult s = SweepLambda(d, c, m, {0.0}, out.path());
  ASSERT_EQ(s.rows.size(), 1u);
  EXPECT_TRUE(s.ok());
  const TrainResult plain = Train(d, c, m);
  ASSERT_EQ(plain.log.evals.size(), 1u);
  EXPECT_EQ(*s.rows[0].map_genus, plain.log.evals[0].map_genus);
  EXPECT_EQ(*s.rows[0].map_class, plain.log.evals[0].map_class);
  EXPECT_EQ(s.BestLambda(), 0.0);
  EXPECT_TRUE(std::filesystem::exists(out / "lambda_0/model.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(out / "series_lambda_0.csv"));
  EXPECT_EQ(testing::ReadFile(out / "sweep.csv").rfind("lambda,final_map_genus,final_map_class\n0,", 0), 0u);
  EXPECT_EQ(KindOf([&] { SweepLambda(d, c, m, {0.1, 0.1}, out.path()); }), ErrorKind::kUsage);
  EXPECT_EQ(KindOf([&] { SweepLambda(d, c, m, {-1}, out.path()); }), ErrorKind::kUsage);
  EXPECT_EQ(KindOf([&] { SweepLambda(d, c, m, {}, out.path()); }), ErrorKind::kUsage);
}

TEST(SweepFormatTest, CsvAndTags) {
  SweepResult r;
  r.rows = {{0.0, 0.5, 0.625, ""}, {0.1, std::nullopt, std::nullopt, "non-finite loss\nat step 3"}};
  EXPECT_EQ(SweepCsv(r),
            "lambda,final_map_genus,final_map_class\n0,0.5,0.625\n0.1,NA,NA\n# lambda=0.1 failed: non-finite loss at step 3\n");
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(r.BestLambda(), 0.0);
  EXPECT_EQ(LambdaTag(0.3), "0.3");
  EXPECT_EQ(LambdaTag(0.25), "0.25");
}

}  // namespace
}  // namespace mtdet
