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
#include <set>

#include "fixtures.hpp"
#include "mtdet/data.hpp"
#include "mtdet/errors.hpp"
#include "mtdet/image.hpp"
#include "mtdet/rng.hpp"
#include "test_util.hpp"

namespace mtdet {
namespace {

using testing::TempDir;

std::vector<std::string> Ids(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("im" + std::to_string(i));
  return ids;
}

TEST(SplitTest, Sizes) {
  for (auto [n, train] : std::vector<std::pair<int, size_t>>{{10, 8}, {1859, 1487}, {1, 0}, {0, 0}, {4, 3}}) {
    const auto ids = Ids(n);
    const DatasetSplit s = SplitDataset(ids, 7);
    EXPECT_EQ(s.train.size(), train) << n;
    EXPECT_EQ(s.test.size(), n - train) << n;
  }
  EXPECT_EQ(SplitDataset(Ids(1859), 7).test.size(), 372u);
}

TEST(SplitTest, PartitionAndDeterminism) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = static_cast<int>(rng.UniformInt(2, 300));
    auto ids = Ids(n);
    const uint64_t seed = rng.NextU64();
    const DatasetSplit a = SplitDataset(ids, seed);
    rng.Shuffle(ids);  // input order must not matter
    const DatasetSplit b = SplitDataset(ids, seed);
    ASSERT_EQ(a.train, b.train);
    ASSERT_EQ(a.test, b.test);
    std::set<std::string> all(a.train.begin(), a.train.end());
    for (const auto& t : a.test) ASSERT_TRUE(all.insert(t).second) << "overlap " << t;
    ASSERT_EQ(all.size(), static_cast<size_t>(n));
    ASSERT_EQ(a.train.size(), static_cast<size_t>(n) * 8 / 10);
  }
  const auto ids = Ids(100);
  EXPECT_NE(SplitDataset(ids, 1).train, SplitDataset(ids, 2).train);
  auto dup = Ids(5);
  dup.push_back("im0");
  EXPECT_THROW(SplitDataset(dup, 1), Error);
}

AnnotatedImage SolidImage(int w, int h, uint8_t r, uint8_t g, uint8_t b) {
  AnnotatedImage im;
  im.image_id = "x";
  im.width = w;
  im.height = h;
  im.pixels = RgbImage(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      uint8_t* p = im.pixels.at(x, y);
      p[0] = r;
      p[1] = g;
      p[2] = b;
    }
  }
  return im;
}

TEST(ResizeTest, ScalesBoxesPerAxis) {
  AnnotatedImage im = SolidImage(1600, 1600, 10, 20, 30);
  im.instances = {{{100, 200, 300, 500}, "A"}};
  const Sample s = ResizeSample(im, 800);
  EXPECT_EQ(s.image.width, 800);
  EXPECT_EQ(s.image.height, 800);
  EXPECT_EQ(s.instances[0].box, (BoundingBox{50, 100, 150, 250}));
  EXPECT_FLOAT_EQ(s.image.at(2, 400, 400), 30.f);

  AnnotatedImage wide = SolidImage(400, 200, 0, 0, 0);
  wide.instances = {{{0, 0, 400, 200}, "A"}};
  EXPECT_EQ(ResizeSample(wide, 800).instances[0].box, (BoundingBox{0, 0, 800, 800}));

  AnnotatedImage empty = im;
  empty.pixels = RgbImage();
  EXPECT_THROW(ResizeSample(empty, 800), Error);
}

TEST(StatsTest, MatchesDirectComputation) {
  Rng rng(3);
  std::vector<PlanarImage> images;
  for (int k = 0; k < 3; ++k) {
    PlanarImage p(5 + k, 4);
    for (auto& v : p.data) v = static_cast<float>(rng.UniformInt(0, 255));
    images.push_back(p);
  }
  const NormalizationStats st = ComputeStats(images);
  for (int c = 0; c < 3; ++c) {
    std::vector<double> all;
    for (const auto& im : images) {
      for (size_t i = 0; i < im.plane(); ++i) all.push_back(im.channel(c)[i]);
    }
    const double mean = std::accumulate(all.begin(), all.end(), 0.0) / all.size();
    double var = 0;
    for (double v : all) var += (v - mean) * (v - mean);
    EXPECT_NEAR(st.mean[c], mean, 1e-9);
    EXPECT_NEAR(st.stddev[c], std::sqrt(var / all.size()), 1e-9);
  }
  // After standardizing with its own stats the data has zero mean, unit variance.
  for (auto& im : images) Standardize(im, st);
  const NormalizationStats after = ComputeStats(images);
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(after.mean[c], 0, 1e-5);
    EXPECT_NEAR(after.stddev[c], 1, 1e-5);
  }
  NormalizationStats bad;
  bad.stddev[1] = 0;
  EXPECT_THROW(bad.Validate(), Error);
}

// Pixels inside `box` carry 1, the rest 0.
Sample BoxSample(int n, const BoundingBox& box) {
  Sample s;
  s.image = PlanarImage(n, n);
  for (int y = static_cast<int>(box.y1); y < box.y2; ++y) {
    for (int x = static_cast<int>(box.x1); x < box.x2; ++x) {
      for (int c = 0; c < 3; ++c) s.image.at(c, x, y) = 1.f + c;
    }
  }
  s.instances = {{box, "A"}};
  return s;
}

BoundingBox OnesSupport(const PlanarImage& im) {
  BoundingBox r{1e9, 1e9, -1e9, -1e9};
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x) {
      if (im.at(0, x, y) != 0) {
        r.x1 = std::min<double>(r.x1, x);
        r.y1 = std::min<double>(r.y1, y);
        r.x2 = std::max<double>(r.x2, x + 1);
        r.y2 = std::max<double>(r.y2, y + 1);
      }
    }
  }
  return r;
}

TEST(RotateTest, PixelOracleAndBoxes) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = static_cast<int>(rng.UniformInt(4, 40));
    const int x1 = static_cast<int>(rng.UniformInt(0, n - 1)), y1 = static_cast<int>(rng.UniformInt(0, n - 1));
    const BoundingBox box{double(x1), double(y1), double(rng.UniformInt(x1 + 1, n)), double(rng.UniformInt(y1 + 1, n))};
    const Sample s = BoxSample(n, box);
    for (int dir : {1, -1}) {
      const Sample r = Rotate90(s, dir);
      ASSERT_EQ(r.instances[0].box, OnesSupport(r.image)) << trial << " dir " << dir;
      // Pixel mapping: (x, y) -> (y, n-1-x) for +1.
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          const float want = s.image.at(1, x, y);
          const float got = dir > 0 ? r.image.at(1, y, n - 1 - x) : r.image.at(1, n - 1 - y, x);
          ASSERT_EQ(want, got);
        }
      }
    }
  }
}

TEST(RotateTest, InverseAndCycle) {
  Rng rng(6);
  Sample s;
  s.image = PlanarImage(9, 9);
  for (auto& v : s.image.data) v = static_cast<float>(rng.Uniform());
  s.instances = {{{1.5, 2.25, 7, 8}, "A"}, {{0, 0, 9, 9}, "B"}};
  const Sample back = Rotate90(Rotate90(s, 1), -1);
  EXPECT_EQ(back.image.data, s.image.data);
  EXPECT_EQ(back.instances[0].box, s.instances[0].box);
  Sample four = s;
  for (int i = 0; i < 4; ++i) four = Rotate90(four, 1);
  EXPECT_EQ(four.image.data, s.image.data);
  for (size_t i = 0; i < s.instances.size(); ++i) {
    EXPECT_EQ(four.instances[i].box, s.instances[i].box);
    EXPECT_EQ(four.instances[i].genus, s.instances[i].genus);
  }
  Sample rect;
  rect.image = PlanarImage(4, 5);
  EXPECT_THROW(Rotate90(rect, 1), Error);
  EXPECT_THROW(Rotate90(s, 2), Error);
}

TEST(CropTest, FullWindowIsIdentity) {
  Rng rng(7);
  Sample s;
  s.image = PlanarImage(32, 32);
  for (auto& v : s.image.data) v = static_cast<float>(rng.Uniform());
  s.instances = {{{3, 4, 20, 30}, "A"}};
  const Sample c = RandomCrop(s, 99, 1.0, 32);
  EXPECT_EQ(c.image.data, s.image.data);
  ASSERT_EQ(c.instances.size(), 1u);
  EXPECT_EQ(c.instances[0].box, s.instances[0].box);
  EXPECT_THROW(RandomCrop(s, 1, 0.0, 32), Error);
  EXPECT_THROW(RandomCrop(s, 1, 1.5, 32), Error);
}

TEST(CropTest, BoxesFollowTheRecoveredWindow) {
  // Linear ramps survive bilinear resampling, so the crop window can be read
  // back from the pixels without knowing how it was drawn.
  const int n = 120;
  Rng rng(8);
  for (int trial = 0; trial < 60; ++trial) {
    Sample s;
    s.image = PlanarImage(n, n);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        s.image.at(0, x, y) = static_cast<float>(x);
        s.image.at(1, x, y) = static_cast<float>(y);
      }
    }
    for (int k = 0; k < 12; ++k) {
      const double x1 = rng.Uniform(0, n - 2), y1 = rng.Uniform(0, n - 2);
      s.instances.push_back({{x1, y1, rng.Uniform(x1 + 1, n), rng.Uniform(y1 + 1, n)}, "g" + std::to_string(k)});
    }
    const int out = n;
    const Sample c = RandomCrop(s, rng.NextU64(), 0.5, out);
    const int mid = out / 2;
    const double cw = std::round((c.image.at(0, mid + 1, mid) - c.image.at(0, mid, mid)) * out);
    const double ch = std::round((c.image.at(1, mid, mid + 1) - c.image.at(1, mid, mid)) * out);
    const double x0 = std::round(c.image.at(0, mid, mid) - ((mid + 0.5) * cw / out - 0.5));
    const double y0 = std::round(c.image.at(1, mid, mid) - ((mid + 0.5) * ch / out - 0.5));
    ASSERT_GE(cw * ch, 0.5 * n * n - 1e-9);
    ASSERT_GE(x0, 0);
    ASSERT_LE(x0 + cw, n);

    size_t next = 0;
    for (const auto& inst : s.instances) {
      const auto& b = inst.box;
      const double w = std::min(b.x2, x0 + cw) - std::max(b.x1, x0);
      const double h = std::min(b.y2, y0 + ch) - std::max(b.y1, y0);
      const double inter = std::max(0.0, w) * std::max(0.0, h);
      if (inter <= 0 || inter < 0.25 * b.Area()) continue;
      ASSERT_LT(next, c.instances.size());
      const auto& got = c.instances[next++];
      ASSERT_EQ(got.genus, inst.genus);
      ASSERT_NEAR(got.box.x1, (std::max(b.x1, x0) - x0) * out / cw, 1e-9);
      ASSERT_NEAR(got.box.y1, (std::max(b.y1, y0) - y0) * out / ch, 1e-9);
      ASSERT_NEAR(got.box.x2, (std::min(b.x2, x0 + cw) - x0) * out / cw, 1e-9);
      ASSERT_NEAR(got.box.y2, (std::min(b.y2, y0 + ch) - y0) * out / ch, 1e-9);
    }
    ASSERT_EQ(next, c.instances.size()) << "unexpected extra boxes";
  }
}

TEST(CropTest, BisectedBoxBelowQuarterIsDropped) {
  // Any window covering 60% of the area contains the center box; the
  // border strip is often cut below a quarter of itself.
  Sample s;
  s.image = PlanarImage(100, 100);
  s.instances = {{{95, 10, 100, 20}, "edge"}, {{40, 40, 60, 60}, "center"}};
  int dropped = 0;
  for (uint64_t seed = 0; seed < 40; ++seed) {
    const Sample c = RandomCrop(s, seed, 0.6, 100);
    bool has_center = false, has_edge = false;
    for (const auto& i : c.instances) {
      has_center |= i.genus == "center";
      has_edge |= i.genus == "edge";
    }
    EXPECT_TRUE(has_center);
    dropped += !has_edge;
  }
  EXPECT_GT(dropped, 0);
}

TEST(TrainingSampleTest, DeterministicPerSeed) {
  AnnotatedImage im = SolidImage(200, 160, 100, 150, 200);
  for (int y = 40; y < 80; ++y) {
    for (int x = 30; x < 90; ++x) im.pixels.at(x, y)[0] = 10;
  }
  im.instances = {{{30, 40, 90, 80}, "A"}};
  NormalizationStats st;
  st.mean = {100, 100, 100};
  st.stddev = {50, 50, 50};
  const AugmentConfig aug;
  const Sample a = MakeTrainingSample(im, st, aug, 42);
  const Sample b = MakeTrainingSample(im, st, aug, 42);
  EXPECT_EQ(a.image.data, b.image.data);
  ASSERT_EQ(a.instances.size(), b.instances.size());
  EXPECT_EQ(a.image.width, kInputSize);
  AugmentConfig off;
  off.enabled = false;
  const Sample plain = MakeTrainingSample(im, st, off, 1);
  EXPECT_FLOAT_EQ(plain.image.at(2, 1, 1), 2.f);
  EXPECT_EQ(plain.instances[0].box, (BoundingBox{120, 200, 360, 400}));
}

class LoadTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Taxonomy tax(testing::DeskClasses(), {{"Alpha", "Chlorophyta"}, {"Beta", "Pyrrophyta"}});
    WriteTaxonomyCsv(dir_ / "taxonomy.csv", tax);
    std::filesystem::create_directories(dir_ / "images");
    AnnotatedImage im = SolidImage(40, 30, 1, 2, 3);
    im.image_id = "a";
    im.file = "images/a.png";
    im.instances = {{{1, 2, 10, 20}, "Alpha"}, {{5, 5, 40, 30}, "Beta"}};
    WritePng((dir_ / im.file).string(), im.pixels);
    images_ = {im};
  }
  void WriteManifest() { WriteAnnotations(dir_ / "annotations.jsonl", images_); }
  ErrorKind LoadKind() {
    try {
      LoadDataset(dir_.path());
    } catch (const Error& e) {
      return e.kind();
    }
    ADD_FAILURE() << "load succeeded";
    return ErrorKind::kUsage;
  }

  TempDir dir_{"load"};
  std::vector<AnnotatedImage> images_;
};

TEST_F(LoadTest, RoundTrip) {
  WriteManifest();
  const Dataset ds = LoadDataset(dir_.path());
  ASSERT_EQ(ds.images.size(), 1u);
  EXPECT_EQ(ds.NumInstances(), 2u);
  EXPECT_EQ(ds.images[0].instances[1].box, (BoundingBox{5, 5, 40, 30}));
  EXPECT_EQ(ds.images[0].pixels.pixels, images_[0].pixels.pixels);
  EXPECT_EQ(ds.taxonomy.ClassOf("Beta"), "Pyrrophyta");
  EXPECT_EQ(&ds.Find("a"), &ds.images[0]);
  EXPECT_THROW(ds.Find("zzz"), Error);
  const Dataset by_file = LoadDataset(dir_ / "annotations.jsonl", {.load_pixels = false});
  EXPECT_TRUE(by_file.images[0].pixels.pixels.empty());
  const GenusCensus c = CountGenera(ds.images, ds.taxonomy);
  EXPECT_EQ(c.counts.at("Alpha"), 1);
  EXPECT_EQ(c.Total(), 2);
}

TEST_F(LoadTest, UnknownGenus) {
  images_[0].instances[0].genus = "Gamma";
  WriteManifest();
  EXPECT_EQ(LoadKind(), ErrorKind::kValidation);
}

TEST_F(LoadTest, OutOfBoundsAndDegenerate) {
  images_[0].instances[0].box.x2 = 41;
  WriteManifest();
  EXPECT_EQ(LoadKind(), ErrorKind::kValidation);
  images_[0].instances[0].box = {5, 5, 5, 9};
  WriteManifest();
  EXPECT_EQ(LoadKind(), ErrorKind::kValidation);
}

TEST_F(LoadTest, DuplicateIds) {
  images_.push_back(images_[0]);
  WriteManifest();
  EXPECT_EQ(LoadKind(), ErrorKind::kValidation);
}

TEST_F(LoadTest, MalformedRecords) {
  testing::WriteFile(dir_ / "annotations.jsonl", "{\"image_id\": \"a\",\n");
  EXPECT_EQ(LoadKind(), ErrorKind::kIngestion);
  testing::WriteFile(dir_ / "annotations.jsonl", "{\"image_id\": \"a\", \"file\": \"images/a.png\"}\n");
  EXPECT_EQ(LoadKind(), ErrorKind::kIngestion);
}

TEST_F(LoadTest, MissingFiles) {
  WriteManifest();
  std::filesystem::remove(dir_ / "images/a.png");
  EXPECT_NE(LoadKind(), ErrorKind::kValidation);
  std::filesystem::remove(dir_ / "taxonomy.csv");
  EXPECT_EQ(LoadKind(), ErrorKind::kIngestion);
}

TEST_F(LoadTest, PixelSizeMismatch) {
  images_[0].width = 50;
  WriteManifest();
  EXPECT_EQ(LoadKind(), ErrorKind::kIngestion);
}

TEST(RelabelTest, TotalMapRequired) {
  std::vector<AnnotatedImage> ims(1);
  ims[0].instances = {{{0, 0, 1, 1}, "A"}, {{0, 0, 1, 1}, "B"}};
  RelabelGenera(ims, {{"A", "A"}, {"B", "else"}});
  EXPECT_EQ(ims[0].instances[1].genus, "else");
  try {
    RelabelGenera(ims, {{"A", "A"}});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kLookup);
  }
}

}  // namespace
}  // namespace mtdet
