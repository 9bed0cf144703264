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

#include "fixtures.hpp"
#include "mtdet/errors.hpp"
#include "mtdet/rng.hpp"
#include "mtdet/taxonomy.hpp"

namespace mtdet {
namespace {

Taxonomy SmallTaxonomy() {
  return Taxonomy(testing::DeskClasses(), {{"Cymbella", "Bacillariophyta"},
                                           {"Scenedesmus", "Chlorophyta"},
                                           {"Pediastrum", "Chlorophyta"},
                                           {"Mystery", "Euglenophyta"},
                                           {"else", "Others"}});
}

ErrorKind KindOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kUsage;
}

TEST(TaxonomyTest, RejectsBadClassLists) {
  auto classes = testing::DeskClasses();
  classes.pop_back();
  EXPECT_EQ(KindOf([&] { Taxonomy(classes, {}); }), ErrorKind::kConfiguration);
  classes.push_back("Bacillariophyta");
  EXPECT_EQ(KindOf([&] { Taxonomy(classes, {}); }), ErrorKind::kConfiguration);
  auto no_others = testing::DeskClasses();
  no_others.back() = "Euglenophyta";
  EXPECT_EQ(KindOf([&] { Taxonomy(no_others, {}); }), ErrorKind::kConfiguration);
  EXPECT_EQ(KindOf([&] { Taxonomy(testing::DeskClasses(), {{"A", "Others"}, {"A", "Others"}}); }),
            ErrorKind::kConfiguration);
}

TEST(TaxonomyTest, GenusToClass) {
  const Taxonomy t = SmallTaxonomy();
  EXPECT_EQ(GenusToClass(t, "Pediastrum"), "Chlorophyta");
  EXPECT_EQ(GenusToClass(t, "Mystery"), "Others");
  EXPECT_EQ(GenusToClass(t, "else"), "Others");
  EXPECT_EQ(KindOf([&] { GenusToClass(t, "Xyz"); }), ErrorKind::kLookup);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(GenusToClass(t, "Cymbella"), "Bacillariophyta");
}

TEST(TaxonomyTest, RollUpLabels) {
  const Taxonomy t = SmallTaxonomy();
  EXPECT_TRUE(RollUpLabels({}, t).empty());
  const std::vector<std::string> in = {"Cymbella", "Scenedesmus"};
  EXPECT_EQ(RollUpLabels(in, t), (std::vector<std::string>{"Bacillariophyta", "Chlorophyta"}));
  const std::vector<std::string> bad = {"Cymbella", "Xyz"};
  std::vector<std::string> out = {"sentinel"};
  EXPECT_THROW(out = RollUpLabels(bad, t), Error);
  EXPECT_EQ(out, std::vector<std::string>{"sentinel"});
}

TEST(TaxonomyTest, FingerprintTracksContent) {
  EXPECT_EQ(SmallTaxonomy().Fingerprint(), SmallTaxonomy().Fingerprint());
  const Taxonomy other(testing::DeskClasses(), {{"Cymbella", "Chlorophyta"}, {"else", "Others"}});
  EXPECT_NE(SmallTaxonomy().Fingerprint(), other.Fingerprint());
}

TEST(MergeRareGeneraTest, ThresholdIsStrict) {
  const Taxonomy t = SmallTaxonomy();
  GenusCensus c;
  c.counts = {{"Cymbella", 9}, {"Scenedesmus", 10}, {"Pediastrum", 40}, {"Mystery", 0}, {"else", 3}};
  const MergeResult m = MergeRareGenera(c, t);
  EXPECT_EQ(m.relabel.at("Cymbella"), "else");
  EXPECT_EQ(m.relabel.at("Scenedesmus"), "Scenedesmus");
  EXPECT_EQ(m.relabel.at("Mystery"), "else");
  EXPECT_EQ(m.relabel.at("else"), "else");
  EXPECT_EQ(m.taxonomy.genera(), (std::vector<std::string>{"Scenedesmus", "Pediastrum", "else"}));
  EXPECT_EQ(m.merged_census.counts.at("else"), 12);
  EXPECT_EQ(m.merged_census.Total(), c.Total());
}

TEST(MergeRareGeneraTest, Errors) {
  const Taxonomy no_else(testing::DeskClasses(), {{"Cymbella", "Bacillariophyta"}});
  EXPECT_EQ(KindOf([&] { MergeRareGenera({}, no_else); }), ErrorKind::kConfiguration);
  GenusCensus unknown;
  unknown.counts["Xyz"] = 3;
  EXPECT_EQ(KindOf([&] { MergeRareGenera(unknown, SmallTaxonomy()); }), ErrorKind::kIngestion);
}

TEST(MergeRareGeneraTest, ThirtySevenToTwentySeven) {
  const auto f = testing::MakeCensus37();
  ASSERT_EQ(f.taxonomy.num_genera(), 38);
  ASSERT_EQ(f.census.counts.size(), 37u);
  const MergeResult m = MergeRareGenera(f.census, f.taxonomy);
  EXPECT_EQ(m.taxonomy.num_genera(), 27);
  EXPECT_EQ(m.merged_census.Total(), f.census.Total());
  EXPECT_EQ(m.relabel.size(), 38u);
  int below = 0;
  for (const auto& [g, n] : f.census.counts) below += (g != "else" && n < 10);
  EXPECT_EQ(below + 1, 11);  // Genus36 is absent from the census
}

TEST(MergeRareGeneraTest, RandomCensusProperties) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng.UniformInt(1, 30));
    std::vector<std::pair<std::string, std::string>> pairs;
    GenusCensus c;
    for (int i = 0; i < n; ++i) {
      const std::string g = "G" + std::to_string(i);
      pairs.emplace_back(g, testing::DeskClasses()[rng.UniformInt(0, 5)]);
      if (rng.Bernoulli(0.9)) c.counts[g] = rng.UniformInt(0, 25);
    }
    pairs.emplace_back("else", "Others");
    const Taxonomy t(testing::DeskClasses(), pairs);
    const int64_t threshold = rng.UniformInt(1, 15);
    const MergeResult m = MergeRareGenera(c, t, threshold);
    EXPECT_EQ(m.merged_census.Total(), c.Total());
    EXPECT_EQ(m.relabel.size(), static_cast<size_t>(t.num_genera()));
    for (const auto& g : m.taxonomy.genera()) {
      if (g == "else") continue;
      EXPECT_GE(m.merged_census.counts.at(g), threshold);
      EXPECT_FALSE(GenusToClass(m.taxonomy, g).empty());
    }
    EXPECT_TRUE(m.taxonomy.HasGenus("else"));
    for (const auto& [from, to] : m.relabel) EXPECT_TRUE(m.taxonomy.HasGenus(to)) << from;
  }
}

}  // namespace
}  // namespace mtdet
