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
#include "mtdet/report.hpp"

namespace mtdet {
namespace {

std::vector<ReportRow> TableRows(const std::vector<ReportRow>& rows, const std::string& table) {
  std::vector<ReportRow> out;
  for (const auto& r : rows) {
    if (r.table == table) out.push_back(r);
  }
  return out;
}

TEST(ReportTest, TwentySevenGeneraFoldIntoEightPlusRest) {
  const EvalReport rep = testing::Canned27GenusReport();
  const auto rows = ReportRows(rep);
  const auto genus = TableRows(rows, "genus");
  ASSERT_EQ(genus.size(), 10u);
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(genus[i].name, "Genus" + std::to_string(i));
    EXPECT_EQ(genus[i].value, rep.genera[i].ap);
    if (i > 0) {
      EXPECT_GE(*genus[i - 1].percentage, *genus[i].percentage);
    }
  }
  EXPECT_EQ(genus[8].name, "The rest 19 genera");
  double rest_pct = 0, rest_ap = 0;
  for (int i = 8; i < 27; ++i) {
    rest_pct += rep.genera[i].percentage;
    rest_ap += *rep.genera[i].ap;
  }
  EXPECT_NEAR(*genus[8].percentage, rest_pct, 1e-9);
  EXPECT_NEAR(*genus[8].value, rest_ap / 19, 1e-12);
  EXPECT_EQ(genus[9].name, "Total");
  EXPECT_EQ(genus[9].value, rep.map_genus);
  EXPECT_EQ(genus[9].percentage, 100.0);
  double named_and_rest = rest_pct;
  for (int i = 0; i < 8; ++i) named_and_rest += *genus[i].percentage;
  EXPECT_NEAR(named_and_rest, 100.0, 1e-9);

  const auto cls = TableRows(rows, "class");
  ASSERT_EQ(cls.size(), 7u);
  EXPECT_EQ(cls.front().name, "Bacillariophyta");
  EXPECT_EQ(cls.back().name, "Total");
  EXPECT_EQ(cls.back().value, rep.map_class);
  const auto metric = TableRows(rows, "metric");
  ASSERT_EQ(metric.size(), 2u);
  EXPECT_EQ(metric[0], (ReportRow{"metric", "aca_genus", 0.9375, std::nullopt}));
  EXPECT_EQ(metric[1], (ReportRow{"metric", "aca_class", 0.984375, std::nullopt}));
}

TEST(ReportTest, FewGeneraHaveNoRestRow) {
  EvalReport rep;
  rep.genera = {{"A", 0.5, 2, 20}, {"B", std::nullopt, 0, 0}, {"C", 1.0, 8, 80}};
  rep.classes = {{"X", 0.25, 10, 100}};
  rep.map_genus = 0.75;
  rep.map_class = 0.25;
  const auto genus = TableRows(ReportRows(rep), "genus");
  ASSERT_EQ(genus.size(), 4u);
  EXPECT_EQ(genus[0].name, "C");
  EXPECT_EQ(genus[1].name, "A");
  EXPECT_EQ(genus[2].name, "B");
  EXPECT_FALSE(genus[2].value.has_value());
  EXPECT_EQ(genus[3].name, "Total");
  const std::string csv = EmitReportCsv(rep);
  EXPECT_EQ(csv,
            "table,name,value,instance_percentage\n"
            "genus,C,1,80\n"
            "genus,A,0.5,20\n"
            "genus,B,NA,0\n"
            "genus,Total,0.75,100\n"
            "class,X,0.25,100\n"
            "class,Total,0.25,100\n"
            "metric,aca_genus,NA,\n"
            "metric,aca_class,NA,\n");
  // A smaller cutoff folds the tail, whose AP averages only defined entries.
  const auto folded = TableRows(ReportRows(rep, {.cutoff = 1}), "genus");
  ASSERT_EQ(folded.size(), 3u);
  EXPECT_EQ(folded[1].name, "The rest 2 genera");
  EXPECT_EQ(folded[1].value, 0.5);
  EXPECT_EQ(folded[1].percentage, 20.0);
}

TEST(ReportTest, CsvIsByteStableAndRoundTrips) {
  const EvalReport rep = testing::Canned27GenusReport();
  const std::string a = EmitReportCsv(rep), b = EmitReportCsv(testing::Canned27GenusReport());
  EXPECT_EQ(a, b);
  EXPECT_EQ(ParseReportCsv(a), ReportRows(rep));
  EXPECT_EQ(EmitReportText(rep), EmitReportText(rep));
  for (const char* bad : {"", "wrong,header\n", "table,name,value,instance_percentage\ngenus,A,zz,1\n",
                          "table,name,value,instance_percentage\ngenus,A,1\n"}) {
    try {
      ParseReportCsv(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kIngestion);
    }
  }
}

TEST(ReportTest, TextLayout) {
  const std::string text = EmitReportText(testing::Canned27GenusReport());
  EXPECT_NE(text.find("Genus-level detection, IoU >= 0.50 (372 images)"), std::string::npos);
  EXPECT_NE(text.find("Class-level detection"), std::string::npos);
  EXPECT_NE(text.find("The rest 19 genera"), std::string::npos);
  EXPECT_NE(text.find("ACA genus: 93.75%  class: 98.44%"), std::string::npos);
  EXPECT_NE(text.find("mAP(%)"), std::string::npos);
}

TEST(FormatNumberTest, ShortestRoundTrip) {
  EXPECT_EQ(FormatNumber(0.1), "0.1");
  EXPECT_EQ(FormatNumber(1.0), "1");
  EXPECT_EQ(FormatNumber(5.0 / 6.0), "0.8333333333333334");
  EXPECT_EQ(FormatNumber(std::nullopt), "NA");
  EXPECT_EQ(FormatNumber(-0.25), "-0.25");
}

}  // namespace
}  // namespace mtdet
