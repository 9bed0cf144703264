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
#ifndef MTDET_TESTS_FIXTURES_HPP_
#define MTDET_TESTS_FIXTURES_HPP_

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "mtdet/eval.hpp"
#include "mtdet/taxonomy.hpp"

namespace mtdet::testing {

inline std::vector<std::string> DeskClasses() {
  return {"Bacillariophyta", "Chlorophyta", "Cyanophyta", "Cryptophyceae", "Pyrrophyta", "Others"};
}

// 37 named genera plus a pre-existing "else"; Genus26..Genus36 sit below
// the merge threshold.
struct Census37 {
  Taxonomy taxonomy;
  GenusCensus census;
};

inline Census37 MakeCensus37() {
  const auto classes = DeskClasses();
  std::vector<std::pair<std::string, std::string>> pairs;
  GenusCensus census;
  for (int i = 0; i < 36; ++i) {
    char name[16];
    std::snprintf(name, sizeof(name), "Genus%02d", i);
    pairs.emplace_back(name, classes[i % 5]);
    // 26 common genera with 10..135 instances, 10 rare ones with 0..9.
    census.counts[name] = i < 26 ? 10 + 5 * (25 - i) : (i - 26);
  }
  // An eleventh sub-threshold genus: present in the taxonomy, absent from
  // the census (count 0).
  pairs.emplace_back("Genus36", classes[1]);
  pairs.emplace_back("else", "Others");
  census.counts["else"] = 4;
  return {Taxonomy(classes, pairs), census};
}

// Deterministic 27-genus report for layout tests.
inline EvalReport Canned27GenusReport() {
  EvalReport r;
  r.num_images = 372;
  const int64_t counts[27] = {410, 322, 301, 250, 233, 190, 166, 150, 131, 120, 99, 87, 80, 71,
                              64,  55,  48,  40,  33,  28,  22,  19,  15,  13,  11,  10, 30};
  int64_t total = 0;
  for (int64_t c : counts) total += c;
  double ap_sum = 0;
  for (int i = 0; i < 27; ++i) {
    LabelScore s;
    s.name = i == 26 ? std::string("else") : "Genus" + std::to_string(i);
    s.ap = 0.5 + 0.015625 * i;
    s.instances = counts[i];
    s.percentage = 100.0 * static_cast<double>(counts[i]) / static_cast<double>(total);
    ap_sum += *s.ap;
    r.genera.push_back(s);
  }
  r.map_genus = ap_sum / 27;
  const auto classes = DeskClasses();
  const double class_pct[6] = {40, 25, 15, 10, 6, 4};
  double class_sum = 0;
  for (int c = 0; c < 6; ++c) {
    r.classes.push_back({classes[c], 0.75 + 0.03125 * c, static_cast<int64_t>(class_pct[c] * 10), class_pct[c]});
    class_sum += 0.75 + 0.03125 * c;
  }
  r.map_class = class_sum / 6;
  r.aca_genus = 0.9375;
  r.aca_class = 0.984375;
  return r;
}

}  // namespace mtdet::testing

#endif  // MTDET_TESTS_FIXTURES_HPP_
