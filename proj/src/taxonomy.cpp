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
#include "mtdet/taxonomy.hpp"

#include <algorithm>
#include <set>

#include "mtdet/errors.hpp"
#include "mtdet/rng.hpp"

namespace mtdet {

Taxonomy::Taxonomy(std::vector<std::string> classes,
                   const std::vector<std::pair<std::string, std::string>>& genus_class)
    : classes_(std::move(classes)) {
  if (static_cast<int>(classes_.size()) != kNumBiologicalClasses) {
    Fail(ErrorKind::kConfiguration,
         "taxonomy must declare exactly 6 classes, got " + std::to_string(classes_.size()));
  }
  std::set<std::string> seen;
  for (const auto& c : classes_) {
    if (c.empty()) Fail(ErrorKind::kConfiguration, "empty class name");
    if (!seen.insert(c).second) Fail(ErrorKind::kConfiguration, "duplicate class '" + c + "'");
  }
  if (!seen.count(std::string(kOthersClass))) {
    Fail(ErrorKind::kConfiguration, "class list must include \"Others\"");
  }
  const int others = ClassIndex(kOthersClass);
  for (const auto& [genus, cls] : genus_class) {
    if (genus.empty()) Fail(ErrorKind::kConfiguration, "empty genus name");
    if (genus_index_.count(genus)) {
      Fail(ErrorKind::kConfiguration, "duplicate genus '" + genus + "'");
    }
    auto it = std::find(classes_.begin(), classes_.end(), cls);
    const int ci = it == classes_.end() ? others : static_cast<int>(it - classes_.begin());
    genus_index_.emplace(genus, static_cast<int>(genera_.size()));
    genera_.push_back(genus);
    genus_class_.push_back(ci);
  }
}

bool Taxonomy::HasGenus(std::string_view genus) const {
  return genus_index_.count(std::string(genus)) > 0;
}

int Taxonomy::GenusIndex(std::string_view genus) const {
  auto it = genus_index_.find(std::string(genus));
  if (it == genus_index_.end()) {
    Fail(ErrorKind::kLookup, "unknown genus '" + std::string(genus) + "'");
  }
  return it->second;
}

int Taxonomy::ClassIndex(std::string_view cls) const {
  auto it = std::find(classes_.begin(), classes_.end(), cls);
  if (it == classes_.end()) Fail(ErrorKind::kLookup, "unknown class '" + std::string(cls) + "'");
  return static_cast<int>(it - classes_.begin());
}

const std::string& Taxonomy::ClassOf(std::string_view genus) const {
  return classes_[genus_class_[GenusIndex(genus)]];
}

uint64_t Taxonomy::Fingerprint() const {
  std::string canon = "classes";
  for (const auto& c : classes_) canon += "|" + c;
  canon += "#genera";
  for (size_t i = 0; i < genera_.size(); ++i) {
    canon += "|" + genera_[i] + "=" + classes_[genus_class_[i]];
  }
  return HashString(canon);
}

std::vector<std::pair<std::string, std::string>> Taxonomy::Pairs() const {
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(genera_.size());
  for (size_t i = 0; i < genera_.size(); ++i) out.emplace_back(genera_[i], classes_[genus_class_[i]]);
  return out;
}

int64_t GenusCensus::Total() const {
  int64_t total = 0;
  for (const auto& [_, n] : counts) total += n;
  return total;
}

MergeResult MergeRareGenera(const GenusCensus& census, const Taxonomy& taxonomy,
                            int64_t threshold) {
  if (!taxonomy.HasGenus(kElseGenus)) {
    Fail(ErrorKind::kConfiguration, "taxonomy has no \"else\" genus to merge rare genera into");
  }
  for (const auto& [genus, n] : census.counts) {
    if (!taxonomy.HasGenus(genus)) {
      Fail(ErrorKind::kIngestion, "census genus '" + genus + "' is not in the taxonomy");
    }
    if (n < 0) Fail(ErrorKind::kIngestion, "negative count for genus '" + genus + "'");
  }

  MergeResult result;
  std::vector<std::pair<std::string, std::string>> kept;
  for (const auto& [genus, cls] : taxonomy.Pairs()) {
    auto it = census.counts.find(genus);
    const int64_t n = it == census.counts.end() ? 0 : it->second;
    const bool retain = genus == kElseGenus || n >= threshold;
    const std::string target = retain ? genus : std::string(kElseGenus);
    result.relabel[genus] = target;
    result.merged_census.counts[target] += n;
    if (retain) kept.emplace_back(genus, cls);
  }
  result.taxonomy = Taxonomy(taxonomy.classes(), kept);
  return result;
}

const std::string& GenusToClass(const Taxonomy& taxonomy, std::string_view genus) {
  return taxonomy.ClassOf(genus);
}

std::vector<std::string> RollUpLabels(std::span<const std::string> genera,
                                      const Taxonomy& taxonomy) {
  std::vector<std::string> out;
  out.reserve(genera.size());
  for (const auto& g : genera) out.push_back(taxonomy.ClassOf(g));
  return out;
}

}  // namespace mtdet
