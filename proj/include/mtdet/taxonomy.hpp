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
#ifndef MTDET_TAXONOMY_HPP_
#define MTDET_TAXONOMY_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mtdet {

inline constexpr std::string_view kElseGenus = "else";
inline constexpr std::string_view kOthersClass = "Others";
inline constexpr int kNumBiologicalClasses = 6;

// Two-level genus -> biological class hierarchy. Immutable once built.
class Taxonomy {
 public:
  Taxonomy() = default;

  // `classes` must hold exactly six unique names including "Others".
  // A genus declared with a class outside that list is assigned to "Others".
  Taxonomy(std::vector<std::string> classes,
           const std::vector<std::pair<std::string, std::string>>& genus_class);

  const std::vector<std::string>& genera() const { return genera_; }
  const std::vector<std::string>& classes() const { return classes_; }
  int num_genera() const { return static_cast<int>(genera_.size()); }
  int num_classes() const { return static_cast<int>(classes_.size()); }

  bool HasGenus(std::string_view genus) const;
  // Throws a lookup error for unknown names.
  int GenusIndex(std::string_view genus) const;
  int ClassIndex(std::string_view cls) const;
  int ClassIndexOfGenus(int genus_index) const { return genus_class_[genus_index]; }
  const std::string& ClassOf(std::string_view genus) const;

  // Stable 64-bit digest over the ordered classes and genus->class pairs.
  uint64_t Fingerprint() const;

  std::vector<std::pair<std::string, std::string>> Pairs() const;

 private:
  std::vector<std::string> genera_;
  std::vector<std::string> classes_;
  std::vector<int> genus_class_;
  std::unordered_map<std::string, int> genus_index_;
};

struct GenusCensus {
  std::map<std::string, int64_t> counts;

  int64_t Total() const;
};

struct MergeResult {
  Taxonomy taxonomy;
  // Total over the input genera: genus -> genus it is relabeled to.
  std::map<std::string, std::string> relabel;
  GenusCensus merged_census;
};

// Relabels every genus with fewer than `threshold` instances to "else".
MergeResult MergeRareGenera(const GenusCensus& census, const Taxonomy& taxonomy,
                            int64_t threshold = 10);

const std::string& GenusToClass(const Taxonomy& taxonomy, std::string_view genus);

// Maps genus labels to their classes. Either every label resolves or a lookup
// error is thrown before anything is returned.
std::vector<std::string> RollUpLabels(std::span<const std::string> genera,
                                      const Taxonomy& taxonomy);

}  // namespace mtdet

#endif  // MTDET_TAXONOMY_HPP_
