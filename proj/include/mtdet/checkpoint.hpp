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
#ifndef MTDET_CHECKPOINT_HPP_
#define MTDET_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "mtdet/data.hpp"
#include "mtdet/model.hpp"
#include "mtdet/taxonomy.hpp"

namespace mtdet {

// Everything needed to rebuild the evaluation view of a training run.
struct CheckpointMeta {
  ModelConfig model;
  Taxonomy taxonomy;                // after the rare-genus merge
  uint64_t source_fingerprint = 0;  // taxonomy the dataset was loaded with
  std::map<std::string, std::string> relabel;
  NormalizationStats stats;
  int64_t step = 0;
  uint64_t split_seed = 0;
  bool holdout = true;  // false: every image was used for training
  double lambda = 0;
};

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::unique_ptr<Detector> detector;
};

// Layout: 8-byte magic, little-endian uint64 header size, JSON header, then
// float32 parameter values in header order. Written atomically via rename.
void SaveCheckpoint(const std::filesystem::path& path, const Detector& detector,
                    const CheckpointMeta& meta);
LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& path);

// Validation error unless `source` is the taxonomy the checkpoint was trained on.
void VerifyTaxonomy(const CheckpointMeta& meta, const Taxonomy& source);

nlohmann::json TaxonomyToJson(const Taxonomy& taxonomy);
Taxonomy TaxonomyFromJson(const nlohmann::json& j);

}  // namespace mtdet

#endif  // MTDET_CHECKPOINT_HPP_
