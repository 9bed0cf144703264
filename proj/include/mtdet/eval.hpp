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
#ifndef MTDET_EVAL_HPP_
#define MTDET_EVAL_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtdet/data.hpp"
#include "mtdet/geometry.hpp"
#include "mtdet/taxonomy.hpp"

namespace mtdet {

struct LabeledBox {
  BoundingBox box;
  int label = 0;
};

struct ScoredLabel {
  BoundingBox box;
  int label = 0;
  double score = 0;
};

// Per image, per detection: the matched ground-truth index or -1.
struct MatchResult {
  double iou_threshold = 0.5;
  std::vector<std::vector<int>> detection_match;
  std::vector<std::vector<bool>> gt_matched;

  bool IsTruePositive(size_t image, size_t det) const { return detection_match[image][det] >= 0; }
};

// Greedy in descending score (ties broken by box coordinates, then label, so
// the result does not depend on input order). A detection is a true positive
// when its highest-IoU ground truth of the same label (lowest index on ties)
// clears the threshold and is still unmatched. With `label_agnostic` the
// label gate is dropped.
MatchResult MatchDetections(std::span<const std::vector<ScoredLabel>> detections,
                            std::span<const std::vector<LabeledBox>> ground_truth,
                            double iou_threshold = 0.5, bool label_agnostic = false);

// All-point interpolated AP over pooled detections of one label, ordered by
// descending score with ties in input order. nullopt when num_gt == 0.
std::optional<double> AveragePrecision(std::span<const double> scores, std::span<const uint8_t> tp,
                                       int64_t num_gt);

// Per-label AP for labels [0, num_labels); nullopt where the label has no GT.
std::vector<std::optional<double>> PerLabelAp(std::span<const std::vector<ScoredLabel>> detections,
                                              std::span<const std::vector<LabeledBox>> ground_truth,
                                              int num_labels, double iou_threshold = 0.5);

// Unweighted mean over defined APs; validation error when none is defined.
double MeanAp(std::span<const std::optional<double>> aps);

// Macro-averaged label accuracy over localization-matched pairs; nullopt
// without any matched pair. `label_map` optionally coarsens labels first.
std::optional<double> AverageClassificationAccuracy(
    std::span<const std::vector<ScoredLabel>> detections,
    std::span<const std::vector<LabeledBox>> ground_truth, int num_labels,
    double iou_threshold = 0.5, std::span<const int> label_map = {});

struct EvalDetection {
  BoundingBox box;
  std::string genus;
  double confidence = 0;
};

struct LabelScore {
  std::string name;
  std::optional<double> ap;
  int64_t instances = 0;
  double percentage = 0;
};

struct EvalReport {
  std::vector<LabelScore> genera;   // taxonomy order
  std::vector<LabelScore> classes;  // taxonomy order
  double map_genus = 0;
  double map_class = 0;
  std::optional<double> aca_genus;
  std::optional<double> aca_class;
  int num_images = 0;

  // Range and percentage-sum checks; numeric error on violation.
  void Validate() const;
};

// Scores per-image detections against per-image ground truth. Genus names on
// both sides must resolve in `taxonomy` (lookup error otherwise).
EvalReport Evaluate(std::span<const std::vector<Instance>> ground_truth,
                    std::span<const std::vector<EvalDetection>> detections, const Taxonomy& taxonomy,
                    double iou_threshold = 0.5);

struct DetectionRecord {
  std::string image_id;
  EvalDetection detection;
};

// Line-delimited JSON: image_id, x1, y1, x2, y2, genus, confidence.
void WriteDetections(const std::filesystem::path& path, std::span<const DetectionRecord> records);
std::vector<DetectionRecord> ReadDetections(const std::filesystem::path& path);

}  // namespace mtdet

#endif  // MTDET_EVAL_HPP_
