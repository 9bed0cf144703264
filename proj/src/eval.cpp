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
#include "mtdet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "mtdet/errors.hpp"

namespace mtdet {
using nlohmann::json;

namespace {

std::vector<int> ScoreOrder(const std::vector<ScoredLabel>& dets) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const ScoredLabel& x = dets[a];
    const ScoredLabel& y = dets[b];
    if (x.score != y.score) return x.score > y.score;
    if (x.box.x1 != y.box.x1) return x.box.x1 < y.box.x1;
    if (x.box.y1 != y.box.y1) return x.box.y1 < y.box.y1;
    if (x.box.x2 != y.box.x2) return x.box.x2 < y.box.x2;
    if (x.box.y2 != y.box.y2) return x.box.y2 < y.box.y2;
    if (x.label != y.label) return x.label < y.label;
    return a < b;
  });
  return order;
}

}  // namespace

MatchResult MatchDetections(std::span<const std::vector<ScoredLabel>> detections,
                            std::span<const std::vector<LabeledBox>> ground_truth,
                            double iou_threshold, bool label_agnostic) {
  if (detections.size() != ground_truth.size()) {
    Fail(ErrorKind::kValidation, "detections cover " + std::to_string(detections.size()) +
                                     " images but ground truth covers " +
                                     std::to_string(ground_truth.size()));
  }
  MatchResult m;
  m.iou_threshold = iou_threshold;
  m.detection_match.resize(detections.size());
  m.gt_matched.resize(detections.size());
  for (size_t im = 0; im < detections.size(); ++im) {
    const auto& dets = detections[im];
    const auto& gts = ground_truth[im];
    m.detection_match[im].assign(dets.size(), -1);
    m.gt_matched[im].assign(gts.size(), false);
    for (int d : ScoreOrder(dets)) {
      int best = -1;
      double best_iou = -1;
      for (size_t g = 0; g < gts.size(); ++g) {
        if (!label_agnostic && gts[g].label != dets[d].label) continue;
        const double v = IouUnchecked(dets[d].box, gts[g].box);
        if (v > best_iou) {
          best_iou = v;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0 && best_iou >= iou_threshold && !m.gt_matched[im][best]) {
        m.gt_matched[im][best] = true;
        m.detection_match[im][d] = best;
      }
    }
  }
  return m;
}

std::optional<double> AveragePrecision(std::span<const double> scores, std::span<const uint8_t> tp,
                                       int64_t num_gt) {
  if (scores.size() != tp.size()) Fail(ErrorKind::kValidation, "scores and flags differ in length");
  if (num_gt <= 0) return std::nullopt;
  const int64_t hits = std::count_if(tp.begin(), tp.end(), [](uint8_t v) { return v != 0; });
  if (hits > num_gt) {
    Fail(ErrorKind::kValidation, std::to_string(hits) + " true positives for " + std::to_string(num_gt) +
                                     " ground truth boxes");
  }
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  // Extended precision keeps simple fractions correctly rounded (5/6, not
  // one ulp below it).
  std::vector<long double> precision(order.size());
  int64_t seen_tp = 0;
  for (size_t k = 0; k < order.size(); ++k) {
    if (tp[order[k]]) ++seen_tp;
    precision[k] = static_cast<long double>(seen_tp) / static_cast<long double>(k + 1);
  }
  for (size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  // Every true positive raises recall by exactly 1 / num_gt.
  long double sum = 0;
  for (size_t k = 0; k < order.size(); ++k) {
    if (tp[order[k]]) sum += precision[k];
  }
  return static_cast<double>(sum / static_cast<long double>(num_gt));
}

std::vector<std::optional<double>> PerLabelAp(std::span<const std::vector<ScoredLabel>> detections,
                                              std::span<const std::vector<LabeledBox>> ground_truth,
                                              int num_labels, double iou_threshold) {
  const MatchResult m = MatchDetections(detections, ground_truth, iou_threshold, false);
  std::vector<std::vector<double>> scores(num_labels);
  std::vector<std::vector<uint8_t>> flags(num_labels);
  std::vector<int64_t> num_gt(num_labels, 0);
  for (size_t im = 0; im < detections.size(); ++im) {
    for (const auto& g : ground_truth[im]) {
      if (g.label < 0 || g.label >= num_labels) Fail(ErrorKind::kValidation, "ground truth label out of range");
      ++num_gt[g.label];
    }
    // Content order, so tied scores do not depend on how the caller listed them.
    for (int d : ScoreOrder(detections[im])) {
      const int l = detections[im][d].label;
      if (l < 0 || l >= num_labels) Fail(ErrorKind::kValidation, "detection label out of range");
      scores[l].push_back(detections[im][d].score);
      flags[l].push_back(m.IsTruePositive(im, d) ? 1 : 0);
    }
  }
  std::vector<std::optional<double>> out(num_labels);
  for (int l = 0; l < num_labels; ++l) out[l] = AveragePrecision(scores[l], flags[l], num_gt[l]);
  return out;
}

double MeanAp(std::span<const std::optional<double>> aps) {
  double sum = 0;
  int n = 0;
  for (const auto& a : aps) {
    if (a) {
      sum += *a;
      ++n;
    }
  }
  if (n == 0) Fail(ErrorKind::kValidation, "no label has ground truth; mAP is undefined");
  return sum / n;
}

std::optional<double> AverageClassificationAccuracy(
    std::span<const std::vector<ScoredLabel>> detections,
    std::span<const std::vector<LabeledBox>> ground_truth, int num_labels, double iou_threshold,
    std::span<const int> label_map) {
  const MatchResult m = MatchDetections(detections, ground_truth, iou_threshold, true);
  auto mapped = [&](int l) { return label_map.empty() ? l : label_map[l]; };
  std::vector<int64_t> matched(num_labels, 0), correct(num_labels, 0);
  for (size_t im = 0; im < detections.size(); ++im) {
    for (size_t d = 0; d < detections[im].size(); ++d) {
      const int g = m.detection_match[im][d];
      if (g < 0) continue;
      const int truth = mapped(ground_truth[im][g].label);
      ++matched[truth];
      if (mapped(detections[im][d].label) == truth) ++correct[truth];
    }
  }
  double sum = 0;
  int n = 0;
  for (int l = 0; l < num_labels; ++l) {
    if (matched[l] == 0) continue;
    sum += static_cast<double>(correct[l]) / static_cast<double>(matched[l]);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

void EvalReport::Validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  auto check_table = [&](const std::vector<LabelScore>& rows, const char* what) {
    double pct = 0;
    int64_t inst = 0;
    for (const auto& r : rows) {
      if (r.ap && !in_unit(*r.ap)) Fail(ErrorKind::kNumeric, std::string(what) + " AP outside [0, 1] for " + r.name);
      pct += r.percentage;
      inst += r.instances;
    }
    if (inst > 0 && std::abs(pct - 100.0) > 1e-6) {
      Fail(ErrorKind::kNumeric, std::string(what) + " instance percentages do not sum to 100");
    }
  };
  check_table(genera, "genus");
  check_table(classes, "class");
  if (!in_unit(map_genus) || !in_unit(map_class)) Fail(ErrorKind::kNumeric, "mAP outside [0, 1]");
  if ((aca_genus && !in_unit(*aca_genus)) || (aca_class && !in_unit(*aca_class))) {
    Fail(ErrorKind::kNumeric, "ACA outside [0, 1]");
  }
}

EvalReport Evaluate(std::span<const std::vector<Instance>> ground_truth,
                    std::span<const std::vector<EvalDetection>> detections, const Taxonomy& taxonomy,
                    double iou_threshold) {
  if (ground_truth.size() != detections.size()) {
    Fail(ErrorKind::kValidation, "detections and ground truth cover different image counts");
  }
  const int ng = taxonomy.num_genera();
  const int nc = taxonomy.num_classes();
  std::vector<int> to_class(ng);
  for (int g = 0; g < ng; ++g) to_class[g] = taxonomy.ClassIndexOfGenus(g);

  std::vector<std::vector<LabeledBox>> gt_genus(ground_truth.size()), gt_class(ground_truth.size());
  std::vector<std::vector<ScoredLabel>> det_genus(detections.size()), det_class(detections.size());
  for (size_t im = 0; im < ground_truth.size(); ++im) {
    for (const auto& inst : ground_truth[im]) {
      const int g = taxonomy.GenusIndex(inst.genus);
      gt_genus[im].push_back({inst.box, g});
      gt_class[im].push_back({inst.box, to_class[g]});
    }
    for (const auto& d : detections[im]) {
      const int g = taxonomy.GenusIndex(d.genus);
      det_genus[im].push_back({d.box, g, d.confidence});
      det_class[im].push_back({d.box, to_class[g], d.confidence});
    }
  }

  EvalReport r;
  r.num_images = static_cast<int>(ground_truth.size());
  const auto genus_ap = PerLabelAp(det_genus, gt_genus, ng, iou_threshold);
  const auto class_ap = PerLabelAp(det_class, gt_class, nc, iou_threshold);
  r.map_genus = MeanAp(genus_ap);
  r.map_class = MeanAp(class_ap);
  r.aca_genus = AverageClassificationAccuracy(det_genus, gt_genus, ng, iou_threshold);
  r.aca_class = AverageClassificationAccuracy(det_genus, gt_genus, nc, iou_threshold, to_class);

  std::vector<int64_t> genus_count(ng, 0), class_count(nc, 0);
  int64_t total = 0;
  for (const auto& img : gt_genus) {
    for (const auto& b : img) {
      ++genus_count[b.label];
      ++class_count[to_class[b.label]];
      ++total;
    }
  }
  auto pct = [&](int64_t n) { return total ? 100.0 * static_cast<double>(n) / static_cast<double>(total) : 0.0; };
  for (int g = 0; g < ng; ++g) {
    r.genera.push_back({taxonomy.genera()[g], genus_ap[g], genus_count[g], pct(genus_count[g])});
  }
  for (int c = 0; c < nc; ++c) {
    r.classes.push_back({taxonomy.classes()[c], class_ap[c], class_count[c], pct(class_count[c])});
  }
  r.Validate();
  return r;
}

void WriteDetections(const std::filesystem::path& path, std::span<const DetectionRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& r : records) {
    const auto& d = r.detection;
    json j = {{"image_id", r.image_id}, {"x1", d.box.x1},   {"y1", d.box.y1},          {"x2", d.box.x2},
              {"y2", d.box.y2},         {"genus", d.genus}, {"confidence", d.confidence}};
    out << j.dump() << '\n';
  }
  if (!out) Fail(ErrorKind::kIo, "short write to " + path.string());
}

std::vector<DetectionRecord> ReadDetections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIngestion, "cannot open detections file " + path.string());
  std::vector<DetectionRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      DetectionRecord r;
      r.image_id = j.at("image_id").get<std::string>();
      r.detection.box = {j.at("x1").get<double>(), j.at("y1").get<double>(), j.at("x2").get<double>(),
                         j.at("y2").get<double>()};
      r.detection.genus = j.at("genus").get<std::string>();
      r.detection.confidence = j.at("confidence").get<double>();
      if (!r.detection.box.IsValid()) Fail(ErrorKind::kValidation, where + ": degenerate detection box");
      if (!std::isfinite(r.detection.confidence)) Fail(ErrorKind::kValidation, where + ": non-finite confidence");
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      Fail(ErrorKind::kIngestion, where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mtdet
