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
#ifndef MTDET_SYNTHGEN_HPP_
#define MTDET_SYNTHGEN_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtdet/data.hpp"

namespace mtdet {

enum class ShapeFamily { kEllipse, kRod, kColony, kStar };
enum class ColonyLayout { kLine, kRing, kCluster };

struct GenusStyle {
  std::string genus;
  std::string biological_class;
  ShapeFamily shape = ShapeFamily::kEllipse;
  ColonyLayout layout = ColonyLayout::kLine;  // colonies only
  double min_size = 40;                       // long-axis extent in pixels
  double max_size = 80;
  double min_aspect = 0.3;  // width / length
  double max_aspect = 0.4;
  std::array<double, 3> color{150, 120, 60};
  double color_jitter = 12;
  double min_opacity = 0.75;
  double max_opacity = 0.95;
  double pointedness = 0.5;  // ellipse tip exponent (0.5 round, 1 lens)
  double curvature = 0.0;    // ellipse bend, fraction of half-width
  int min_parts = 4;         // discs or arms
  int max_parts = 4;

  void Validate() const;
};

struct SceneSpec {
  int width = kInputSize;
  int height = kInputSize;
  int min_instances = 2;
  int max_instances = 6;
  double occlusion_probability = 0.15;
  double transparency_probability = 0.1;
  int min_distractors = 3;
  int max_distractors = 10;
  int max_placement_attempts = 200;

  void Validate() const;
};

// A rendered alga in image coordinates. Coverage() is the anti-aliased
// footprint used both for compositing and for deriving the annotation.
struct AlgaShape {
  ShapeFamily family = ShapeFamily::kEllipse;
  ColonyLayout layout = ColonyLayout::kLine;
  double cx = 0, cy = 0;
  double length = 0, width = 0;
  double angle = 0;
  double pointedness = 0.5;
  double curvature = 0;
  std::vector<std::array<double, 3>> parts;  // local (u, v, radius) for colonies / star arms

  // Fraction of 4x4 subsamples of pixel (px, py) inside the shape.
  double Coverage(int px, int py) const;
  // Interior depth in [0, 1] at a continuous point; negative when outside.
  double Depth(double x, double y) const;
  double Radius() const;
};

struct Mask {
  int x0 = 0, y0 = 0, width = 0, height = 0;  // window in image pixels
  std::vector<float> coverage;

  // Bounding rectangle of pixels with positive coverage, corner form.
  BoundingBox Support() const;
  bool Empty() const;
};

Mask RenderMask(const AlgaShape& shape, int image_width, int image_height);

struct SceneDetail {
  AnnotatedImage image;
  std::vector<AlgaShape> shapes;  // parallel to image.instances
  std::vector<bool> transparent;
};

// Picks genera uniformly from `styles`.
AnnotatedImage GenerateScene(const SceneSpec& spec, const std::vector<GenusStyle>& styles,
                             uint64_t seed);

// Renders exactly the given genera (indices into `styles`).
SceneDetail GenerateSceneDetail(const SceneSpec& spec, const std::vector<GenusStyle>& styles,
                                const std::vector<int>& genera, uint64_t seed);

// Built-in genus appearance library; unknown names get a hashed style in
// class "Others".
std::vector<GenusStyle> DefaultStyles();
GenusStyle StyleFor(const std::string& genus);

struct ImbalanceProfile {
  std::vector<std::pair<std::string, double>> weights;  // fractions of non-fixed instances
  std::vector<std::pair<std::string, int>> fixed_counts;  // exact corpus totals (rare genera)

  // "desk" (long tail of six genera plus a rare one), "desk-norare", or an
  // explicit list such as "A:0.7,B:0.2,C:0.1,Rare#6".
  static ImbalanceProfile Parse(const std::string& text);
  static ImbalanceProfile Desk(bool with_rare = true);
};

struct CorpusOptions {
  SceneSpec scene;
  std::string id_prefix = "img_";
};

// Writes images/, annotations.jsonl and taxonomy.csv under `out_dir` and
// returns the annotations path.
std::filesystem::path EmitCorpus(int n_images, const ImbalanceProfile& profile,
                                 const std::filesystem::path& out_dir, uint64_t seed,
                                 const CorpusOptions& options = {});

}  // namespace mtdet

#endif  // MTDET_SYNTHGEN_HPP_
