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
#include "mtdet/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "mtdet/errors.hpp"
#include "mtdet/rng.hpp"

namespace mtdet {
namespace fs = std::filesystem;

namespace {

const std::vector<std::string>& DeskClasses() {
  static const std::vector<std::string> classes = {
      "Bacillariophyta", "Chlorophyta", "Cyanophyta", "Cryptophyceae", "Cyanobacteria", "Others"};
  return classes;
}

double LatticeValue(int64_t ix, int64_t iy, uint64_t seed) {
  const uint64_t key = static_cast<uint64_t>(ix) * 0x9E3779B1ULL ^ static_cast<uint64_t>(iy) << 32;
  return static_cast<double>(MixSeed(seed, key) >> 11) * 0x1.0p-53;
}

double Smooth(double t) { return t * t * (3 - 2 * t); }

double ValueNoise(double x, double y, double scale, uint64_t seed) {
  const double fx = x / scale, fy = y / scale;
  const int64_t ix = static_cast<int64_t>(std::floor(fx));
  const int64_t iy = static_cast<int64_t>(std::floor(fy));
  const double tx = Smooth(fx - ix), ty = Smooth(fy - iy);
  const double a = LatticeValue(ix, iy, seed), b = LatticeValue(ix + 1, iy, seed);
  const double c = LatticeValue(ix, iy + 1, seed), d = LatticeValue(ix + 1, iy + 1, seed);
  return (a + (b - a) * tx) * (1 - ty) + (c + (d - c) * tx) * ty;
}

// Warm-lit, softly textured field with vignetting, in [0, 255] floats.
PlanarImage RenderBackground(int width, int height, Rng& rng) {
  PlanarImage bg(width, height);
  const std::array<double, 3> base{rng.Uniform(195, 215), rng.Uniform(180, 198),
                                   rng.Uniform(135, 160)};
  const uint64_t s1 = rng.NextU64(), s2 = rng.NextU64(), s3 = rng.NextU64(), s4 = rng.NextU64();
  const double cx = width / 2.0, cy = height / 2.0;
  const double rmax = std::hypot(cx, cy);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double n = 14 * (ValueNoise(x, y, 97, s1) - 0.5) + 7 * (ValueNoise(x, y, 23, s2) - 0.5) +
                       4 * (ValueNoise(x, y, 5, s3) - 0.5);
      const double tint = 6 * (ValueNoise(x, y, 151, s4) - 0.5);
      const double r = std::hypot(x - cx, y - cy) / rmax;
      const double vignette = 1.0 - 0.12 * r * r;
      bg.at(0, x, y) = static_cast<float>((base[0] + n + tint) * vignette);
      bg.at(1, x, y) = static_cast<float>((base[1] + n) * vignette);
      bg.at(2, x, y) = static_cast<float>((base[2] + n - tint) * vignette);
    }
  }
  return bg;
}

void Composite(PlanarImage& canvas, const AlgaShape& shape, const Mask& mask,
               const std::array<double, 3>& color, double alpha) {
  for (int j = 0; j < mask.height; ++j) {
    for (int i = 0; i < mask.width; ++i) {
      const double cov = mask.coverage[static_cast<size_t>(j) * mask.width + i];
      if (cov <= 0) continue;
      const int x = mask.x0 + i, y = mask.y0 + j;
      const double depth = std::clamp(shape.Depth(x + 0.5, y + 0.5), 0.0, 1.0);
      // Darker rim, lighter interior.
      const double shade = 0.62 + 0.5 * std::sqrt(depth);
      const double a = alpha * cov;
      for (int c = 0; c < 3; ++c) {
        float& px = canvas.at(c, x, y);
        px = static_cast<float>(px * (1 - a) + std::min(255.0, color[c] * shade) * a);
      }
    }
  }
}

AlgaShape SampleShape(const GenusStyle& style, Rng& rng) {
  AlgaShape s;
  s.family = style.shape;
  s.layout = style.layout;
  s.length = rng.Uniform(style.min_size, style.max_size);
  s.width = s.length * rng.Uniform(style.min_aspect, style.max_aspect);
  s.angle = rng.Uniform(0, M_PI);
  s.pointedness = style.pointedness;
  s.curvature = style.curvature;
  const int parts = static_cast<int>(rng.UniformInt(style.min_parts, style.max_parts));
  const double half = s.length / 2;
  switch (style.shape) {
    case ShapeFamily::kColony: {
      if (style.layout == ColonyLayout::kLine) {
        const double cell = s.length / parts;
        for (int i = 0; i < parts; ++i) s.parts.push_back({-half + (i + 0.5) * cell, 0, cell / 2});
      } else if (style.layout == ColonyLayout::kRing) {
        const double rd = s.length * 0.15;
        s.parts.push_back({0, 0, rd});
        for (int i = 0; i < parts - 1; ++i) {
          const double t = 2 * M_PI * i / (parts - 1);
          s.parts.push_back({(half - rd) * std::cos(t), (half - rd) * std::sin(t), rd});
        }
      } else {
        for (int i = 0; i < parts; ++i) {
          const double rd = s.length * rng.Uniform(0.08, 0.14);
          const double t = rng.Uniform(0, 2 * M_PI);
          const double rr = (half - rd) * std::sqrt(rng.Uniform());
          s.parts.push_back({rr * std::cos(t), rr * std::sin(t), rd});
        }
      }
      break;
    }
    case ShapeFamily::kStar:
      for (int i = 0; i < parts; ++i) s.parts.push_back({2 * M_PI * i / parts, 0, 0});
      break;
    default:
      break;
  }
  return s;
}

}  // namespace

void GenusStyle::Validate() const {
  if (genus.empty()) Fail(ErrorKind::kValidation, "style has no genus");
  if (!(min_size > 0) || max_size < min_size) Fail(ErrorKind::kValidation, "bad style size range");
  if (!(min_aspect > 0) || max_aspect < min_aspect) {
    Fail(ErrorKind::kValidation, "bad style aspect range");
  }
  if (min_opacity < 0 || max_opacity > 1 || max_opacity < min_opacity) {
    Fail(ErrorKind::kValidation, "style opacity must lie in [0, 1]");
  }
  if (min_parts < 1 || max_parts < min_parts) Fail(ErrorKind::kValidation, "bad style part count");
}

void SceneSpec::Validate() const {
  if (width <= 0 || height <= 0) Fail(ErrorKind::kValidation, "scene size must be positive");
  if (min_instances < 0 || max_instances < min_instances || min_distractors < 0 ||
      max_distractors < min_distractors) {
    Fail(ErrorKind::kValidation, "scene count ranges must be non-negative and ordered");
  }
  for (double p : {occlusion_probability, transparency_probability}) {
    if (!(p >= 0 && p <= 1)) Fail(ErrorKind::kValidation, "scene probabilities must lie in [0, 1]");
  }
}

double AlgaShape::Radius() const {
  return 0.5 * length + (family == ShapeFamily::kColony && layout == ColonyLayout::kLine
                             ? 0.5 * width
                             : 0.0) +
         std::abs(curvature) * width + 1.0;
}

double AlgaShape::Depth(double x, double y) const {
  const double dx = x - cx, dy = y - cy;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = dx * c + dy * s;
  const double v = -dx * s + dy * c;
  const double half = 0.5 * length, hw = 0.5 * width;
  switch (family) {
    case ShapeFamily::kEllipse: {
      const double t = std::abs(u) / half;
      if (t >= 1) return -1;
      const double prof = hw * std::pow(1 - t * t, pointedness);
      const double vc = v - curvature * hw * (1 - t * t);
      if (prof <= 0) return -1;
      return 1 - std::abs(vc) / prof;
    }
    case ShapeFamily::kRod: {
      const double lim = std::max(0.0, half - hw);
      const double uc = std::clamp(u, -lim, lim);
      return 1 - std::hypot(u - uc, v) / hw;
    }
    case ShapeFamily::kColony: {
      double best = -1;
      for (const auto& p : parts) {
        const double ry = layout == ColonyLayout::kLine ? hw : p[2];
        const double d = std::hypot((u - p[0]) / p[2], (v - p[1]) / ry);
        best = std::max(best, 1 - d);
      }
      return best;
    }
    case ShapeFamily::kStar: {
      double best = -1;
      for (const auto& p : parts) {
        const double ca = std::cos(p[0]), sa = std::sin(p[0]);
        const double along = std::clamp(u * ca + v * sa, 0.0, half - hw);
        const double ex = u - along * ca, ey = v - along * sa;
        best = std::max(best, 1 - std::hypot(ex, ey) / hw);
      }
      return best;
    }
  }
  return -1;
}

double AlgaShape::Coverage(int px, int py) const {
  int inside = 0;
  for (int j = 0; j < 4; ++j) {
    for (int i = 0; i < 4; ++i) {
      if (Depth(px + (i + 0.5) / 4.0, py + (j + 0.5) / 4.0) > 0) ++inside;
    }
  }
  return inside / 16.0;
}

BoundingBox Mask::Support() const {
  int xmin = width, ymin = height, xmax = -1, ymax = -1;
  for (int j = 0; j < height; ++j) {
    for (int i = 0; i < width; ++i) {
      if (coverage[static_cast<size_t>(j) * width + i] > 0) {
        xmin = std::min(xmin, i);
        xmax = std::max(xmax, i);
        ymin = std::min(ymin, j);
        ymax = std::max(ymax, j);
      }
    }
  }
  if (xmax < 0) return {};
  return {static_cast<double>(x0 + xmin), static_cast<double>(y0 + ymin),
          static_cast<double>(x0 + xmax + 1), static_cast<double>(y0 + ymax + 1)};
}

bool Mask::Empty() const {
  return std::none_of(coverage.begin(), coverage.end(), [](float c) { return c > 0; });
}

Mask RenderMask(const AlgaShape& shape, int image_width, int image_height) {
  const double r = shape.Radius() + 2;
  Mask m;
  m.x0 = std::max(0, static_cast<int>(std::floor(shape.cx - r)));
  m.y0 = std::max(0, static_cast<int>(std::floor(shape.cy - r)));
  const int x1 = std::min(image_width, static_cast<int>(std::ceil(shape.cx + r)) + 1);
  const int y1 = std::min(image_height, static_cast<int>(std::ceil(shape.cy + r)) + 1);
  m.width = std::max(0, x1 - m.x0);
  m.height = std::max(0, y1 - m.y0);
  m.coverage.assign(static_cast<size_t>(m.width) * m.height, 0.f);
  for (int j = 0; j < m.height; ++j) {
    for (int i = 0; i < m.width; ++i) {
      m.coverage[static_cast<size_t>(j) * m.width + i] =
          static_cast<float>(shape.Coverage(m.x0 + i, m.y0 + j));
    }
  }
  return m;
}

SceneDetail GenerateSceneDetail(const SceneSpec& spec, const std::vector<GenusStyle>& styles,
                                const std::vector<int>& genera, uint64_t seed) {
  spec.Validate();
  if (styles.empty()) Fail(ErrorKind::kValidation, "scene generation needs at least one style");
  for (const auto& st : styles) st.Validate();
  Rng rng(seed);
  PlanarImage canvas = RenderBackground(spec.width, spec.height, rng);

  SceneDetail out;
  std::vector<Mask> masks;
  std::vector<double> alphas;
  std::vector<std::array<double, 3>> colors;
  std::vector<BoundingBox> boxes;
  for (int g : genera) {
    if (g < 0 || g >= static_cast<int>(styles.size())) {
      Fail(ErrorKind::kValidation, "genus index out of range for the style list");
    }
    const GenusStyle& style = styles[g];
    const bool occlude = !boxes.empty() && rng.Bernoulli(spec.occlusion_probability);
    const int target = occlude ? static_cast<int>(rng.UniformInt(0, boxes.size() - 1)) : -1;
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_placement_attempts && !placed; ++attempt) {
      AlgaShape shape = SampleShape(style, rng);
      const double r = shape.Radius();
      if (2 * r >= std::min(spec.width, spec.height)) continue;
      if (occlude) {
        const BoundingBox& t = boxes[target];
        shape.cx = t.CenterX() + rng.Uniform(-0.5, 0.5) * t.Width();
        shape.cy = t.CenterY() + rng.Uniform(-0.5, 0.5) * t.Height();
      } else {
        shape.cx = rng.Uniform(r, spec.width - r);
        shape.cy = rng.Uniform(r, spec.height - r);
      }
      if (shape.cx - r < 0 || shape.cy - r < 0 || shape.cx + r > spec.width ||
          shape.cy + r > spec.height) {
        continue;
      }
      Mask mask = RenderMask(shape, spec.width, spec.height);
      if (mask.Empty()) continue;
      const BoundingBox box = mask.Support();
      if (occlude) {
        if (IouUnchecked(box, boxes[target]) <= 0) continue;
      } else {
        const BoundingBox padded{box.x1 - 4, box.y1 - 4, box.x2 + 4, box.y2 + 4};
        bool clash = false;
        for (const auto& b : boxes) clash = clash || IntersectionArea(padded, b) > 0;
        if (clash) continue;
      }
      const bool transparent = rng.Bernoulli(spec.transparency_probability);
      alphas.push_back(transparent ? rng.Uniform(0.1, 0.3)
                                   : rng.Uniform(style.min_opacity, style.max_opacity));
      std::array<double, 3> color;
      for (int c = 0; c < 3; ++c) {
        color[c] = std::clamp(style.color[c] + rng.Uniform(-1, 1) * style.color_jitter, 0.0, 255.0);
      }
      colors.push_back(color);
      boxes.push_back(box);
      masks.push_back(std::move(mask));
      out.shapes.push_back(std::move(shape));
      out.transparent.push_back(transparent);
      out.image.instances.push_back({box, style.genus});
      placed = true;
    }
    if (!placed) {
      Fail(ErrorKind::kGeneration, "could not place a '" + style.genus + "' instance after " +
                                       std::to_string(spec.max_placement_attempts) + " attempts");
    }
  }

  // Distractors: small dark bacteria and pale debris; never annotated.
  struct Distractor {
    AlgaShape shape;
    std::array<double, 3> color;
    double alpha;
    bool over;
  };
  std::vector<Distractor> distractors;
  const int n_distract = static_cast<int>(rng.UniformInt(spec.min_distractors, spec.max_distractors));
  for (int i = 0; i < n_distract; ++i) {
    Distractor d;
    GenusStyle st;
    st.genus = "distractor";
    if (rng.Bernoulli(0.25)) {
      st.shape = ShapeFamily::kColony;
      st.layout = ColonyLayout::kCluster;
      st.min_size = 15;
      st.max_size = 40;
      st.min_aspect = st.max_aspect = 1.0;
      st.min_parts = 3;
      st.max_parts = 6;
      const double tone = rng.Uniform(165, 190);
      d.color = {tone, tone * 0.97, tone * 0.9};
      d.alpha = rng.Uniform(0.3, 0.6);
    } else {
      st.shape = ShapeFamily::kRod;
      st.min_size = 3;
      st.max_size = 10;
      st.min_aspect = 0.4;
      st.max_aspect = 0.8;
      const double tone = rng.Uniform(60, 100);
      d.color = {tone, tone * 0.9, tone * 0.8};
      d.alpha = rng.Uniform(0.4, 0.8);
    }
    d.shape = SampleShape(st, rng);
    d.shape.cx = rng.Uniform(0, spec.width);
    d.shape.cy = rng.Uniform(0, spec.height);
    d.over = rng.Bernoulli(0.5);
    distractors.push_back(std::move(d));
  }
  for (const auto& d : distractors) {
    if (!d.over) Composite(canvas, d.shape, RenderMask(d.shape, spec.width, spec.height), d.color, d.alpha);
  }
  for (size_t i = 0; i < masks.size(); ++i) {
    Composite(canvas, out.shapes[i], masks[i], colors[i], alphas[i]);
  }
  for (const auto& d : distractors) {
    if (d.over) Composite(canvas, d.shape, RenderMask(d.shape, spec.width, spec.height), d.color, d.alpha);
  }

  out.image.width = spec.width;
  out.image.height = spec.height;
  out.image.pixels = ToRgb(canvas);
  return out;
}

AnnotatedImage GenerateScene(const SceneSpec& spec, const std::vector<GenusStyle>& styles,
                             uint64_t seed) {
  spec.Validate();
  if (styles.empty()) Fail(ErrorKind::kValidation, "scene generation needs at least one style");
  Rng rng(MixSeed(seed, 0xc0ffee));
  const int n = static_cast<int>(rng.UniformInt(spec.min_instances, spec.max_instances));
  std::vector<int> genera(n);
  for (auto& g : genera) g = static_cast<int>(rng.UniformInt(0, styles.size() - 1));
  return GenerateSceneDetail(spec, styles, genera, seed).image;
}

std::vector<GenusStyle> DefaultStyles() {
  std::vector<GenusStyle> v;
  auto add = [&](GenusStyle s) { v.push_back(std::move(s)); };
  {
    GenusStyle s;
    s.genus = "Cymbella";
    s.biological_class = "Bacillariophyta";
    s.shape = ShapeFamily::kEllipse;
    s.min_size = 70, s.max_size = 120, s.min_aspect = 0.28, s.max_aspect = 0.36;
    s.color = {150, 112, 50};
    s.pointedness = 0.8, s.curvature = 0.45;
    add(s);
  }
  {
    GenusStyle s;
    s.genus = "Navicula";
    s.biological_class = "Bacillariophyta";
    s.shape = ShapeFamily::kEllipse;
    s.min_size = 45, s.max_size = 80, s.min_aspect = 0.25, s.max_aspect = 0.32;
    s.color = {178, 160, 95};
    s.pointedness = 1.0;
    add(s);
  }
  {
    GenusStyle s;
    s.genus = "Synedra";
    s.biological_class = "Bacillariophyta";
    s.shape = ShapeFamily::kRod;
    s.min_size = 120, s.max_size = 180, s.min_aspect = 0.07, s.max_aspect = 0.1;
    s.color = {135, 118, 60};
    add(s);
  }
  {
    GenusStyle s;
    s.genus = "Scenedesmus";
    s.biological_class = "Chlorophyta";
    s.shape = ShapeFamily::kColony;
    s.layout = ColonyLayout::kLine;
    s.min_size = 40, s.max_size = 64, s.min_aspect = 0.7, s.max_aspect = 0.9;
    s.color = {70, 140, 55};
    s.min_parts = s.max_parts = 4;
    add(s);
  }
  {
    GenusStyle s;
    s.genus = "Pediastrum";
    s.biological_class = "Chlorophyta";
    s.shape = ShapeFamily::kColony;
    s.layout = ColonyLayout::kRing;
    s.min_size = 70, s.max_size = 110, s.min_aspect = 1.0, s.max_aspect = 1.0;
    s.color = {105, 165, 70};
    s.min_parts = 8, s.max_parts = 11;
    add(s);
  }
  {
    GenusStyle s;
    s.genus = "Microcystis";
    s.biological_class = "Cyanophyta";
    s.shape = ShapeFamily::kColony;
    s.layout = ColonyLayout::kCluster;
    s.min_size = 50, s.max_size = 90, s.min_aspect = 1.0, s.max_aspect = 1.0;
    s.color = {60, 120, 125};
    s.min_parts = 10, s.max_parts = 16;
    add(s);
  }
  {
    GenusStyle s;
    s.genus = "Oscillatoria";
    s.biological_class = "Cyanophyta";
    s.shape = ShapeFamily::kRod;
    s.min_size = 110, s.max_size = 170, s.min_aspect = 0.06, s.max_aspect = 0.08;
    s.color = {55, 110, 120};
    add(s);
  }
  {
    GenusStyle s;
    s.genus = "Asterionella";
    s.biological_class = "Bacillariophyta";
    s.shape = ShapeFamily::kStar;
    s.min_size = 70, s.max_size = 110, s.min_aspect = 0.08, s.max_aspect = 0.1;
    s.color = {160, 130, 70};
    s.min_parts = 6, s.max_parts = 8;
    add(s);
  }
  {
    GenusStyle s;
    s.genus = "Cryptomonas";
    s.biological_class = "Cryptophyceae";
    s.shape = ShapeFamily::kEllipse;
    s.min_size = 30, s.max_size = 45, s.min_aspect = 0.5, s.max_aspect = 0.6;
    s.color = {150, 95, 60};
    s.pointedness = 0.6, s.curvature = 0.2;
    add(s);
  }
  return v;
}

GenusStyle StyleFor(const std::string& genus) {
  for (auto& s : DefaultStyles()) {
    if (s.genus == genus) return s;
  }
  Rng rng(HashString(genus));
  GenusStyle s;
  s.genus = genus;
  s.biological_class = std::string(kOthersClass);
  const int family = static_cast<int>(rng.UniformInt(0, 3));
  s.shape = static_cast<ShapeFamily>(family);
  s.min_size = rng.Uniform(35, 70);
  s.max_size = s.min_size * rng.Uniform(1.2, 1.6);
  switch (s.shape) {
    case ShapeFamily::kEllipse:
      s.min_aspect = 0.3, s.max_aspect = 0.5;
      break;
    case ShapeFamily::kRod:
      s.min_aspect = 0.08, s.max_aspect = 0.15;
      s.min_size *= 1.6, s.max_size *= 1.6;
      break;
    case ShapeFamily::kColony:
      s.layout = static_cast<ColonyLayout>(rng.UniformInt(0, 2));
      s.min_aspect = 0.8, s.max_aspect = 1.0;
      s.min_parts = 4, s.max_parts = 8;
      break;
    case ShapeFamily::kStar:
      s.min_aspect = 0.08, s.max_aspect = 0.12;
      s.min_parts = 4, s.max_parts = 7;
      break;
  }
  s.color = {rng.Uniform(40, 200), rng.Uniform(40, 200), rng.Uniform(40, 200)};
  return s;
}

ImbalanceProfile ImbalanceProfile::Desk(bool with_rare) {
  ImbalanceProfile p;
  p.weights = {{"Cymbella", 0.28},   {"Navicula", 0.20},   {"Synedra", 0.16},
               {"Scenedesmus", 0.14}, {"Pediastrum", 0.12}, {"Microcystis", 0.10}};
  if (with_rare) p.fixed_counts = {{"Asterionella", 6}};
  return p;
}

ImbalanceProfile ImbalanceProfile::Parse(const std::string& text) {
  if (text == "desk") return Desk(true);
  if (text == "desk-norare") return Desk(false);
  ImbalanceProfile p;
  std::stringstream ss(text);
  std::string item;
  std::set<std::string> seen;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    const auto hash = item.find('#');
    const auto sep = colon != std::string::npos ? colon : hash;
    if (sep == std::string::npos || sep == 0 || sep + 1 >= item.size()) {
      Fail(ErrorKind::kUsage, "bad profile entry '" + item + "' (want NAME:weight or NAME#count)");
    }
    const std::string name = item.substr(0, sep);
    if (!seen.insert(name).second) Fail(ErrorKind::kUsage, "duplicate profile genus '" + name + "'");
    if (name == kElseGenus) Fail(ErrorKind::kUsage, "\"else\" cannot appear in a profile");
    try {
      if (sep == colon) {
        const double w = std::stod(item.substr(sep + 1));
        if (!(w > 0)) throw std::invalid_argument("weight");
        p.weights.emplace_back(name, w);
      } else {
        const int n = std::stoi(item.substr(sep + 1));
        if (n < 0) throw std::invalid_argument("count");
        p.fixed_counts.emplace_back(name, n);
      }
    } catch (const std::exception&) {
      Fail(ErrorKind::kUsage, "bad profile value in '" + item + "'");
    }
  }
  if (p.weights.empty()) Fail(ErrorKind::kUsage, "profile needs at least one weighted genus");
  return p;
}

fs::path EmitCorpus(int n_images, const ImbalanceProfile& profile, const fs::path& out_dir,
                    uint64_t seed, const CorpusOptions& options) {
  if (n_images < 1) Fail(ErrorKind::kUsage, "corpus needs at least one image");
  if (profile.weights.empty()) Fail(ErrorKind::kUsage, "profile needs at least one weighted genus");
  options.scene.Validate();

  std::vector<GenusStyle> styles;
  for (const auto& [g, _] : profile.weights) styles.push_back(StyleFor(g));
  for (const auto& [g, _] : profile.fixed_counts) styles.push_back(StyleFor(g));
  const int n_weighted = static_cast<int>(profile.weights.size());

  Rng rng(MixSeed(seed, 0xc0a9));
  std::vector<int> per_image(n_images);
  int total = 0;
  for (auto& n : per_image) {
    n = static_cast<int>(rng.UniformInt(options.scene.min_instances, options.scene.max_instances));
    total += n;
  }
  // Fixed (rare) genera never take more than a tenth of the corpus.
  std::vector<int> pool;
  for (size_t i = 0; i < profile.fixed_counts.size(); ++i) {
    const int c = std::min(profile.fixed_counts[i].second, total / 10);
    pool.insert(pool.end(), c, n_weighted + static_cast<int>(i));
  }
  const int remaining = total - static_cast<int>(pool.size());
  double wsum = 0;
  for (const auto& [_, w] : profile.weights) wsum += w;
  // Largest-remainder quotas so realized frequencies track the profile.
  std::vector<int> quota(n_weighted);
  std::vector<std::pair<double, int>> rema;
  int assigned = 0;
  for (int i = 0; i < n_weighted; ++i) {
    const double exact = remaining * profile.weights[i].second / wsum;
    quota[i] = static_cast<int>(std::floor(exact));
    assigned += quota[i];
    rema.emplace_back(exact - quota[i], i);
  }
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < remaining - assigned; ++k) ++quota[rema[k].second];
  for (int i = 0; i < n_weighted; ++i) pool.insert(pool.end(), quota[i], i);
  rng.Shuffle(pool);

  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) Fail(ErrorKind::kIo, "cannot create '" + (out_dir / "images").string() + "': " + ec.message());

  std::vector<AnnotatedImage> records;
  size_t cursor = 0;
  for (int i = 0; i < n_images; ++i) {
    std::vector<int> genera(pool.begin() + cursor, pool.begin() + cursor + per_image[i]);
    cursor += per_image[i];
    SceneDetail scene = GenerateSceneDetail(options.scene, styles, genera, MixSeed(seed, i + 1));
    AnnotatedImage& im = scene.image;
    std::ostringstream id;
    id << options.id_prefix;
    id.width(4);
    id.fill('0');
    id << i;
    im.image_id = id.str();
    im.file = "images/" + im.image_id + ".png";
    WritePng((out_dir / im.file).string(), im.pixels);
    im.pixels = RgbImage();
    records.push_back(std::move(im));
  }
  const fs::path ann = out_dir / "annotations.jsonl";
  WriteAnnotations(ann, records);

  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& s : styles) pairs.emplace_back(s.genus, s.biological_class);
  pairs.emplace_back(std::string(kElseGenus), std::string(kOthersClass));
  WriteTaxonomyCsv(out_dir / "taxonomy.csv", Taxonomy(DeskClasses(), pairs));
  return ann;
}

}  // namespace mtdet
