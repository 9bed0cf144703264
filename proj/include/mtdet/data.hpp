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
#ifndef MTDET_DATA_HPP_
#define MTDET_DATA_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mtdet/geometry.hpp"
#include "mtdet/image.hpp"
#include "mtdet/taxonomy.hpp"

namespace mtdet {

inline constexpr int kInputSize = 800;

struct Instance {
  BoundingBox box;
  std::string genus;
};

struct AnnotatedImage {
  std::string image_id;
  std::string file;  // relative to the dataset directory
  int width = 0;
  int height = 0;
  std::vector<Instance> instances;
  RgbImage pixels;  // empty when loaded without pixels
};

struct Dataset {
  std::filesystem::path root;
  std::vector<AnnotatedImage> images;
  Taxonomy taxonomy;

  size_t NumInstances() const;
  // Index into `images` by id; throws a lookup error when absent.
  const AnnotatedImage& Find(const std::string& image_id) const;
};

struct LoadOptions {
  bool load_pixels = true;
};

// Reads `<dir>/annotations.jsonl`, `<dir>/taxonomy.csv` and the referenced
// PNGs. `manifest` may name the directory or the annotations file itself.
Dataset LoadDataset(const std::filesystem::path& manifest, const LoadOptions& options = {});

Taxonomy ReadTaxonomyCsv(const std::filesystem::path& path);
void WriteTaxonomyCsv(const std::filesystem::path& path, const Taxonomy& taxonomy);
void WriteAnnotations(const std::filesystem::path& path, std::span<const AnnotatedImage> images);

// Relabels instances in place via a genus -> genus map (e.g. a rare-genus merge).
void RelabelGenera(std::vector<AnnotatedImage>& images,
                   const std::map<std::string, std::string>& relabel);

GenusCensus CountGenera(std::span<const AnnotatedImage> images, const Taxonomy& taxonomy);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
  uint64_t seed = 0;
};

// Seeded shuffle of the sorted ids; the first floor(0.8 N) go to train.
DatasetSplit SplitDataset(std::span<const std::string> ids, uint64_t seed);

struct NormalizationStats {
  std::array<double, 3> mean{0, 0, 0};
  std::array<double, 3> stddev{1, 1, 1};

  void Validate() const;
};

// A square network input with boxes in its coordinate frame.
struct Sample {
  PlanarImage image;
  std::vector<Instance> instances;
};

// Per-channel mean and population standard deviation over all pixels.
NormalizationStats ComputeStats(std::span<const PlanarImage> images);

// Resizes to size x size, scaling boxes per axis; pixel values stay in [0, 255].
Sample ResizeSample(const AnnotatedImage& image, int size = kInputSize);
void Standardize(PlanarImage& image, const NormalizationStats& stats);
Sample ResizeAndStandardize(const AnnotatedImage& image, const NormalizationStats& stats,
                            int size = kInputSize);

// direction +1 rotates counter-clockwise: pixel (x, y) -> (y, S - 1 - x).
// direction -1 is the inverse. Requires a square image.
Sample Rotate90(const Sample& sample, int direction);

// Crops a window covering at least `min_fraction` of the image area, keeps
// boxes that retain >= 25% of their area, and resizes back to `out_size`.
Sample RandomCrop(const Sample& sample, uint64_t seed, double min_fraction,
                  int out_size = kInputSize);

struct AugmentConfig {
  bool enabled = true;
  double rotate_probability = 0.5;
  bool crop = true;
  double crop_min_fraction = 0.6;
};

// resize -> optional rotation -> random crop -> re-resize -> standardize.
Sample MakeTrainingSample(const AnnotatedImage& image, const NormalizationStats& stats,
                          const AugmentConfig& augment, uint64_t seed);

}  // namespace mtdet

#endif  // MTDET_DATA_HPP_
