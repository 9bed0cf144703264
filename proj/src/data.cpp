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
#include "mtdet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mtdet/errors.hpp"
#include "mtdet/rng.hpp"

namespace mtdet {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitCommas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(Trim(item));
  return out;
}

double RequireNumber(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number()) {
    Fail(ErrorKind::kIngestion, where + ": missing or non-numeric field '" + key + "'");
  }
  return j[key].get<double>();
}

std::string RequireString(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string()) {
    Fail(ErrorKind::kIngestion, where + ": missing or non-string field '" + key + "'");
  }
  return j[key].get<std::string>();
}

}  // namespace

size_t Dataset::NumInstances() const {
  size_t n = 0;
  for (const auto& im : images) n += im.instances.size();
  return n;
}

const AnnotatedImage& Dataset::Find(const std::string& image_id) const {
  for (const auto& im : images) {
    if (im.image_id == image_id) return im;
  }
  Fail(ErrorKind::kLookup, "unknown image_id '" + image_id + "'");
}

Taxonomy ReadTaxonomyCsv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIngestion, "cannot open taxonomy file '" + path.string() + "'");
  std::vector<std::string> classes;
  std::vector<std::pair<std::string, std::string>> pairs;
  bool header_seen = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = Trim(line);
    if (line.empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(lineno);
    if (line.rfind("#classes=", 0) == 0) {
      classes = SplitCommas(line.substr(9));
      continue;
    }
    if (line[0] == '#') continue;
    const auto fields = SplitCommas(line);
    if (!header_seen) {
      if (fields.size() != 2 || fields[0] != "genus" || fields[1] != "class") {
        Fail(ErrorKind::kIngestion, where + ": expected header 'genus,class'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      Fail(ErrorKind::kIngestion, where + ": expected 'genus,class'");
    }
    pairs.emplace_back(fields[0], fields[1]);
  }
  if (classes.empty()) Fail(ErrorKind::kIngestion, path.string() + ": missing '#classes=' line");
  if (!header_seen) Fail(ErrorKind::kIngestion, path.string() + ": missing 'genus,class' header");
  try {
    return Taxonomy(std::move(classes), pairs);
  } catch (const Error& e) {
    Fail(ErrorKind::kIngestion, path.string() + ": " + e.what());
  }
}

void WriteTaxonomyCsv(const fs::path& path, const Taxonomy& taxonomy) {
  std::ofstream out(path);
  if (!out) Fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  out << "#classes=";
  for (size_t i = 0; i < taxonomy.classes().size(); ++i) {
    out << (i ? "," : "") << taxonomy.classes()[i];
  }
  out << "\ngenus,class\n";
  for (const auto& [g, c] : taxonomy.Pairs()) out << g << "," << c << "\n";
}

void WriteAnnotations(const fs::path& path, std::span<const AnnotatedImage> images) {
  std::ofstream out(path);
  if (!out) Fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  for (const auto& im : images) {
    json rec;
    rec["image_id"] = im.image_id;
    rec["file"] = im.file;
    rec["width"] = im.width;
    rec["height"] = im.height;
    json inst = json::array();
    for (const auto& a : im.instances) {
      inst.push_back({{"x1", a.box.x1}, {"y1", a.box.y1}, {"x2", a.box.x2}, {"y2", a.box.y2},
                      {"genus", a.genus}});
    }
    rec["instances"] = std::move(inst);
    out << rec.dump() << "\n";
  }
}

Dataset LoadDataset(const fs::path& manifest, const LoadOptions& options) {
  const fs::path dir = fs::is_directory(manifest) ? manifest : manifest.parent_path();
  const fs::path ann = fs::is_directory(manifest) ? dir / "annotations.jsonl" : manifest;
  Dataset ds;
  ds.root = dir;
  ds.taxonomy = ReadTaxonomyCsv(dir / "taxonomy.csv");
  std::ifstream in(ann);
  if (!in) Fail(ErrorKind::kIngestion, "cannot open manifest '" + ann.string() + "'");
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (Trim(line).empty()) continue;
    const std::string where = ann.filename().string() + ":" + std::to_string(lineno);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      Fail(ErrorKind::kIngestion, where + ": malformed record (" + e.what() + ")");
    }
    if (!rec.is_object()) Fail(ErrorKind::kIngestion, where + ": record is not an object");
    AnnotatedImage im;
    im.image_id = RequireString(rec, "image_id", where);
    const std::string at = where + " (image_id " + im.image_id + ")";
    im.file = RequireString(rec, "file", at);
    im.width = static_cast<int>(RequireNumber(rec, "width", at));
    im.height = static_cast<int>(RequireNumber(rec, "height", at));
    if (im.width <= 0 || im.height <= 0) {
      Fail(ErrorKind::kValidation, "image_id " + im.image_id + ": non-positive image size");
    }
    if (!ids.insert(im.image_id).second) {
      Fail(ErrorKind::kValidation, "duplicate image_id " + im.image_id);
    }
    if (!rec.contains("instances") || !rec["instances"].is_array()) {
      Fail(ErrorKind::kIngestion, at + ": missing 'instances' array");
    }
    for (const auto& a : rec["instances"]) {
      Instance inst;
      inst.box = {RequireNumber(a, "x1", at), RequireNumber(a, "y1", at),
                  RequireNumber(a, "x2", at), RequireNumber(a, "y2", at)};
      inst.genus = RequireString(a, "genus", at);
      const auto& b = inst.box;
      if (!b.IsValid()) {
        Fail(ErrorKind::kValidation, "image_id " + im.image_id + ": degenerate box");
      }
      if (b.x1 < 0 || b.y1 < 0 || b.x2 > im.width || b.y2 > im.height) {
        Fail(ErrorKind::kValidation, "image_id " + im.image_id + ": box out of image bounds");
      }
      if (!ds.taxonomy.HasGenus(inst.genus)) {
        Fail(ErrorKind::kValidation,
             "image_id " + im.image_id + ": unknown genus '" + inst.genus + "'");
      }
      im.instances.push_back(std::move(inst));
    }
    if (options.load_pixels) {
      im.pixels = ReadPng((dir / im.file).string());
      if (im.pixels.width != im.width || im.pixels.height != im.height) {
        Fail(ErrorKind::kIngestion,
             "image_id " + im.image_id + ": PNG size does not match the manifest");
      }
    }
    ds.images.push_back(std::move(im));
  }
  return ds;
}

void RelabelGenera(std::vector<AnnotatedImage>& images,
                   const std::map<std::string, std::string>& relabel) {
  for (auto& im : images) {
    for (auto& inst : im.instances) {
      auto it = relabel.find(inst.genus);
      if (it == relabel.end()) {
        Fail(ErrorKind::kLookup, "no relabel entry for genus '" + inst.genus + "'");
      }
      inst.genus = it->second;
    }
  }
}

GenusCensus CountGenera(std::span<const AnnotatedImage> images, const Taxonomy& taxonomy) {
  GenusCensus census;
  for (const auto& g : taxonomy.genera()) census.counts[g] = 0;
  for (const auto& im : images) {
    for (const auto& inst : im.instances) {
      taxonomy.GenusIndex(inst.genus);
      ++census.counts[inst.genus];
    }
  }
  return census;
}

DatasetSplit SplitDataset(std::span<const std::string> ids, uint64_t seed) {
  std::vector<std::string> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    Fail(ErrorKind::kValidation, "duplicate image ids in split input");
  }
  Rng rng(MixSeed(seed, 0x5b1f));
  rng.Shuffle(sorted);
  const size_t n_train = sorted.size() * 8 / 10;
  DatasetSplit split;
  split.seed = seed;
  split.train.assign(sorted.begin(), sorted.begin() + n_train);
  split.test.assign(sorted.begin() + n_train, sorted.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

void NormalizationStats::Validate() const {
  for (int c = 0; c < 3; ++c) {
    if (!(stddev[c] > 0) || !std::isfinite(stddev[c]) || !std::isfinite(mean[c])) {
      Fail(ErrorKind::kValidation, "normalization std must be positive and finite");
    }
  }
}

NormalizationStats ComputeStats(std::span<const PlanarImage> images) {
  NormalizationStats stats;
  for (int c = 0; c < 3; ++c) {
    double sum = 0, sq = 0, n = 0;
    for (const auto& im : images) {
      const float* p = im.channel(c);
      for (size_t i = 0; i < im.plane(); ++i) sum += p[i];
      n += static_cast<double>(im.plane());
    }
    if (n == 0) {
      stats.mean[c] = 0;
      stats.stddev[c] = 1;
      continue;
    }
    const double mean = sum / n;
    for (const auto& im : images) {
      const float* p = im.channel(c);
      for (size_t i = 0; i < im.plane(); ++i) sq += (p[i] - mean) * (p[i] - mean);
    }
    stats.mean[c] = mean;
    stats.stddev[c] = std::sqrt(sq / n);
    if (!(stats.stddev[c] > 0)) stats.stddev[c] = 1;
  }
  return stats;
}

Sample ResizeSample(const AnnotatedImage& image, int size) {
  if (image.pixels.width != image.width || image.pixels.height != image.height) {
    Fail(ErrorKind::kValidation, "image_id " + image.image_id + " has no pixel data loaded");
  }
  Sample s;
  s.image = ResizeBilinear(ToPlanar(image.pixels), size, size);
  const double kx = static_cast<double>(size) / image.width;
  const double ky = static_cast<double>(size) / image.height;
  for (const auto& inst : image.instances) {
    s.instances.push_back(
        {{inst.box.x1 * kx, inst.box.y1 * ky, inst.box.x2 * kx, inst.box.y2 * ky}, inst.genus});
  }
  return s;
}

void Standardize(PlanarImage& image, const NormalizationStats& stats) {
  stats.Validate();
  for (int c = 0; c < 3; ++c) {
    const float mean = static_cast<float>(stats.mean[c]);
    const float inv = static_cast<float>(1.0 / stats.stddev[c]);
    float* p = image.channel(c);
    for (size_t i = 0; i < image.plane(); ++i) p[i] = (p[i] - mean) * inv;
  }
}

Sample ResizeAndStandardize(const AnnotatedImage& image, const NormalizationStats& stats,
                            int size) {
  stats.Validate();
  Sample s = ResizeSample(image, size);
  Standardize(s.image, stats);
  return s;
}

Sample Rotate90(const Sample& sample, int direction) {
  const int n = sample.image.width;
  if (sample.image.height != n) Fail(ErrorKind::kValidation, "rotate90 requires a square image");
  if (direction != 1 && direction != -1) Fail(ErrorKind::kValidation, "direction must be +1 or -1");
  Sample out;
  out.image = PlanarImage(n, n);
  for (int c = 0; c < 3; ++c) {
    const float* src = sample.image.channel(c);
    float* dst = out.image.channel(c);
    for (int v = 0; v < n; ++v) {
      for (int u = 0; u < n; ++u) {
        const int sx = direction > 0 ? n - 1 - v : v;
        const int sy = direction > 0 ? u : n - 1 - u;
        dst[static_cast<size_t>(v) * n + u] = src[static_cast<size_t>(sy) * n + sx];
      }
    }
  }
  const double s = n;
  for (const auto& inst : sample.instances) {
    const auto& b = inst.box;
    BoundingBox r = direction > 0 ? BoundingBox{b.y1, s - b.x2, b.y2, s - b.x1}
                                  : BoundingBox{s - b.y2, b.x1, s - b.y1, b.x2};
    out.instances.push_back({r, inst.genus});
  }
  return out;
}

Sample RandomCrop(const Sample& sample, uint64_t seed, double min_fraction, int out_size) {
  if (!(min_fraction > 0 && min_fraction <= 1)) {
    Fail(ErrorKind::kValidation, "crop min_fraction must lie in (0, 1]");
  }
  const int w = sample.image.width, h = sample.image.height;
  Rng rng(seed);
  const double side = std::sqrt(min_fraction);
  int cw = std::min(w, static_cast<int>(std::ceil(w * rng.Uniform(side, 1.0))));
  int ch = std::min(h, static_cast<int>(std::ceil(h * rng.Uniform(side, 1.0))));
  if (min_fraction >= 1.0) {
    cw = w;
    ch = h;
  }
  // Rounding up the sides keeps the area at or above the requested fraction.
  const int x0 = static_cast<int>(rng.UniformInt(0, w - cw));
  const int y0 = static_cast<int>(rng.UniformInt(0, h - ch));

  PlanarImage crop(cw, ch);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < ch; ++y) {
      const float* src = sample.image.channel(c) + static_cast<size_t>(y0 + y) * w + x0;
      std::copy(src, src + cw, crop.channel(c) + static_cast<size_t>(y) * cw);
    }
  }
  Sample out;
  out.image = ResizeBilinear(crop, out_size, out_size);
  const BoundingBox window{static_cast<double>(x0), static_cast<double>(y0),
                           static_cast<double>(x0 + cw), static_cast<double>(y0 + ch)};
  const double kx = static_cast<double>(out_size) / cw;
  const double ky = static_cast<double>(out_size) / ch;
  for (const auto& inst : sample.instances) {
    const double inter = IntersectionArea(inst.box, window);
    if (inter <= 0 || inter < 0.25 * inst.box.Area()) continue;
    const BoundingBox kept{std::max(inst.box.x1, window.x1), std::max(inst.box.y1, window.y1),
                           std::min(inst.box.x2, window.x2), std::min(inst.box.y2, window.y2)};
    BoundingBox mapped{(kept.x1 - x0) * kx, (kept.y1 - y0) * ky, (kept.x2 - x0) * kx,
                       (kept.y2 - y0) * ky};
    out.instances.push_back({ClipBox(mapped, out_size, out_size), inst.genus});
  }
  return out;
}

Sample MakeTrainingSample(const AnnotatedImage& image, const NormalizationStats& stats,
                          const AugmentConfig& augment, uint64_t seed) {
  Sample s = ResizeSample(image, kInputSize);
  if (augment.enabled) {
    Rng rng(seed);
    if (rng.Bernoulli(augment.rotate_probability)) {
      s = Rotate90(s, rng.Bernoulli(0.5) ? 1 : -1);
    }
    const uint64_t crop_seed = rng.NextU64();
    if (augment.crop) s = RandomCrop(s, crop_seed, augment.crop_min_fraction, kInputSize);
  }
  Standardize(s.image, stats);
  return s;
}

}  // namespace mtdet
