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
#include "mtdet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "mtdet/errors.hpp"

namespace mtdet {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'T', 'D', 'E', 'T', 'C', 'K', '1'};

std::string Hex(uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

uint64_t ParseHex(const std::string& s) { return std::stoull(s, nullptr, 16); }

}  // namespace

json TaxonomyToJson(const Taxonomy& taxonomy) {
  json pairs = json::array();
  for (const auto& [g, c] : taxonomy.Pairs()) pairs.push_back({g, c});
  return {{"classes", taxonomy.classes()}, {"genera", pairs}};
}

Taxonomy TaxonomyFromJson(const json& j) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& p : j.at("genera")) {
    pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
  }
  return Taxonomy(j.at("classes").get<std::vector<std::string>>(), pairs);
}

void SaveCheckpoint(const fs::path& path, const Detector& detector, const CheckpointMeta& meta) {
  json header;
  header["format"] = 1;
  header["model"] = ToJson(meta.model);
  header["taxonomy"] = TaxonomyToJson(meta.taxonomy);
  header["taxonomy_fingerprint"] = Hex(meta.taxonomy.Fingerprint());
  header["source_fingerprint"] = Hex(meta.source_fingerprint);
  header["relabel"] = meta.relabel;
  header["stats"] = {{"mean", meta.stats.mean}, {"stddev", meta.stats.stddev}};
  header["step"] = meta.step;
  header["split_seed"] = Hex(meta.split_seed);
  header["lambda"] = meta.lambda;
  header["holdout"] = meta.holdout;
  json params = json::array();
  for (const auto& p : detector.params().params()) {
    params.push_back({{"name", p->name}, {"shape", p->value.shape}});
  }
  header["params"] = params;
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) Fail(ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    uint64_t n = text.size();
    unsigned char len[8];
    for (int i = 0; i < 8; ++i) len[i] = static_cast<unsigned char>(n >> (8 * i));
    out.write(reinterpret_cast<const char*>(len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : detector.params().params()) {
      out.write(reinterpret_cast<const char*>(p->value.ptr()),
                static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    }
    if (!out) Fail(ErrorKind::kIo, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

LoadedCheckpoint LoadCheckpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open checkpoint " + path.string());
  char magic[8];
  unsigned char len[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    Fail(ErrorKind::kIngestion, path.string() + " is not a checkpoint");
  }
  if (!in.read(reinterpret_cast<char*>(len), 8)) Fail(ErrorKind::kIngestion, "truncated checkpoint " + path.string());
  uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<uint64_t>(len[i]) << (8 * i);
  if (n > (1u << 28)) Fail(ErrorKind::kIngestion, "checkpoint header too large in " + path.string());
  std::string text(n, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(n))) {
    Fail(ErrorKind::kIngestion, "truncated checkpoint header in " + path.string());
  }
  LoadedCheckpoint out;
  json header;
  try {
    header = json::parse(text);
    CheckpointMeta& m = out.meta;
    m.model = ModelConfigFromJson(header.at("model"));
    m.taxonomy = TaxonomyFromJson(header.at("taxonomy"));
    if (ParseHex(header.at("taxonomy_fingerprint").get<std::string>()) != m.taxonomy.Fingerprint()) {
      Fail(ErrorKind::kIngestion, "taxonomy digest mismatch inside " + path.string());
    }
    m.source_fingerprint = ParseHex(header.at("source_fingerprint").get<std::string>());
    m.relabel = header.at("relabel").get<std::map<std::string, std::string>>();
    m.stats.mean = header.at("stats").at("mean").get<std::array<double, 3>>();
    m.stats.stddev = header.at("stats").at("stddev").get<std::array<double, 3>>();
    m.step = header.at("step").get<int64_t>();
    m.split_seed = ParseHex(header.at("split_seed").get<std::string>());
    m.lambda = header.at("lambda").get<double>();
    m.holdout = header.at("holdout").get<bool>();
  } catch (const json::exception& e) {
    Fail(ErrorKind::kIngestion, "bad checkpoint header in " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument&) {
    Fail(ErrorKind::kIngestion, "bad checkpoint header in " + path.string());
  }
  if (out.meta.model.num_genera != out.meta.taxonomy.num_genera()) {
    Fail(ErrorKind::kIngestion, "checkpoint model and taxonomy disagree on the genus count");
  }
  out.detector = std::make_unique<Detector>(out.meta.model, 0);
  const auto& params = out.detector->params().params();
  const json& listed = header.at("params");
  if (listed.size() != params.size()) Fail(ErrorKind::kIngestion, "checkpoint parameter count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    if (listed[i].at("name").get<std::string>() != p.name ||
        listed[i].at("shape").get<std::vector<int>>() != p.value.shape) {
      Fail(ErrorKind::kIngestion, "checkpoint parameter " + std::to_string(i) + " does not match " + p.name +
                                      " " + ShapeString(p.value.shape));
    }
    if (!in.read(reinterpret_cast<char*>(p.value.ptr()),
                 static_cast<std::streamsize>(p.value.size() * sizeof(float)))) {
      Fail(ErrorKind::kIngestion, "truncated parameter data in " + path.string());
    }
  }
  return out;
}

void VerifyTaxonomy(const CheckpointMeta& meta, const Taxonomy& source) {
  if (source.Fingerprint() != meta.source_fingerprint) {
    Fail(ErrorKind::kValidation, "dataset taxonomy (fingerprint " + Hex(source.Fingerprint()) +
                                     ") differs from the one the checkpoint was trained on (" +
                                     Hex(meta.source_fingerprint) + ")");
  }
}

}  // namespace mtdet
