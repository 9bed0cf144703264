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
#include "mtdet/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "mtdet/errors.hpp"

namespace mtdet {

namespace {

constexpr const char* kCsvHeader = "table,name,value,instance_percentage";

void AppendTable(const std::vector<LabelScore>& scores, const std::string& table, double mean,
                 int cutoff, std::vector<ReportRow>& rows) {
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a].percentage > scores[b].percentage; });
  const size_t named = std::min(order.size(), static_cast<size_t>(std::max(cutoff, 0)));
  for (size_t i = 0; i < named; ++i) {
    const auto& s = scores[order[i]];
    rows.push_back({table, s.name, s.ap, s.percentage});
  }
  if (order.size() > named) {
    double ap_sum = 0, pct = 0;
    int defined = 0;
    for (size_t i = named; i < order.size(); ++i) {
      const auto& s = scores[order[i]];
      pct += s.percentage;
      if (s.ap) {
        ap_sum += *s.ap;
        ++defined;
      }
    }
    const std::string noun = table == "genus" ? "genera" : "classes";
    rows.push_back({table, "The rest " + std::to_string(order.size() - named) + " " + noun,
                    defined ? std::optional<double>(ap_sum / defined) : std::nullopt, pct});
  }
  rows.push_back({table, "Total", mean, 100.0});
}

std::optional<double> ParseField(const std::string& field, int line_no) {
  if (field == "NA" || field.empty()) return std::nullopt;
  double v = 0;
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    Fail(ErrorKind::kIngestion, "report line " + std::to_string(line_no) + ": bad number '" + field + "'");
  }
  return v;
}

std::string Percent(std::optional<double> v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
  return buf;
}

}  // namespace

std::vector<ReportRow> ReportRows(const EvalReport& report, const ReportOptions& options) {
  std::vector<ReportRow> rows;
  AppendTable(report.genera, "genus", report.map_genus, options.cutoff, rows);
  AppendTable(report.classes, "class", report.map_class, static_cast<int>(report.classes.size()), rows);
  rows.push_back({"metric", "aca_genus", report.aca_genus, std::nullopt});
  rows.push_back({"metric", "aca_class", report.aca_class, std::nullopt});
  return rows;
}

std::string FormatNumber(std::optional<double> v) {
  if (!v) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), *v);
  return std::string(buf, res.ptr);
}

std::string EmitReportCsv(const EvalReport& report, const ReportOptions& options) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const auto& r : ReportRows(report, options)) {
    os << r.table << ',' << r.name << ',' << FormatNumber(r.value) << ','
       << (r.percentage ? FormatNumber(r.percentage) : std::string()) << '\n';
  }
  return os.str();
}

std::string EmitReportText(const EvalReport& report, const ReportOptions& options) {
  const auto rows = ReportRows(report, options);
  size_t width = 24;
  for (const auto& r : rows) width = std::max(width, r.name.size() + 2);
  std::ostringstream os;
  auto table = [&](const std::string& key, const std::string& title, const std::string& label) {
    os << title << " (" << report.num_images << " images)\n";
    char line[256];
    std::snprintf(line, sizeof(line), "%-*s %8s %18s\n", static_cast<int>(width), label.c_str(), "mAP(%)",
                  "Instance Pct (%)");
    os << line;
    for (const auto& r : rows) {
      if (r.table != key) continue;
      std::snprintf(line, sizeof(line), "%-*s %8s %18.2f\n", static_cast<int>(width), r.name.c_str(),
                    Percent(r.value).c_str(), r.percentage.value_or(0));
      os << line;
    }
    os << '\n';
  };
  table("genus", "Genus-level detection, IoU >= 0.50", "Genus");
  table("class", "Class-level detection, IoU >= 0.50", "Class");
  os << "ACA genus: " << Percent(report.aca_genus) << "%  class: " << Percent(report.aca_class) << "%\n";
  return os.str();
}

std::vector<ReportRow> ParseReportCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    Fail(ErrorKind::kIngestion, "report CSV has an unexpected header");
  }
  std::vector<ReportRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 4) {
      Fail(ErrorKind::kIngestion, "report line " + std::to_string(line_no) + " has " +
                                      std::to_string(f.size()) + " fields, want 4");
    }
    ReportRow r{f[0], f[1], ParseField(f[2], line_no),
                f[3].empty() ? std::nullopt : ParseField(f[3], line_no)};
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace mtdet
