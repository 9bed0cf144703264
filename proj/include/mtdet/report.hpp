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
#ifndef MTDET_REPORT_HPP_
#define MTDET_REPORT_HPP_

#include <optional>
#include <string>
#include <vector>

#include "mtdet/eval.hpp"

namespace mtdet {

struct ReportOptions {
  int cutoff = 8;  // named genus rows before the tail aggregate
};

struct ReportRow {
  std::string table;  // "genus", "class" or "metric"
  std::string name;
  std::optional<double> value;  // AP, mAP or ACA
  std::optional<double> percentage;

  bool operator==(const ReportRow&) const = default;
};

// Rows in emission order: each table sorted by instance percentage
// (descending, ties in taxonomy order), an aggregate "The rest N genera" row
// when the genus table exceeds the cutoff, a "Total" row per table, then the
// two ACA metrics.
std::vector<ReportRow> ReportRows(const EvalReport& report, const ReportOptions& options = {});

// Shortest round-trip decimal; "NA" for a missing value.
std::string FormatNumber(std::optional<double> v);

std::string EmitReportCsv(const EvalReport& report, const ReportOptions& options = {});
std::string EmitReportText(const EvalReport& report, const ReportOptions& options = {});

// Inverse of EmitReportCsv; ingestion error on malformed input.
std::vector<ReportRow> ParseReportCsv(const std::string& text);

}  // namespace mtdet

#endif  // MTDET_REPORT_HPP_
