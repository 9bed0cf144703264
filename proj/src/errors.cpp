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
#include "mtdet/errors.hpp"

namespace mtdet {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return "usage error";
    case ErrorKind::kIngestion: return "ingestion error";
    case ErrorKind::kValidation: return "validation error";
    case ErrorKind::kConfiguration: return "configuration error";
    case ErrorKind::kLookup: return "lookup error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kIo: return "I/O error";
    case ErrorKind::kGeneration: return "generation error";
  }
  return "error";
}

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return 2;
    case ErrorKind::kIngestion: return 3;
    case ErrorKind::kValidation: return 4;
    case ErrorKind::kNumeric: return 5;
    case ErrorKind::kIo: return 6;
    case ErrorKind::kConfiguration: return 7;
    case ErrorKind::kLookup: return 8;
    case ErrorKind::kGeneration: return 9;
  }
  return 1;
}

}  // namespace mtdet
