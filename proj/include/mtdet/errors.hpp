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
#ifndef MTDET_ERRORS_HPP_
#define MTDET_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace mtdet {

// Error categories. The CLI maps each one onto a distinct exit code.
enum class ErrorKind {
  kUsage,
  kIngestion,
  kValidation,
  kConfiguration,
  kLookup,
  kNumeric,
  kIo,
  kGeneration,
};

const char* ErrorKindName(ErrorKind kind);

// Process exit code for an error category (0 is reserved for success).
int ExitCodeFor(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace mtdet

#endif  // MTDET_ERRORS_HPP_
