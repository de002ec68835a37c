// core/include/pacrnn/error.h

// Copyright 2026  The pacrnn authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef PACRNN_ERROR_H_
#define PACRNN_ERROR_H_

#include <stdexcept>
#include <string>

namespace pacrnn {

// Base for every error thrown by the library. kind() is a stable
// machine-parseable class name, used by the CLI error reporting.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

// Shape or rank disagreement between tensors.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg)
      : Error("DimensionError", msg) {}
};

// Invalid value for a configuration or operation parameter.
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& msg)
      : Error("ParameterError", msg) {}
};

// Out-of-range or inconsistent label sequences.
class LabelError : public Error {
 public:
  explicit LabelError(const std::string& msg) : Error("LabelError", msg) {}
};

// An operation was called before its required state was established
// (e.g. backward without a cached forward).
class StateError : public Error {
 public:
  explicit StateError(const std::string& msg) : Error("StateError", msg) {}
};

// Malformed file contents.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error("FormatError", msg) {}
};

// Inconsistent run or model configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("ConfigError", msg) {}
};

// Problems with corpus contents (empty corpus, impossible delay, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error("DataError", msg) {}
};

// A degenerate toy-language specification.
class SpecError : public Error {
 public:
  explicit SpecError(const std::string& msg) : Error("SpecError", msg) {}
};

// Filesystem-level failures (open/read/write).
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("IoError", msg) {}
};

}  // namespace pacrnn

#endif  // PACRNN_ERROR_H_
