// Copyright 2026 The cuembed Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace cuembed {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind : int {
  kConfig = 2,   // bad configuration, mismatched model/task, invalid options
  kData = 3,     // parse failures, missing files, shape/index violations
  kNumeric = 4,  // degenerate vectors, singular solves, non-finite values
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(ErrorKind::kConfig, msg) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(ErrorKind::kData, msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(ErrorKind::kNumeric, msg) {}
};

}  // namespace cuembed
