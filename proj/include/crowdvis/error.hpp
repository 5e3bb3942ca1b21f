/*
 * Copyright 2026 The crowdvis Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace crowdvis {

// Precondition violations on operation arguments.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input files. `line` is 0 when no line context applies.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

// Missing or unusable configuration artifacts (model files, config keys).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DecodeError : public std::runtime_error {
 public:
  DecodeError(std::string path, const std::string& why)
      : std::runtime_error("cannot decode image '" + path + "': " + why), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Numerical failures (singular systems, non-convergence).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Remote service failures. Rate limits are retried by the annotation client
// before surfacing.
class ServiceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class AuthError : public ServiceError {
 public:
  using ServiceError::ServiceError;
};
class RateLimitError : public ServiceError {
 public:
  using ServiceError::ServiceError;
};
class NetworkError : public ServiceError {
 public:
  using ServiceError::ServiceError;
};

}  // namespace crowdvis
