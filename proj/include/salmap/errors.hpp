/*
 * Copyright 2026 The Salmap Authors.
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

#ifndef SALMAP_ERRORS_HPP_
#define SALMAP_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace salmap {

// Bad arguments, bad configuration, or malformed input data. The CLI maps
// these to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tensor or layer-chain shape mismatch.
class ShapeError : public ValidationError {
 public:
  explicit ShapeError(const std::string& what,
                      std::size_t layer_index = static_cast<std::size_t>(-1))
      : ValidationError(what), layer_index_(layer_index) {}

  // Index of the first offending layer, or SIZE_MAX when not layer-specific.
  std::size_t layer_index() const { return layer_index_; }

 private:
  std::size_t layer_index_;
};

// Malformed file contents. `offset` is the byte position where parsing failed.
class FormatError : public ValidationError {
 public:
  FormatError(const std::string& path, std::size_t offset,
              const std::string& what)
      : ValidationError(path + ": " + what + " (at byte offset " +
                        std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Failures that are not the caller's fault: I/O errors, divergent training.
// The CLI maps these to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace salmap

#endif  // SALMAP_ERRORS_HPP_
