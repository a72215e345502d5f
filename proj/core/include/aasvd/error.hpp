/*
 * Copyright (c) 2026 The aasvd Authors. All Rights Reserved
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
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
#include <string_view>

namespace aasvd {

enum class ErrorCode {
  kNotSymmetric,
  kNotPositiveDefinite,
  kRankOutOfRange,
  kSingularFactor,
  kDimensionMismatch,
  kEmptyAccumulator,
  kSingularCovariance,
  kInvalidDims,
  kNonFiniteActivation,
  kCacheMismatch,
  kUnknownLayer,
  kNoFactorizedLayers,
  kNonFiniteLoss,
  kCorruptContainer,
  kOrderViolation,
  kInvalidConfig,
  kIo,
};

std::string_view to_string(ErrorCode code);

// All library failures surface as this exception; `code()` lets callers
// (notably the CLI) map failures to exit codes without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  // Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

  // Same code, message prefixed with `context` (e.g. the failing layer).
  Error with_context(const std::string& context) const { return Error(code_, context + ": " + detail_); }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace aasvd
