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

#include <cstdint>
#include <string_view>

namespace aasvd {

// Derives an independent 64-bit seed for one consumer of randomness from a
// root seed, a stream label and an index (SplitMix64 finalizer over an FNV-1a
// hash of the label). Stable across platforms and releases.
std::uint64_t split_seed(std::uint64_t root, std::string_view stream, std::uint64_t index = 0);

// Stream labels used by the pipeline.
namespace seed_stream {
inline constexpr std::string_view kModel = "model";
inline constexpr std::string_view kCalibration = "calibration";
inline constexpr std::string_view kEval = "eval";
inline constexpr std::string_view kShuffle = "shuffle";
}  // namespace seed_stream

}  // namespace aasvd
