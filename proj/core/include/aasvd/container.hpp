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

// Binary tensor container:
//
//   "AASV"  u32 version (= 1)
//   repeated until EOF:
//     u32 name_length, name bytes (UTF-8, no terminator)
//     u32 rows, u32 cols, rows * cols f64 values in row-major order
//
// All integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "aasvd/matrix.hpp"

namespace aasvd {

inline constexpr char kContainerMagic[4] = {'A', 'A', 'S', 'V'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix value;
};

std::string encode_container(const std::vector<NamedTensor>& tensors);
// Throws kCorruptContainer on bad magic, unknown version, truncation or
// duplicate names.
std::vector<NamedTensor> decode_container(std::string_view bytes);

// Whole-file helpers; both throw kIo.
std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary and renames it into place, so readers never
// observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

void save_container(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_container(const std::filesystem::path& path);

}  // namespace aasvd
