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


#include "aasvd/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <system_error>

namespace aasvd {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint64_t uint(int width, const char* what) {
    need(static_cast<std::size_t>(width), what);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    const auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw Error(ErrorCode::kCorruptContainer, std::string("truncated while reading ") + what +
                                                    " at byte " + std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(Index v, const std::string& what) {
  if (v < 0 || v > static_cast<Index>(std::numeric_limits<std::uint32_t>::max())) {
    throw Error(ErrorCode::kDimensionMismatch, what + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string encode_container(const std::vector<NamedTensor>& tensors) {
  std::string out(kContainerMagic, sizeof(kContainerMagic));
  put_u32(out, kContainerVersion);
  for (const auto& t : tensors) {
    put_u32(out, checked_u32(static_cast<Index>(t.name.size()), "name of " + t.name));
    out += t.name;
    put_u32(out, checked_u32(t.value.rows(), "rows of " + t.name));
    put_u32(out, checked_u32(t.value.cols(), "cols of " + t.name));
    const double* p = t.value.data();
    for (Index i = 0; i < t.value.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(p[i]));
  }
  return out;
}

std::vector<NamedTensor> decode_container(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4, "magic") != std::string_view(kContainerMagic, 4)) {
    throw Error(ErrorCode::kCorruptContainer, "bad magic");
  }
  const auto version = in.uint(4, "version");
  if (version != kContainerVersion) {
    throw Error(ErrorCode::kCorruptContainer, "unsupported version " + std::to_string(version));
  }
  std::vector<NamedTensor> tensors;
  std::set<std::string, std::less<>> seen;
  while (!in.done()) {
    NamedTensor t;
    const auto name_len = in.uint(4, "name length");
    t.name = std::string(in.take(name_len, "name"));
    if (!seen.insert(t.name).second) {
      throw Error(ErrorCode::kCorruptContainer, "duplicate tensor '" + t.name + "'");
    }
    const auto rows = in.uint(4, "rows");
    const auto cols = in.uint(4, "cols");
    const std::uint64_t count = rows * cols;
    if (count > in.remaining() / 8) {
      throw Error(ErrorCode::kCorruptContainer, "tensor '" + t.name + "' claims " +
                                                    std::to_string(rows) + "x" +
                                                    std::to_string(cols) + " past end of file");
    }
    t.value.resize(static_cast<Index>(rows), static_cast<Index>(cols));
    double* p = t.value.data();
    for (std::uint64_t i = 0; i < count; ++i) {
      p[i] = std::bit_cast<double>(in.uint(8, "values"));
    }
    tensors.push_back(std::move(t));
  }
  return tensors;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) throw Error(ErrorCode::kIo, "read failed for " + path.string());
  return std::move(ss).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::kIo, "cannot create " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) {
      f.close();
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw Error(ErrorCode::kIo, "write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw Error(ErrorCode::kIo, "cannot move " + tmp.string() + " to " + path.string() + ": " +
                                    ec.message());
  }
}

void save_container(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  write_file_atomic(path, encode_container(tensors));
}

std::vector<NamedTensor> load_container(const std::filesystem::path& path) {
  return decode_container(read_file(path));
}

}  // namespace aasvd
