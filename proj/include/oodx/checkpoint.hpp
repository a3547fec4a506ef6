/*
 * Copyright 2026 The oodx Authors.
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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oodx/binary_io.hpp"
#include "oodx/tensor.hpp"

namespace oodx {

inline constexpr std::string_view kCheckpointMagic = "CKPT";

// Ordered set of named f32 parameter blocks. On disk: "CKPT", then per block
// u32 name length, utf-8 name, u32 rank, rank x u32 dims, f32 payload
// (row-major). Blocks run to end of file.
class Checkpoint {
 public:
  struct Block {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;
  };

  void putMatrix(const std::string& name, const Mat& m) {
    Block b{name, {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, {}};
    b.data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) b.data.push_back(static_cast<float>(m(r, c)));
    }
    put(std::move(b));
  }

  void putScalar(const std::string& name, double v) { put(Block{name, {}, {static_cast<float>(v)}}); }

  bool has(const std::string& name) const { return find(name) != nullptr; }

  Mat getMatrix(const std::string& name) const {
    const Block& b = require(name);
    if (b.dims.size() != 2) throw FormatError("checkpoint block " + name + " is not a matrix");
    Mat m(b.dims[0], b.dims[1]);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = b.data[k++];
    }
    return m;
  }

  double getScalar(const std::string& name) const {
    const Block& b = require(name);
    if (!b.dims.empty() || b.data.size() != 1) throw FormatError("checkpoint block " + name + " is not a scalar");
    return b.data[0];
  }

  const std::vector<Block>& blocks() const { return blocks_; }

  std::vector<char> encode() const {
    io::ByteWriter w;
    w.raw(kCheckpointMagic);
    for (const Block& b : blocks_) {
      w.u32(static_cast<std::uint32_t>(b.name.size()));
      w.raw(b.name);
      w.u32(static_cast<std::uint32_t>(b.dims.size()));
      for (auto d : b.dims) w.u32(d);
      for (float v : b.data) w.f32(v);
    }
    return w.bytes();
  }

  static Checkpoint decode(std::vector<char> bytes, const std::string& source) {
    io::ByteReader r(std::move(bytes), source);
    if (r.size() < 4 || r.raw(4) != kCheckpointMagic) throw FormatError(source + ": bad magic, expected CKPT");
    Checkpoint ck;
    while (!r.atEnd()) {
      Block b;
      const std::uint32_t len = r.u32();
      b.name = r.raw(len);
      const std::uint32_t rank = r.u32();
      std::uint64_t count = 1;
      for (std::uint32_t i = 0; i < rank; ++i) {
        b.dims.push_back(r.u32());
        count *= b.dims.back();
      }
      if (count * 4 > r.remaining()) throw FormatError(source + ": truncated block " + b.name);
      b.data.resize(static_cast<std::size_t>(count));
      for (auto& v : b.data) {
        v = r.f32();
        if (!std::isfinite(v)) throw DataError(source + ": non-finite value in block " + b.name);
      }
      ck.put(std::move(b));
    }
    return ck;
  }

  void write(const std::filesystem::path& path) const { io::writeFileAtomic(path, encode()); }

  static Checkpoint read(const std::filesystem::path& path) {
    return decode(io::readFile(path), path.string());
  }

 private:
  void put(Block b) {
    for (Block& existing : blocks_) {
      if (existing.name == b.name) {
        existing = std::move(b);
        return;
      }
    }
    blocks_.push_back(std::move(b));
  }

  const Block* find(const std::string& name) const {
    for (const Block& b : blocks_) {
      if (b.name == name) return &b;
    }
    return nullptr;
  }

  const Block& require(const std::string& name) const {
    const Block* b = find(name);
    if (!b) throw FormatError("checkpoint has no block named " + name);
    return *b;
  }

  std::vector<Block> blocks_;
};

}  // namespace oodx
