// Copyright (c) 2026 The rangeseg Authors
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

// Checkpoint layout (all integers uint32 LE, payloads float32 LE):
//
//   "RSCK" | version | epoch | record_count
//   record: name_len | name bytes | kind (0 = parameter, 1 = buffer)
//           | ndim | dims[ndim] | payload[prod(dims)]

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "rangeseg/ad/optim.hpp"
#include "rangeseg/errors.hpp"
#include "rangeseg/scan_io.hpp"

namespace rangeseg::ad
{

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail
{

inline void put_u32(std::vector<char> & out, std::uint32_t v)
{
  char b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

class ByteReader
{
public:
  ByteReader(const std::vector<char> & bytes, std::string origin)
  : bytes_(bytes), origin_(std::move(origin)) {}

  std::uint32_t u32()
  {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n)
  {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void floats(float * dst, std::size_t n)
  {
    need(4 * n);
    std::memcpy(dst, bytes_.data() + pos_, 4 * n);
    pos_ += 4 * n;
  }
  bool done() const {return pos_ == bytes_.size();}

private:
  void need(std::size_t n) const
  {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(origin_ + ": checkpoint truncated at byte " + std::to_string(pos_));
    }
  }
  const std::vector<char> & bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template<typename T>
void save_checkpoint(
  const std::filesystem::path & path, const std::vector<NamedTensor<T>> & params,
  const std::vector<NamedBuffer<T>> & buffers, std::uint32_t epoch)
{
  std::vector<char> out;
  out.insert(out.end(), {'R', 'S', 'C', 'K'});
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, epoch);
  detail::put_u32(out, static_cast<std::uint32_t>(params.size() + buffers.size()));
  auto record = [&out](const std::string & name, std::uint32_t kind, const Shape & shape, std::span<const T> v) {
      detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
      out.insert(out.end(), name.begin(), name.end());
      detail::put_u32(out, kind);
      detail::put_u32(out, static_cast<std::uint32_t>(shape.size()));
      for (const auto d : shape) {
        detail::put_u32(out, static_cast<std::uint32_t>(d));
      }
      for (const T x : v) {
        const float f = static_cast<float>(x);
        char b[4];
        std::memcpy(b, &f, 4);
        out.insert(out.end(), b, b + 4);
      }
    };
  for (const auto & p : params) {
    record(p.name, 0, p.tensor.shape(), p.tensor.values());
  }
  for (const auto & b : buffers) {
    record(b.name, 1, Shape{b.values->size()}, std::span<const T>(*b.values));
  }
  rangeseg::detail::write_all_bytes(path, out.data(), out.size());
}

/// Loads values into existing, identically named and shaped tensors/buffers.
/// Returns the stored epoch.
template<typename T>
std::uint32_t load_checkpoint(
  const std::filesystem::path & path, const std::vector<NamedTensor<T>> & params,
  const std::vector<NamedBuffer<T>> & buffers)
{
  const auto bytes = rangeseg::detail::read_all_bytes(path);
  detail::ByteReader in(bytes, path.string());
  if (in.str(4) != "RSCK") {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t epoch = in.u32();
  const std::uint32_t count = in.u32();

  struct Record
  {
    std::uint32_t kind;
    Shape shape;
    std::vector<float> values;
  };
  std::map<std::string, Record> records;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::string name = in.str(in.u32());
    Record rec;
    rec.kind = in.u32();
    const std::uint32_t nd = in.u32();
    for (std::uint32_t d = 0; d < nd; ++d) {
      rec.shape.push_back(in.u32());
    }
    rec.values.resize(shape_numel(rec.shape));
    in.floats(rec.values.data(), rec.values.size());
    records.emplace(name, std::move(rec));
  }
  if (!in.done()) {
    throw FormatError(path.string() + ": trailing bytes after last record");
  }
  auto fetch = [&](const std::string & name, std::uint32_t kind, const Shape & shape) -> const Record & {
      auto it = records.find(name);
      if (it == records.end() || it->second.kind != kind) {
        throw FormatError(path.string() + ": missing record '" + name + "'");
      }
      if (it->second.shape != shape) {
        throw FormatError(path.string() + ": record '" + name + "' has shape " + shape_str(it->second.shape) +
                          ", model expects " + shape_str(shape));
      }
      return it->second;
    };
  for (const auto & p : params) {
    const Record & rec = fetch(p.name, 0, p.tensor.shape());
    Tensor<T> t = p.tensor;
    auto v = t.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = static_cast<T>(rec.values[i]);
    }
  }
  for (const auto & b : buffers) {
    const Record & rec = fetch(b.name, 1, Shape{b.values->size()});
    for (std::size_t i = 0; i < b.values->size(); ++i) {
      (*b.values)[i] = static_cast<T>(rec.values[i]);
    }
  }
  return epoch;
}

}  // namespace rangeseg::ad
