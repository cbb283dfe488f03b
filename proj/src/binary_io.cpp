// Copyright 2026 The POEM Authors
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

#include "poem/binary_io.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <stdexcept>

namespace poem {

void put_u64_le(std::ostream& out, std::uint64_t value) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[static_cast<std::size_t>(i)] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

void put_f64_le(std::ostream& out, double value) { put_u64_le(out, std::bit_cast<std::uint64_t>(value)); }

std::uint64_t get_u64_le(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw std::runtime_error("unexpected end of binary stream");
  std::uint64_t value = 0;
  for (int i = 7; i >= 0; --i) value = (value << 8) | bytes[static_cast<std::size_t>(i)];
  return value;
}

double get_f64_le(std::istream& in) { return std::bit_cast<double>(get_u64_le(in)); }

void write_f64_le(const std::filesystem::path& path, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (double v : values) put_f64_le(out, v);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<double> read_f64_le(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % 8 != 0) throw std::runtime_error("payload size is not a multiple of 8: " + path.string());
  in.seekg(0);
  std::vector<double> values(bytes / 8);
  for (auto& v : values) v = get_f64_le(in);
  return values;
}

}  // namespace poem
