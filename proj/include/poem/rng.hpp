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

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace poem {

/// splitmix64 finalizer: x += 0x9e3779b97f4a7c15, then two xor-shift-multiply
/// rounds (0xbf58476d1ce4e5b9, 0x94d049bb133111eb) and a final xor-shift.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derived seed for stream `index` under `master`: splitmix64(master ^ splitmix64(index)).
constexpr std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index));
}

/// Stream tags, so that e.g. training and evaluation episodes never share seeds.
enum class Stream : std::uint64_t {
  kTrainEpisodes = 0x7472'6169'6e00'0001ULL,
  kEvalEpisodes = 0x6576'616c'0000'0002ULL,
  kInit = 0x696e'6974'0000'0003ULL,
  kDiagnostic = 0x6469'6167'0000'0004ULL,
  kDecoderTrain = 0x6465'6374'0000'0005ULL,
  kDecoderTest = 0x6465'6373'0000'0006ULL,
};

constexpr std::uint64_t stream_seed(std::uint64_t master, Stream stream) {
  return mix_seed(master, static_cast<std::uint64_t>(stream));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  /// Inclusive range.
  std::size_t index(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_);
  }
  std::uint64_t next() { return engine_(); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace poem
