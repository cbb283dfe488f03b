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

#include <doctest.h>

#include <cmath>
#include <limits>

#include "poem/binary_io.hpp"
#include "poem/rng.hpp"
#include "poem/tensor.hpp"

#include <filesystem>
#include <sstream>

using namespace poem;

TEST_CASE("tensor construction and shape bookkeeping") {
  const Tensor t(Shape{2, 3}, 1.5);
  CHECK(t.rank() == 2);
  CHECK(t.size() == 6);
  CHECK(t.extent(1) == 3);
  CHECK(t[5] == 1.5);
  CHECK(shape_string(t.shape()) == "[2, 3]");

  const Tensor s = Tensor::scalar(4.0);
  CHECK(s.rank() == 0);
  CHECK(s.item() == 4.0);

  CHECK_THROWS_AS(Tensor(Shape{2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
  CHECK_THROWS(t.item());
}

TEST_CASE("matrix view is row-major") {
  Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  CHECK(m.at(0, 1) == 2);
  CHECK(m.matrix()(1, 0) == 3);
  m.matrix()(1, 1) = 9;
  CHECK(m[3] == 9);
  CHECK_THROWS(Tensor::vector({1, 2}).matrix());
}

TEST_CASE("reshape keeps data and checks size") {
  const Tensor v = Tensor::vector({1, 2, 3, 4, 5, 6});
  const Tensor m = v.reshaped({3, 2});
  CHECK(m.at(2, 1) == 6);
  CHECK_THROWS(v.reshaped({4, 2}));
}

TEST_CASE("all_finite spots NaN and infinity") {
  Tensor t(Shape{3}, 0.0);
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
  t[1] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("little-endian encoding round-trips exactly") {
  std::stringstream buf;
  put_u64_le(buf, 0x0102030405060708ULL);
  put_f64_le(buf, -0.1);
  put_f64_le(buf, std::numeric_limits<double>::denorm_min());
  const std::string bytes = buf.str();
  REQUIRE(bytes.size() == 24);
  CHECK(static_cast<unsigned char>(bytes[0]) == 0x08);
  CHECK(static_cast<unsigned char>(bytes[7]) == 0x01);
  CHECK(get_u64_le(buf) == 0x0102030405060708ULL);
  CHECK(get_f64_le(buf) == -0.1);
  CHECK(get_f64_le(buf) == std::numeric_limits<double>::denorm_min());
}

TEST_CASE("float64 files round-trip") {
  const auto path = std::filesystem::temp_directory_path() / "poem_test_f64.bin";
  const std::vector<double> values{1.0, -2.5, 1e-300, 3.141592653589793};
  write_f64_le(path, values);
  CHECK(std::filesystem::file_size(path) == 32);
  CHECK(read_f64_le(path) == values);
  std::filesystem::remove(path);
}

TEST_CASE("seed mixing is deterministic and spreads nearby inputs") {
  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  CHECK(stream_seed(7, Stream::kTrainEpisodes) != stream_seed(7, Stream::kEvalEpisodes));
  // Adjacent indices should differ in roughly half their bits.
  int bits = 0;
  for (std::uint64_t i = 0; i < 64; ++i) bits += std::popcount(mix_seed(42, i) ^ mix_seed(42, i + 1));
  CHECK(bits / 64.0 == doctest::Approx(32.0).epsilon(0.15));

  Rng a(9), b(9);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
}
