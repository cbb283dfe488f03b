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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "poem/models.hpp"

using namespace poem;

namespace {

std::vector<std::vector<double>> random_rows(Rng& rng, std::size_t rows, std::size_t width) {
  std::vector<std::vector<double>> out(rows, std::vector<double>(width));
  for (auto& r : out)
    for (auto& v : r) v = rng.uniform();
  return out;
}

Tensor rows_tensor(const std::vector<std::vector<double>>& rows) {
  Tensor t(Shape{rows.size(), rows.front().size()});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) t.at(r, c) = rows[r][c];
  return t;
}

}  // namespace

TEST_CASE("mlp shapes and init range") {
  Rng rng(1);
  const Mlp mlp = make_mlp({12, 7, 3}, Activation::kTanh, false, rng);
  REQUIRE(mlp.layers.size() == 2);
  CHECK(mlp.input_width() == 12);
  CHECK(mlp.output_width() == 3);
  const double limit = std::sqrt(3.0 / 12.0);
  for (double w : mlp.layers[0].weight.data()) CHECK(std::abs(w) <= limit);
  for (double b : mlp.layers[0].bias.data()) CHECK(b == 0.0);
  CHECK_THROWS(make_mlp({4}, Activation::kRelu, false, rng));
}

TEST_CASE("unit precision bias maps to precision one") {
  CHECK(std::log1p(std::exp(kUnitPrecisionBias)) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("encoder graph and numeric forward agree; precisions are bounded") {
  const EncoderParams enc = init_encoder({10, 16, 5}, 3);
  Rng rng(4);
  const auto rows = random_rows(rng, 6, 10);
  const auto numeric = encode(enc, rows);
  Graph g;
  const auto nodes = encode_nodes(g, enc, g.input(rows_tensor(rows)), PrecisionMode::kLearned);
  const Tensor& mean = g.value(nodes.out.mean);
  const Tensor& prec = g.value(nodes.out.precision);
  CHECK(mean.shape() == Shape{6, 5});
  CHECK(nodes.params.size() == enc.tensors().size());
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t d = 0; d < 5; ++d) {
      CHECK(mean.at(r, d) == doctest::Approx(numeric[r].mean(static_cast<Eigen::Index>(d))).epsilon(1e-14));
      CHECK(prec.at(r, d) == doctest::Approx(numeric[r].precision(static_cast<Eigen::Index>(d))).epsilon(1e-14));
      CHECK(prec.at(r, d) >= kMinPrecision);
      CHECK(prec.at(r, d) <= kMaxPrecision);
    }
  for (const auto& gauss : encode(enc, rows, PrecisionMode::kFixedUnit))
    CHECK((gauss.precision.array() == 1.0).all());
  CHECK_THROWS(encode(enc, random_rows(rng, 2, 9)));
}

TEST_CASE("encoder gradients pass finite differences") {
  const EncoderParams enc = init_encoder({6, 8, 3}, 5);
  Rng rng(6);
  Graph g;
  const auto nodes = encode_nodes(g, enc, g.input(rows_tensor(random_rows(rng, 4, 6))), PrecisionMode::kLearned);
  const NodeId loss = g.add(g.sum_all(g.square(nodes.out.mean)), g.sum_all(g.log(nodes.out.precision)));
  CHECK(finite_diff_check(g, loss, nodes.params, 1e-5) < 1e-4);
}

TEST_CASE("prototype and closed-form predictive helpers") {
  const std::vector<std::vector<Eigen::VectorXd>> support{{Eigen::VectorXd::Constant(2, 0.0)},
                                                          {Eigen::VectorXd::Constant(2, 2.0),
                                                           Eigen::VectorXd::Constant(2, 4.0)}};
  const Eigen::VectorXd q = Eigen::VectorXd::Constant(2, 1.0);
  const auto proto = proto_scores(support, q);
  CHECK(proto[0] == doctest::Approx(-2.0));
  CHECK(proto[1] == doctest::Approx(-8.0));

  // By hand: item 0 has V = 1, item 1 has V = 2.
  const double l0 = std::pow(0.5, 1.0) * std::exp(-0.25 * 2.0);
  const double l1 = std::pow(2.0 / 3.0, 1.0) * std::exp(-(1.0 / 3.0) * 8.0);
  const auto probs = a4_probabilities(support, q);
  CHECK(probs[0] == doctest::Approx(l0 / (l0 + l1)).epsilon(1e-12));
  CHECK(probs[0] + probs[1] == doctest::Approx(1.0));
}

TEST_CASE("zero-weight decoder gives quarter MSE against one-hot cells") {
  DecoderParams dec = init_decoder({8, 16, 11, 11, 4}, 1);
  CHECK(dec.mlp.layers.size() == 4);
  CHECK(dec.mlp.output_width() == 484);
  for (Tensor* t : dec.tensors())
    for (auto& v : t->data()) v = 0.0;
  Tensor target(Shape{1, 484}, 0.0);
  for (std::size_t c = 0; c < 121; ++c) target[c * 4 + c % 4] = 1.0;
  Graph g;
  std::vector<NodeId> params;
  const NodeId logits = decode_nodes(g, dec, g.input(Tensor(Shape{1, 8}, 0.3)), params);
  CHECK(g.value(mse_node(g, logits, target)).item() == doctest::Approx(0.25));
  CHECK(decode(dec, Eigen::VectorXd::Constant(8, 1.0)) == std::vector<double>(484, 0.0));
}

TEST_CASE("checkpoints round-trip and refuse mismatches") {
  EncoderParams a = init_encoder({10, 16, 5}, 1);
  EncoderParams b = init_encoder({10, 16, 5}, 2);
  const auto path = std::filesystem::temp_directory_path() / "poem_test.ckpt";
  const auto ta = a.tensors();
  const std::vector<const Tensor*> ca(ta.begin(), ta.end());
  save_checkpoint(path, ca, 5, shape_hash(ca));
  const auto header = load_checkpoint(path, b.tensors());
  CHECK(header.embedding == 5);
  CHECK(header.config_hash == shape_hash(ca));
  for (std::size_t k = 0; k < ta.size(); ++k) CHECK(std::equal(ta[k]->data().begin(), ta[k]->data().end(), b.tensors()[k]->data().begin()));

  EncoderParams wrong = init_encoder({10, 12, 5}, 1);
  CHECK_THROWS(load_checkpoint(path, wrong.tensors()));
  const auto cw = wrong.tensors();
  const std::vector<const Tensor*> cwc(cw.begin(), cw.end());
  CHECK(shape_hash(cwc) != shape_hash(ca));

  { std::ofstream(path, std::ios::binary) << "garbage!"; }
  CHECK_THROWS(load_checkpoint(path, b.tensors()));
  std::filesystem::remove(path);
  CHECK_THROWS(load_checkpoint(path, b.tensors()));
}
