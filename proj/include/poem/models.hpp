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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "poem/autodiff.hpp"
#include "poem/gaussian.hpp"
#include "poem/poe_graph.hpp"
#include "poem/rng.hpp"

namespace poem {

enum class Activation { kTanh, kRelu };

/// y = x W + b with W [in, out] and b [1, out].
struct DenseLayer {
  Tensor weight;
  Tensor bias;
};

struct Mlp {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::kTanh;
  /// Whether the last layer is followed by the activation too.
  bool activate_output = false;

  std::size_t input_width() const { return layers.front().weight.extent(0); }
  std::size_t output_width() const { return layers.back().weight.extent(1); }
};

/// Dense layers of the given widths, weights ~ U(-sqrt(3/fan_in), sqrt(3/fan_in)) (unit variance gain), zero bias.
Mlp make_mlp(const std::vector<std::size_t>& widths, Activation activation, bool activate_output, Rng& rng);

/// Binds the layer tensors as parameters (appended to `params`) and applies them.
NodeId apply_mlp(Graph& g, const Mlp& mlp, NodeId x, std::vector<NodeId>& params);

enum class PrecisionMode { kLearned, kFixedUnit };

struct EncoderConfig {
  std::size_t input_width = 0;
  std::size_t hidden = 256;
  std::size_t embedding = 64;
};

/// Shared tanh backbone with separate mean and precision heads.
/// precision = clamp(softplus(head) + 1e-6, 1e-6, 1e6).
struct EncoderParams {
  EncoderConfig config;
  Mlp backbone;
  Mlp mean_head;
  Mlp precision_head;

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
};

/// softplus^-1(1): the precision head's final bias, so training starts at tau ~ 1.
inline constexpr double kUnitPrecisionBias = 0.54132485461291810;

EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed);

struct EncoderNodes {
  GaussianNodes out;          // [B, D]
  std::vector<NodeId> params;  // aligned with EncoderParams::tensors()
};

/// `inputs` is [B, input_width].
EncoderNodes encode_nodes(Graph& g, const EncoderParams& params, NodeId inputs, PrecisionMode mode);

/// Numeric forward pass; one DiagGaussian per row of `features`.
std::vector<DiagGaussian<double>> encode(const EncoderParams& params, const std::vector<std::vector<double>>& features,
                                         PrecisionMode mode = PrecisionMode::kLearned);

/// -|query - mean of support_m|^2 for every item m.
std::vector<double> proto_scores(const std::vector<std::vector<Eigen::VectorXd>>& support_means,
                                 const Eigen::VectorXd& query_mean);

/// Softmax over items of (V/(V+1))^(D/2) exp(-V/(2(V+1)) |query - prototype|^2),
/// the exact unit-precision product-of-experts predictive.
std::vector<double> a4_probabilities(const std::vector<std::vector<Eigen::VectorXd>>& support_means,
                                     const Eigen::VectorXd& query_mean);

struct DecoderConfig {
  std::size_t embedding = 64;
  std::size_t hidden = 256;
  std::size_t grid_height = 11;
  std::size_t grid_width = 11;
  std::size_t cell_types = 4;

  std::size_t output_width() const { return grid_height * grid_width * cell_types; }
};

/// Four ReLU dense layers from the embedding to per-cell logits.
struct DecoderParams {
  DecoderConfig config;
  Mlp mlp;

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
};

DecoderParams init_decoder(const DecoderConfig& config, std::uint64_t seed);

/// `embeddings` [B, D] -> logits [B, H * W * cell_types].
NodeId decode_nodes(Graph& g, const DecoderParams& params, NodeId embeddings, std::vector<NodeId>& param_nodes);

std::vector<double> decode(const DecoderParams& params, const Eigen::VectorXd& embedding);

/// Mean squared error between logits and a same-shaped target, as a scalar node.
NodeId mse_node(Graph& g, NodeId logits, Tensor target);

/// Stable content hash of a set of tensors' shapes (FNV-1a over extents).
std::uint64_t shape_hash(std::span<const Tensor* const> tensors);

/// Binary checkpoint: magic "POEMCKPT", u64 version, u64 embedding dim,
/// u64 config hash, u64 tensor count, then per tensor u64 rank, u64 extents,
/// followed by all weights as little-endian float64 in tensor order.
void save_checkpoint(const std::filesystem::path& path, std::span<const Tensor* const> tensors, std::uint64_t embedding,
                     std::uint64_t config_hash);

struct CheckpointHeader {
  std::uint64_t version = 0;
  std::uint64_t embedding = 0;
  std::uint64_t config_hash = 0;
  std::vector<Shape> shapes;
};

/// Loads into `tensors`, which must match the stored shapes.
CheckpointHeader load_checkpoint(const std::filesystem::path& path, std::span<Tensor* const> tensors);

}  // namespace poem
