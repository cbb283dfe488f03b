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

#include "poem/models.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string_view>

#include "poem/binary_io.hpp"

namespace poem {
namespace {

constexpr std::string_view kCheckpointMagic = "POEMCKPT";
constexpr std::uint64_t kCheckpointVersion = 1;

void append_layers(Mlp& mlp, std::vector<Tensor*>& out) {
  for (auto& l : mlp.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
}

void append_layers(const Mlp& mlp, std::vector<const Tensor*>& out) {
  for (const auto& l : mlp.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
}

Tensor stack_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("no rows to stack");
  const std::size_t width = rows.front().size();
  Tensor t(Shape{rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width) throw std::invalid_argument("ragged feature rows");
    std::copy(rows[r].begin(), rows[r].end(), t.raw() + r * width);
  }
  return t;
}

Eigen::VectorXd prototype(const std::vector<Eigen::VectorXd>& means) {
  if (means.empty()) throw std::invalid_argument("empty support set");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(means.front().size());
  for (const auto& m : means) p += m;
  return p / static_cast<double>(means.size());
}

}  // namespace

Mlp make_mlp(const std::vector<std::size_t>& widths, Activation activation, bool activate_output, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("an MLP needs at least two widths");
  Mlp mlp;
  mlp.activation = activation;
  mlp.activate_output = activate_output;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const double limit = std::sqrt(3.0 / static_cast<double>(widths[k]));
    DenseLayer layer{Tensor(Shape{widths[k], widths[k + 1]}), Tensor(Shape{1, widths[k + 1]}, 0.0)};
    for (auto& w : layer.weight.data()) w = rng.uniform(-limit, limit);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

NodeId apply_mlp(Graph& g, const Mlp& mlp, NodeId x, std::vector<NodeId>& params) {
  if (g.value(x).rank() != 2 || g.value(x).extent(1) != mlp.input_width())
    throw std::invalid_argument("MLP input width " + std::to_string(g.value(x).extent(1)) + " != " +
                                std::to_string(mlp.input_width()));
  NodeId h = x;
  for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
    const NodeId w = g.parameter(mlp.layers[k].weight);
    const NodeId b = g.parameter(mlp.layers[k].bias);
    params.push_back(w);
    params.push_back(b);
    h = g.add(g.matmul(h, w), b);
    if (k + 1 < mlp.layers.size() || mlp.activate_output)
      h = mlp.activation == Activation::kTanh ? g.tanh(h) : g.relu(h);
  }
  return h;
}

std::vector<Tensor*> EncoderParams::tensors() {
  std::vector<Tensor*> out;
  append_layers(backbone, out);
  append_layers(mean_head, out);
  append_layers(precision_head, out);
  return out;
}

std::vector<const Tensor*> EncoderParams::tensors() const {
  std::vector<const Tensor*> out;
  append_layers(backbone, out);
  append_layers(mean_head, out);
  append_layers(precision_head, out);
  return out;
}

EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  if (config.input_width == 0 || config.hidden == 0 || config.embedding == 0)
    throw std::invalid_argument("encoder widths must be positive");
  Rng rng(seed);
  const std::size_t h = config.hidden;
  EncoderParams p;
  p.config = config;
  p.backbone = make_mlp({config.input_width, h, h, h}, Activation::kTanh, true, rng);
  p.mean_head = make_mlp({h, h, h, config.embedding}, Activation::kTanh, false, rng);
  p.precision_head = make_mlp({h, h, h, config.embedding}, Activation::kTanh, false, rng);
  for (auto& b : p.precision_head.layers.back().bias.data()) b = kUnitPrecisionBias;
  return p;
}

EncoderNodes encode_nodes(Graph& g, const EncoderParams& params, NodeId inputs, PrecisionMode mode) {
  EncoderNodes out;
  // Features live in [0, 1]; centre them so the first layer starts unbiased.
  const NodeId centred = g.shift(g.scale(inputs, 2.0), -1.0);
  const NodeId h = apply_mlp(g, params.backbone, centred, out.params);
  out.out.mean = apply_mlp(g, params.mean_head, h, out.params);
  if (mode == PrecisionMode::kLearned) {
    const NodeId raw = apply_mlp(g, params.precision_head, h, out.params);
    out.out.precision = g.clamp(g.shift(g.softplus(raw), kMinPrecision), kMinPrecision, kMaxPrecision);
  } else {
    // Head tensors stay bound so gradients line up with tensors(); they get zeros.
    for (const auto& l : params.precision_head.layers) {
      out.params.push_back(g.parameter(l.weight));
      out.params.push_back(g.parameter(l.bias));
    }
    out.out.precision = g.constant(Tensor(g.value(out.out.mean).shape(), 1.0));
  }
  return out;
}

std::vector<DiagGaussian<double>> encode(const EncoderParams& params, const std::vector<std::vector<double>>& features,
                                         PrecisionMode mode) {
  Graph g;
  const NodeId x = g.input(stack_rows(features));
  const auto nodes = encode_nodes(g, params, x, mode);
  const Tensor& mu = g.value(nodes.out.mean);
  const Tensor& tau = g.value(nodes.out.precision);
  const std::size_t d = mu.extent(1);
  std::vector<DiagGaussian<double>> out;
  out.reserve(features.size());
  for (std::size_t r = 0; r < features.size(); ++r)
    out.emplace_back(Eigen::Map<const Eigen::VectorXd>(mu.raw() + r * d, static_cast<Eigen::Index>(d)),
                     Eigen::Map<const Eigen::VectorXd>(tau.raw() + r * d, static_cast<Eigen::Index>(d)));
  return out;
}

std::vector<double> proto_scores(const std::vector<std::vector<Eigen::VectorXd>>& support_means,
                                 const Eigen::VectorXd& query_mean) {
  std::vector<double> out;
  out.reserve(support_means.size());
  for (const auto& set : support_means) out.push_back(-(query_mean - prototype(set)).squaredNorm());
  return out;
}

std::vector<double> a4_probabilities(const std::vector<std::vector<Eigen::VectorXd>>& support_means,
                                     const Eigen::VectorXd& query_mean) {
  const double d = static_cast<double>(query_mean.size());
  std::vector<double> logits;
  for (const auto& set : support_means) {
    const double v = static_cast<double>(set.size());
    logits.push_back(0.5 * d * std::log(v / (v + 1.0)) -
                     v / (2.0 * (v + 1.0)) * (query_mean - prototype(set)).squaredNorm());
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (auto& l : logits) total += (l = std::exp(l - mx));
  for (auto& l : logits) l /= total;
  return logits;
}

std::vector<Tensor*> DecoderParams::tensors() {
  std::vector<Tensor*> out;
  append_layers(mlp, out);
  return out;
}

std::vector<const Tensor*> DecoderParams::tensors() const {
  std::vector<const Tensor*> out;
  append_layers(mlp, out);
  return out;
}

DecoderParams init_decoder(const DecoderConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  DecoderParams p;
  p.config = config;
  const std::size_t h = config.hidden;
  p.mlp = make_mlp({config.embedding, h, h, h, config.output_width()}, Activation::kRelu, false, rng);
  return p;
}

NodeId decode_nodes(Graph& g, const DecoderParams& params, NodeId embeddings, std::vector<NodeId>& param_nodes) {
  return apply_mlp(g, params.mlp, embeddings, param_nodes);
}

std::vector<double> decode(const DecoderParams& params, const Eigen::VectorXd& embedding) {
  Graph g;
  const NodeId x = g.input(Tensor(Shape{1, static_cast<std::size_t>(embedding.size())},
                                  std::vector<double>(embedding.data(), embedding.data() + embedding.size())));
  std::vector<NodeId> unused;
  const Tensor& logits = g.value(decode_nodes(g, params, x, unused));
  return {logits.data().begin(), logits.data().end()};
}

NodeId mse_node(Graph& g, NodeId logits, Tensor target) {
  if (target.shape() != g.value(logits).shape())
    throw std::invalid_argument("mse target shape " + shape_string(target.shape()) + " != " +
                                shape_string(g.value(logits).shape()));
  const NodeId diff = g.subtract(logits, g.constant(std::move(target)));
  const NodeId sq = g.square(diff);
  return g.scale(g.sum_all(sq), 1.0 / static_cast<double>(g.value(sq).size()));
}

std::uint64_t shape_hash(std::span<const Tensor* const> tensors) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  feed(tensors.size());
  for (const Tensor* t : tensors) {
    feed(t->rank());
    for (auto e : t->shape()) feed(e);
  }
  return h;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const Tensor* const> tensors, std::uint64_t embedding,
                     std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
  put_u64_le(out, kCheckpointVersion);
  put_u64_le(out, embedding);
  put_u64_le(out, config_hash);
  put_u64_le(out, tensors.size());
  for (const Tensor* t : tensors) {
    put_u64_le(out, t->rank());
    for (auto e : t->shape()) put_u64_le(out, e);
  }
  for (const Tensor* t : tensors)
    for (double v : t->data()) put_f64_le(out, v);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

CheckpointHeader load_checkpoint(const std::filesystem::path& path, std::span<Tensor* const> tensors) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::string magic(kCheckpointMagic.size(), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (magic != kCheckpointMagic) throw std::runtime_error("not a checkpoint: " + path.string());
  CheckpointHeader header;
  header.version = get_u64_le(in);
  if (header.version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  header.embedding = get_u64_le(in);
  header.config_hash = get_u64_le(in);
  const std::uint64_t count = get_u64_le(in);
  if (count != tensors.size()) throw std::runtime_error("checkpoint tensor count mismatch");
  for (std::uint64_t k = 0; k < count; ++k) {
    Shape s(get_u64_le(in));
    for (auto& e : s) e = get_u64_le(in);
    if (s != tensors[k]->shape())
      throw std::runtime_error("checkpoint shape mismatch at tensor " + std::to_string(k) + ": " + shape_string(s));
    header.shapes.push_back(std::move(s));
  }
  for (Tensor* t : tensors)
    for (auto& v : t->data()) v = get_f64_le(in);
  return header;
}

}  // namespace poem
