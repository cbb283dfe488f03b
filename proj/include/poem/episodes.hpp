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

// Procedural image corpus and the partial-view episode sampler.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "poem/tensor.hpp"

namespace poem {

enum class Condition { kPartial, kFull };

std::string to_string(Condition c);
Condition condition_from_string(const std::string& s);

struct ImageConfig {
  std::size_t channels = 3;
  std::size_t height = 24;
  std::size_t width = 24;
  std::size_t base_components = 4;  // family-level sinusoids
  std::size_t detail_blobs = 6;     // image-level Gaussian blobs
};

struct ProceduralImage {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // [C, H, W] in [0, 1]
  std::uint64_t family_id = 0;
  std::uint64_t image_id = 0;
  std::uint64_t seed = 0;

  double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
};

/// Raw, un-rescaled fields that make up an image: base is shared by a family.
struct ImageComponents {
  std::vector<double> base;
  std::vector<double> detail;
};

ImageComponents image_components(std::uint64_t family_id, std::uint64_t image_id, std::uint64_t master_seed,
                                 const ImageConfig& config = {});

ProceduralImage gen_image(std::uint64_t family_id, std::uint64_t image_id, std::uint64_t master_seed,
                          const ImageConfig& config = {});

/// One partial observation. Image crops carry coords (x, y, w, h) normalized by
/// the image size; gridworld observations carry the normalized pose (x, y, dir).
struct View {
  Shape patch_shape;
  std::vector<double> patch;
  std::vector<double> coords;
  std::size_t item_index = 0;
  /// Exact placement key: crop top-left (x, y, 0) or agent pose (x, y, dir).
  std::array<int, 3> placement{0, 0, 0};

  /// Encoder input: flattened patch followed by coords.
  std::vector<double> features() const;
};

struct EpisodeMeta {
  std::size_t ways = 0;
  std::size_t shots = 0;  // nominal support views per item; 0 when ragged
  Condition condition = Condition::kPartial;
  std::uint64_t seed = 0;
};

struct Episode {
  std::vector<std::vector<View>> support;
  std::vector<View> queries;
  std::vector<std::size_t> targets;
  EpisodeMeta meta;

  std::vector<std::size_t> views_per_item() const;
  std::size_t feature_width() const;
};

struct PoolConfig {
  ImageConfig image;
  std::uint64_t master_seed = 0;
  std::size_t family_offset = 0;  // disjoint ranges give disjoint splits
  std::size_t families = 64;
  std::size_t images_per_family = 64;
};

struct SamplerConfig {
  PoolConfig pool;
  std::size_t crop = 6;
  std::size_t support_views = 8;
  std::size_t query_views = 2;
  std::size_t ways_min = 3;
  std::size_t ways_max = 8;
  std::size_t classes_max = 5;
  double noise_sigma = 0.02;
  double gain_jitter = 0.1;
  double coverage_budget = 0.5;

  static SamplerConfig desk();
  static SamplerConfig paper();
};

/// Support crop area over image area for one item.
double coverage_fraction(const SamplerConfig& config);

class EpisodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Episode sample_episode(const SamplerConfig& config, Condition condition, std::uint64_t episode_seed);

/// Stateless episode stream keyed by index.
class EpisodeSource {
 public:
  virtual ~EpisodeSource() = default;
  virtual Episode episode(std::uint64_t index) const = 0;
  virtual std::size_t feature_width() const = 0;
};

class ImageEpisodeSource final : public EpisodeSource {
 public:
  ImageEpisodeSource(SamplerConfig config, Condition condition, std::uint64_t stream_seed)
      : config_(std::move(config)), condition_(condition), stream_seed_(stream_seed) {}

  Episode episode(std::uint64_t index) const override;
  std::size_t feature_width() const override;
  const SamplerConfig& config() const { return config_; }
  Condition condition() const { return condition_; }

 private:
  SamplerConfig config_;
  Condition condition_;
  std::uint64_t stream_seed_;
};

/// JSON manifest `<stem>.json` plus little-endian float64 payload `<stem>.bin`.
void write_episode(const Episode& episode, const std::filesystem::path& stem);
Episode read_episode(const std::filesystem::path& stem);

}  // namespace poem
