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

#include "poem/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

#include <json.hpp>

#include "poem/binary_io.hpp"
#include "poem/rng.hpp"

namespace poem {

std::string to_string(Condition c) { return c == Condition::kPartial ? "partial" : "full"; }

Condition condition_from_string(const std::string& s) {
  if (s == "partial") return Condition::kPartial;
  if (s == "full") return Condition::kFull;
  throw std::invalid_argument("unknown condition '" + s + "'");
}

ImageComponents image_components(std::uint64_t family_id, std::uint64_t image_id, std::uint64_t master_seed,
                                 const ImageConfig& config) {
  const std::size_t c_n = config.channels;
  const std::size_t h_n = config.height;
  const std::size_t w_n = config.width;
  ImageComponents out{std::vector<double>(c_n * h_n * w_n, 0.0), std::vector<double>(c_n * h_n * w_n, 0.0)};

  const std::uint64_t family_seed = mix_seed(master_seed, family_id);
  Rng family_rng(mix_seed(family_seed, 0));
  for (std::size_t k = 0; k < config.base_components; ++k) {
    const double fx = family_rng.uniform(-2.5, 2.5);
    const double fy = family_rng.uniform(-2.5, 2.5);
    const double phase = family_rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t c = 0; c < c_n; ++c) {
      const double amp = family_rng.uniform(0.5, 1.0);
      for (std::size_t y = 0; y < h_n; ++y)
        for (std::size_t x = 0; x < w_n; ++x) {
          const double arg = 2.0 * std::numbers::pi *
                                 (fx * static_cast<double>(x) / static_cast<double>(w_n) +
                                  fy * static_cast<double>(y) / static_cast<double>(h_n)) +
                             phase;
          out.base[(c * h_n + y) * w_n + x] += amp * std::sin(arg);
        }
    }
  }

  Rng image_rng(mix_seed(family_seed, image_id + 1));
  const double scale = static_cast<double>(std::max(h_n, w_n));
  for (std::size_t k = 0; k < config.detail_blobs; ++k) {
    const double cx = image_rng.uniform(0.0, static_cast<double>(w_n));
    const double cy = image_rng.uniform(0.0, static_cast<double>(h_n));
    const double sigma = image_rng.uniform(0.08, 0.2) * scale;
    for (std::size_t c = 0; c < c_n; ++c) {
      const double amp = image_rng.uniform(-1.5, 1.5);
      for (std::size_t y = 0; y < h_n; ++y)
        for (std::size_t x = 0; x < w_n; ++x) {
          const double dx = static_cast<double>(x) - cx;
          const double dy = static_cast<double>(y) - cy;
          out.detail[(c * h_n + y) * w_n + x] += amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        }
    }
  }
  return out;
}

ProceduralImage gen_image(std::uint64_t family_id, std::uint64_t image_id, std::uint64_t master_seed,
                          const ImageConfig& config) {
  auto parts = image_components(family_id, image_id, master_seed, config);
  ProceduralImage img;
  img.channels = config.channels;
  img.height = config.height;
  img.width = config.width;
  img.family_id = family_id;
  img.image_id = image_id;
  img.seed = master_seed;
  img.pixels.resize(parts.base.size());
  const std::size_t plane = config.height * config.width;
  for (std::size_t c = 0; c < config.channels; ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
      img.pixels[i] = parts.base[i] + parts.detail[i];
      lo = std::min(lo, img.pixels[i]);
      hi = std::max(hi, img.pixels[i]);
    }
    const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) img.pixels[i] = (img.pixels[i] - lo) / span;
  }
  return img;
}

std::vector<double> View::features() const {
  std::vector<double> out;
  out.reserve(patch.size() + coords.size());
  out.insert(out.end(), patch.begin(), patch.end());
  out.insert(out.end(), coords.begin(), coords.end());
  return out;
}

std::vector<std::size_t> Episode::views_per_item() const {
  std::vector<std::size_t> out;
  out.reserve(support.size());
  for (const auto& s : support) out.push_back(s.size());
  return out;
}

std::size_t Episode::feature_width() const {
  if (support.empty() || support.front().empty()) return 0;
  const View& v = support.front().front();
  return v.patch.size() + v.coords.size();
}

SamplerConfig SamplerConfig::desk() { return SamplerConfig{}; }

SamplerConfig SamplerConfig::paper() {
  SamplerConfig c;
  c.pool.image.height = 84;
  c.pool.image.width = 84;
  c.crop = 14;
  c.support_views = 18;
  c.ways_min = 5;
  c.ways_max = 25;
  return c;
}

double coverage_fraction(const SamplerConfig& config) {
  const double crop_area = static_cast<double>(config.crop * config.crop);
  const double image_area = static_cast<double>(config.pool.image.height * config.pool.image.width);
  return static_cast<double>(config.support_views) * crop_area / image_area;
}

namespace {

View make_view(const ProceduralImage& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h,
               std::size_t item, const SamplerConfig& cfg, Rng& rng) {
  View v;
  v.patch_shape = {img.channels, h, w};
  v.patch.resize(img.channels * h * w);
  for (std::size_t c = 0; c < img.channels; ++c) {
    const double gain = 1.0 + rng.uniform(-cfg.gain_jitter, cfg.gain_jitter);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        v.patch[(c * h + y) * w + x] = gain * img.at(c, y0 + y, x0 + x) + rng.normal(0.0, cfg.noise_sigma);
  }
  v.coords = {static_cast<double>(x0) / static_cast<double>(img.width),
              static_cast<double>(y0) / static_cast<double>(img.height),
              static_cast<double>(w) / static_cast<double>(img.width),
              static_cast<double>(h) / static_cast<double>(img.height)};
  v.item_index = item;
  v.placement = {static_cast<int>(x0), static_cast<int>(y0), 0};
  return v;
}

}  // namespace

Episode sample_episode(const SamplerConfig& cfg, Condition condition, std::uint64_t episode_seed) {
  const auto& pool = cfg.pool;
  const auto& ic = pool.image;
  if (cfg.crop == 0 || cfg.crop > ic.height || cfg.crop > ic.width) throw EpisodeError("crop larger than image");
  if (cfg.ways_min == 0 || cfg.ways_min > cfg.ways_max) throw EpisodeError("invalid ways range");
  if (cfg.classes_max == 0 || cfg.classes_max > pool.families) throw EpisodeError("pool exhausted: too few families");
  if (cfg.support_views == 0 || cfg.query_views == 0) throw EpisodeError("support and query views must be positive");
  if (condition == Condition::kPartial && coverage_fraction(cfg) > cfg.coverage_budget + 1e-12)
    throw EpisodeError("support crops exceed the coverage budget");

  Rng rng(episode_seed);
  const std::size_t classes = rng.index(1, cfg.classes_max);
  const std::size_t ways = rng.index(cfg.ways_min, cfg.ways_max);
  if (ways > classes * pool.images_per_family) throw EpisodeError("pool exhausted: not enough images");

  std::vector<std::size_t> families(pool.families);
  for (std::size_t i = 0; i < families.size(); ++i) families[i] = pool.family_offset + i;
  rng.shuffle(families);
  families.resize(classes);

  std::vector<std::pair<std::size_t, std::size_t>> items;  // (family, image)
  std::set<std::pair<std::size_t, std::size_t>> used;
  for (std::size_t k = 0; k < ways; ++k) {
    const std::size_t fam = families[k % classes];
    std::pair<std::size_t, std::size_t> pick;
    do {
      pick = {fam, rng.index(0, pool.images_per_family - 1)};
    } while (used.count(pick));
    used.insert(pick);
    items.push_back(pick);
  }

  Episode ep;
  ep.meta = {ways, cfg.support_views, condition, episode_seed};
  ep.support.resize(ways);
  const std::size_t px = ic.width - cfg.crop + 1;
  const std::size_t py = ic.height - cfg.crop + 1;
  if (condition == Condition::kPartial && cfg.support_views + cfg.query_views > px * py)
    throw EpisodeError("not enough distinct crop placements");

  for (std::size_t m = 0; m < ways; ++m) {
    const ProceduralImage img = gen_image(items[m].first, items[m].second, pool.master_seed, ic);
    if (condition == Condition::kFull) {
      for (std::size_t v = 0; v < cfg.support_views; ++v)
        ep.support[m].push_back(make_view(img, 0, 0, ic.width, ic.height, m, cfg, rng));
      for (std::size_t q = 0; q < cfg.query_views; ++q) {
        ep.queries.push_back(make_view(img, 0, 0, ic.width, ic.height, m, cfg, rng));
        ep.targets.push_back(m);
      }
      continue;
    }
    // Distinct placements: the first V go to support, the rest to queries.
    std::vector<std::size_t> chosen;
    std::set<std::size_t> seen;
    while (chosen.size() < cfg.support_views + cfg.query_views) {
      const std::size_t p = rng.index(0, px * py - 1);
      if (seen.insert(p).second) chosen.push_back(p);
    }
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      const std::size_t x0 = chosen[i] % px;
      const std::size_t y0 = chosen[i] / px;
      View v = make_view(img, x0, y0, cfg.crop, cfg.crop, m, cfg, rng);
      if (i < cfg.support_views) {
        ep.support[m].push_back(std::move(v));
      } else {
        ep.queries.push_back(std::move(v));
        ep.targets.push_back(m);
      }
    }
  }
  return ep;
}

Episode ImageEpisodeSource::episode(std::uint64_t index) const {
  return sample_episode(config_, condition_, mix_seed(stream_seed_, index));
}

std::size_t ImageEpisodeSource::feature_width() const {
  const auto& ic = config_.pool.image;
  const std::size_t pixels = condition_ == Condition::kFull ? ic.height * ic.width : config_.crop * config_.crop;
  return ic.channels * pixels + 4;
}

namespace {

nlohmann::json view_json(const View& v, const std::string& role, std::size_t offset) {
  return {{"role", role},
          {"item", v.item_index},
          {"patch_shape", v.patch_shape},
          {"coords", v.coords},
          {"placement", v.placement},
          {"offset", offset},
          {"count", v.patch.size()}};
}

}  // namespace

void write_episode(const Episode& episode, const std::filesystem::path& stem) {
  std::filesystem::path json_path = stem;
  json_path += ".json";
  std::filesystem::path bin_path = stem;
  bin_path += ".bin";

  nlohmann::json manifest;
  manifest["format"] = "poem-episode";
  manifest["version"] = 1;
  manifest["ways"] = episode.meta.ways;
  manifest["shots"] = episode.meta.shots;
  manifest["condition"] = to_string(episode.meta.condition);
  manifest["seed"] = episode.meta.seed;
  manifest["targets"] = episode.targets;
  manifest["payload"] = bin_path.filename().string();
  manifest["dtype"] = "float64-le";

  std::vector<double> payload;
  nlohmann::json views = nlohmann::json::array();
  for (const auto& item : episode.support)
    for (const auto& v : item) {
      views.push_back(view_json(v, "support", payload.size()));
      payload.insert(payload.end(), v.patch.begin(), v.patch.end());
    }
  for (const auto& v : episode.queries) {
    views.push_back(view_json(v, "query", payload.size()));
    payload.insert(payload.end(), v.patch.begin(), v.patch.end());
  }
  manifest["views"] = std::move(views);

  write_f64_le(bin_path, payload);
  std::ofstream out(json_path);
  if (!out) throw std::runtime_error("cannot write " + json_path.string());
  out << manifest.dump(2) << '\n';
}

Episode read_episode(const std::filesystem::path& stem) {
  std::filesystem::path json_path = stem;
  json_path += ".json";
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot read " + json_path.string());
  const auto manifest = nlohmann::json::parse(in);
  if (manifest.at("format") != "poem-episode") throw std::runtime_error("not an episode manifest");

  const auto payload = read_f64_le(json_path.parent_path() / manifest.at("payload").get<std::string>());
  Episode ep;
  ep.meta.ways = manifest.at("ways");
  ep.meta.shots = manifest.at("shots");
  ep.meta.condition = condition_from_string(manifest.at("condition"));
  ep.meta.seed = manifest.at("seed");
  ep.targets = manifest.at("targets").get<std::vector<std::size_t>>();
  ep.support.resize(ep.meta.ways);
  for (const auto& j : manifest.at("views")) {
    View v;
    v.patch_shape = j.at("patch_shape").get<Shape>();
    v.coords = j.at("coords").get<std::vector<double>>();
    v.placement = j.at("placement").get<std::array<int, 3>>();
    v.item_index = j.at("item");
    const std::size_t offset = j.at("offset");
    const std::size_t count = j.at("count");
    if (offset + count > payload.size()) throw std::runtime_error("episode payload truncated");
    v.patch.assign(payload.begin() + static_cast<std::ptrdiff_t>(offset),
                   payload.begin() + static_cast<std::ptrdiff_t>(offset + count));
    if (j.at("role") == "support")
      ep.support.at(v.item_index).push_back(std::move(v));
    else
      ep.queries.push_back(std::move(v));
  }
  return ep;
}

}  // namespace poem
