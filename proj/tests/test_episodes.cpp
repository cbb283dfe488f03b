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
#include <filesystem>
#include <set>

#include "poem/episodes.hpp"
#include "poem/rng.hpp"

using namespace poem;

TEST_CASE("procedural images are deterministic and normalized") {
  const ImageConfig cfg;
  const auto a = gen_image(3, 7, 11, cfg);
  const auto b = gen_image(3, 7, 11, cfg);
  CHECK(a.pixels == b.pixels);
  CHECK(a.pixels.size() == 3 * 24 * 24);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto first = a.pixels.begin() + static_cast<std::ptrdiff_t>(c * 576);
    const auto [lo, hi] = std::minmax_element(first, first + 576);
    CHECK(*lo == doctest::Approx(0.0));
    CHECK(*hi == doctest::Approx(1.0));
  }
  CHECK(gen_image(3, 8, 11, cfg).pixels != a.pixels);
  CHECK(gen_image(3, 7, 12, cfg).pixels != a.pixels);
}

TEST_CASE("images in a family share their base field") {
  const auto a = image_components(5, 0, 1);
  const auto b = image_components(5, 1, 1);
  const auto c = image_components(6, 0, 1);
  CHECK(a.base == b.base);
  CHECK(a.detail != b.detail);
  CHECK(a.base != c.base);
}

TEST_CASE("partial episodes respect placements, coverage and shapes") {
  const SamplerConfig cfg = SamplerConfig::desk();
  CHECK(coverage_fraction(cfg) <= cfg.coverage_budget);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Episode ep = sample_episode(cfg, Condition::kPartial, seed);
    CHECK(ep.meta.ways >= cfg.ways_min);
    CHECK(ep.meta.ways <= cfg.ways_max);
    REQUIRE(ep.support.size() == ep.meta.ways);
    CHECK(ep.queries.size() == ep.meta.ways * cfg.query_views);
    CHECK(ep.feature_width() == 3 * 36 + 4);
    for (std::size_t m = 0; m < ep.meta.ways; ++m) {
      CHECK(ep.support[m].size() == cfg.support_views);
      std::set<std::array<int, 3>> placements;
      for (const auto& v : ep.support[m]) {
        CHECK(v.item_index == m);
        CHECK(placements.insert(v.placement).second);
        CHECK(v.coords[2] == doctest::Approx(0.25));
        CHECK(v.coords[0] + v.coords[2] <= 1.0 + 1e-12);
      }
      for (std::size_t q = 0; q < ep.queries.size(); ++q)
        if (ep.targets[q] == m) CHECK(placements.insert(ep.queries[q].placement).second);
    }
  }
}

TEST_CASE("noise-free crops copy the image exactly") {
  SamplerConfig cfg = SamplerConfig::desk();
  cfg.noise_sigma = 0.0;
  cfg.gain_jitter = 0.0;
  cfg.classes_max = 1;
  cfg.ways_min = cfg.ways_max = 1;
  const Episode ep = sample_episode(cfg, Condition::kPartial, 5);
  // Recover the source image: one family, one image, so search the pool.
  const View& v = ep.support[0][0];
  bool matched = false;
  for (std::size_t fam = 0; fam < cfg.pool.families && !matched; ++fam)
    for (std::size_t id = 0; id < cfg.pool.images_per_family && !matched; ++id) {
      const auto img = gen_image(fam, id, cfg.pool.master_seed, cfg.pool.image);
      bool same = true;
      for (std::size_t c = 0; c < 3 && same; ++c)
        for (std::size_t y = 0; y < cfg.crop && same; ++y)
          for (std::size_t x = 0; x < cfg.crop && same; ++x)
            same = v.patch[(c * cfg.crop + y) * cfg.crop + x] ==
                   img.at(c, static_cast<std::size_t>(v.placement[1]) + y, static_cast<std::size_t>(v.placement[0]) + x);
      matched = same;
    }
  CHECK(matched);
}

TEST_CASE("full episodes show the whole image") {
  const SamplerConfig cfg = SamplerConfig::desk();
  const Episode ep = sample_episode(cfg, Condition::kFull, 3);
  CHECK(ep.support[0][0].patch.size() == 3 * 24 * 24);
  CHECK(ep.support[0][0].coords == std::vector<double>{0.0, 0.0, 1.0, 1.0});
  const ImageEpisodeSource src(cfg, Condition::kFull, 1);
  CHECK(src.feature_width() == 3 * 24 * 24 + 4);
  CHECK(src.episode(4).feature_width() == src.feature_width());
}

TEST_CASE("episode streams are keyed by index") {
  const ImageEpisodeSource src(SamplerConfig::desk(), Condition::kPartial, 99);
  CHECK(src.episode(2).queries[0].patch == src.episode(2).queries[0].patch);
  CHECK(src.episode(2).meta.seed != src.episode(3).meta.seed);
}

TEST_CASE("invalid sampler settings are reported") {
  SamplerConfig cfg = SamplerConfig::desk();
  cfg.support_views = 20;  // 20 * 36 / 576 > 0.5
  CHECK_THROWS_AS(sample_episode(cfg, Condition::kPartial, 1), EpisodeError);
  CHECK_NOTHROW(sample_episode(cfg, Condition::kFull, 1));
  cfg = SamplerConfig::desk();
  cfg.crop = 30;
  CHECK_THROWS_AS(sample_episode(cfg, Condition::kPartial, 1), EpisodeError);
  cfg = SamplerConfig::desk();
  cfg.ways_min = 9;
  CHECK_THROWS_AS(sample_episode(cfg, Condition::kPartial, 1), EpisodeError);
  cfg = SamplerConfig::desk();
  cfg.pool.families = 2;
  CHECK_THROWS_AS(sample_episode(cfg, Condition::kPartial, 1), EpisodeError);
  CHECK_THROWS(condition_from_string("half"));
}

TEST_CASE("episodes survive a write/read round trip bit for bit") {
  const Episode ep = sample_episode(SamplerConfig::desk(), Condition::kPartial, 12);
  const auto stem = std::filesystem::temp_directory_path() / "poem_episode_roundtrip";
  write_episode(ep, stem);
  const Episode back = read_episode(stem);
  CHECK(back.meta.ways == ep.meta.ways);
  CHECK(back.meta.seed == ep.meta.seed);
  CHECK(back.targets == ep.targets);
  REQUIRE(back.support.size() == ep.support.size());
  for (std::size_t m = 0; m < ep.support.size(); ++m)
    for (std::size_t v = 0; v < ep.support[m].size(); ++v) {
      CHECK(back.support[m][v].patch == ep.support[m][v].patch);
      CHECK(back.support[m][v].coords == ep.support[m][v].coords);
      CHECK(back.support[m][v].placement == ep.support[m][v].placement);
    }
  for (std::size_t q = 0; q < ep.queries.size(); ++q) CHECK(back.queries[q].patch == ep.queries[q].patch);
  std::filesystem::remove(stem.string() + ".json");
  std::filesystem::remove(stem.string() + ".bin");
}
