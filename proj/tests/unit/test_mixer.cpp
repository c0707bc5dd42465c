// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>

#include "cassforge/errors.hpp"
#include "cassforge/loudness.hpp"
#include "cassforge/mixer.hpp"
#include "cassforge/toy.hpp"
#include "test_util.hpp"

using namespace cassforge;
using cassforge::testing::noise;
using cassforge::testing::TempDir;

namespace {

mix::ClipPool pool_of(mix::StemKind kind, std::size_t count, double seconds, std::uint64_t seed) {
  mix::ClipPool p;
  p.kind = kind;
  for (std::size_t i = 0; i < count; ++i)
    p.clips.push_back({std::string(mix::to_string(kind)) + std::to_string(i), noise(static_cast<std::size_t>(seconds * 16000), seed + i), {}});
  return p;
}

mix::MixRecipe fixed_recipe(double duration, int segments, double seg_len, double crossfade, double xf_prob) {
  mix::MixRecipe r;
  r.duration = duration;
  for (auto& c : r.segment_count) c = {0.0, segments, segments};
  r.segment_duration = {std::log(seg_len), 0.0, seg_len, seg_len};
  r.crossfade = crossfade;
  r.crossfade_probability = xf_prob;
  return r;
}

const mix::Pools& toy_pools() {
  static const mix::Pools pools = toy::make_pools({24, 20.0, 3});
  return pools;
}

}  // namespace

TEST_CASE("build_stem_track: one full-length segment reproduces the clip") {
  const mix::ClipPool pool = pool_of(mix::StemKind::kDX, 1, 60.0, 1);
  std::mt19937_64 rng(1);
  const mix::StemTrack t = mix::build_stem_track(pool, fixed_recipe(60.0, 1, 60.0, 0.5, 0.5), rng);
  CHECK(t.audio.samples == pool.clips[0].audio.samples);
  REQUIRE(t.manifest.size() == 1);
  CHECK(t.manifest[0].placed_start_s == 0.0);
  CHECK(t.manifest[0].source_start_s == 0.0);
  CHECK(t.manifest[0].length_s == doctest::Approx(60.0));
}

TEST_CASE("build_stem_track: crossfade 0 concatenates with a gap and no overlap") {
  const mix::ClipPool pool = pool_of(mix::StemKind::kFX, 2, 3.0, 10);
  std::mt19937_64 rng(2);
  const mix::StemTrack t = mix::build_stem_track(pool, fixed_recipe(8.0, 2, 3.0, 0.0, 1.0), rng);
  REQUIRE(t.segments.size() == 2);
  CHECK(t.segments[0].placed_start + t.segments[0].length <= t.segments[1].placed_start);
  CHECK(t.segments[0].fade_out == 0);
  CHECK(t.segments[1].fade_in == 0);
  CHECK(t.audio.size() == 8 * 16000);
}

TEST_CASE("crossfade gains are equal-power") {
  const std::size_t n = 8000;  // 0.5 s
  for (std::size_t k = 0; k < n; ++k) {
    const auto [out, in] = mix::crossfade_gains(k, n);
    CHECK(std::abs(out * out + in * in - 1.0) < 1e-6);
  }
}

TEST_CASE("build_stem_track: 0.5 s crossfade overlaps exactly the ramp length") {
  const mix::ClipPool pool = pool_of(mix::StemKind::kMX, 2, 3.0, 20);
  std::mt19937_64 rng(3);
  const mix::StemTrack t = mix::build_stem_track(pool, fixed_recipe(6.0, 2, 3.0, 0.5, 1.0), rng);
  REQUIRE(t.segments.size() == 2);
  CHECK(t.segments[0].fade_out == 8000);
  CHECK(t.segments[1].fade_in == 8000);
  CHECK(t.segments[0].placed_start + t.segments[0].length - t.segments[1].placed_start == 8000);
}

TEST_CASE("build_stem_track: track length always equals the recipe duration") {
  const mix::ClipPool pool = pool_of(mix::StemKind::kDX, 30, 6.0, 30);
  std::mt19937_64 rng(4);
  mix::MixRecipe r;
  r.duration = 17.3;
  for (int i = 0; i < 30; ++i) CHECK(mix::build_stem_track(pool, r, rng).audio.size() == 276800);
}

TEST_CASE("build_stem_track: manifest overlays reproduce the track outside crossfades") {
  const mix::Pools& pools = toy_pools();
  std::mt19937_64 rng(5);
  const mix::MixRecipe r;
  for (mix::StemKind s : mix::kAllStems) {
    const mix::StemTrack t = mix::build_stem_track(pools[s], r, rng);
    std::vector<float> rebuilt(t.audio.size(), 0.0f);
    std::vector<bool> ramp(t.audio.size(), false);
    for (const mix::ManifestEntry& e : t.manifest) {
      const mix::Clip* clip = nullptr;
      for (const mix::Clip& c : pools[s].clips)
        if (c.id == e.clip_id) clip = &c;
      REQUIRE(clip != nullptr);
      const auto src = static_cast<std::size_t>(std::llround(e.source_start_s * 16000));
      const auto dst = static_cast<std::size_t>(std::llround(e.placed_start_s * 16000));
      const auto len = static_cast<std::size_t>(std::llround(e.length_s * 16000));
      for (std::size_t k = 0; k < len; ++k) rebuilt[dst + k] = clip->audio.samples[src + k];
    }
    for (const mix::Segment& g : t.segments) {
      for (std::size_t k = 0; k < g.fade_in; ++k) ramp[g.placed_start + k] = true;
      for (std::size_t k = 0; k < g.fade_out && g.placed_start + g.length > k; ++k) ramp[g.placed_start + g.length - 1 - k] = true;
    }
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < rebuilt.size(); ++i)
      if (!ramp[i] && rebuilt[i] != t.audio.samples[i]) ++mismatches;
    CHECK(mismatches == 0);
  }
}

TEST_CASE("build_stem_track: exhausted pool reports the shortfall") {
  const mix::ClipPool pool = pool_of(mix::StemKind::kDX, 2, 3.0, 40);
  std::mt19937_64 rng(6);
  try {
    mix::build_stem_track(pool, fixed_recipe(20.0, 5, 3.0, 0.0, 0.0), rng);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("shortfall 3") != std::string::npos);
  }
}

TEST_CASE("build_stem_track: rejected clips are never placed") {
  mix::ClipPool pool = pool_of(mix::StemKind::kDX, 10, 6.0, 50);
  for (int i = 0; i < 5; ++i) pool.reject.insert("DX" + std::to_string(i));
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial)
    for (const auto& e : mix::build_stem_track(pool, fixed_recipe(20.0, 4, 3.0, 0.5, 0.5), rng).manifest)
      CHECK(!pool.reject.contains(e.clip_id));
}

TEST_CASE("recipe: JSON round trip, defaults and validation") {
  mix::MixRecipe r;
  r.duration = 12.5;
  r.rng_seed = 99;
  r.stem_offsets[2] = -8.0;
  const mix::MixRecipe back = mix::recipe_from_json(mix::recipe_to_json(r));
  CHECK(back.duration == 12.5);
  CHECK(back.rng_seed == 99);
  CHECK(back.stem_offsets[2] == -8.0);
  CHECK(mix::recipe_from_json("{}").target_loudness == -27.0);
  CHECK(mix::recipe_from_json("{}").true_peak_ceiling == -2.0);
  CHECK_THROWS_AS(mix::recipe_from_json(R"({"duration": -1})"), ValidationError);
  CHECK_THROWS_AS(mix::recipe_from_json(R"({"crossfade": 1.5})"), ValidationError);
  CHECK_THROWS_AS(mix::recipe_from_json(R"({"durration": 3})"), ValidationError);
}

TEST_CASE("pools: MX clips may not carry features") {
  mix::ClipPool p = pool_of(mix::StemKind::kMX, 1, 2.0, 60);
  cond::FeatureSequence f;
  f.kind = cond::StreamKind::kScene;
  f.frame_rate = 4.0;
  f.frames = Matrix(8, 4);
  p.clips[0].features = f;
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("synthesize_sample: deterministic, additive, on target") {
  mix::MixRecipe r;
  r.duration = 20.0;
  r.rng_seed = 1234;
  const mix::StemSet a = mix::synthesize_sample(toy_pools(), r);
  const mix::StemSet b = mix::synthesize_sample(toy_pools(), r);
  CHECK(a.mixture.samples == b.mixture.samples);
  CHECK(a.dx.samples == b.dx.samples);
  for (std::size_t i = 0; i < a.mixture.size(); ++i) {
    const float expect = (a.dx.samples[i] + a.fx.samples[i]) + a.mx.samples[i];
    if (a.mixture.samples[i] != expect) FAIL("mixture is not dx + fx + mx at sample " << i);
  }
  if (!a.peak_limited) CHECK(std::abs(a.loudness + 27.0) < 0.1);
  CHECK(a.true_peak <= -1.9);
  REQUIRE(a.facial.has_value());
  REQUIRE(a.scene.has_value());
  CHECK(a.facial->length() == 500);
  CHECK(a.scene->length() == 80);
  for (const auto& f : a.segment_features) CHECK(f.stem != mix::StemKind::kMX);
}

TEST_CASE("synthesize_sample: facial track follows the placed DX segment") {
  mix::MixRecipe r;
  r.duration = 20.0;
  r.rng_seed = 77;
  const mix::StemSet s = mix::synthesize_sample(toy_pools(), r);
  for (const auto& e : s.manifest) {
    if (e.stem != mix::StemKind::kDX) continue;
    const mix::Clip* clip = nullptr;
    for (const auto& c : toy_pools().dx.clips)
      if (c.id == e.clip_id) clip = &c;
    REQUIRE(clip);
    // Row centres strictly inside the placement map to the clip row at the same source time.
    for (std::size_t row = 0; row < s.facial->length(); ++row) {
      const double t = (row + 0.5) / 25.0;
      if (t < e.placed_start_s + 0.1 || t > e.placed_start_s + e.length_s - 0.1) continue;
      const auto src = static_cast<std::size_t>(std::floor((t - e.placed_start_s + e.source_start_s) * 25.0));
      bool inside_other = false;
      for (const auto& o : s.manifest)
        if (&o != &e && o.stem == mix::StemKind::kDX && t >= o.placed_start_s && t < o.placed_start_s + o.length_s)
          inside_other = true;
      if (inside_other) continue;
      CHECK(s.facial->frames(row, 0) == clip->features->frames(src, 0));
    }
  }
}

TEST_CASE("synthesize_sample: batch of 60 s mixtures meets the mastering targets") {
  mix::MixRecipe r;
  double mean = 0.0, worst_peak = -INFINITY;
  const int count = 8;
  for (int k = 0; k < count; ++k) {
    r.rng_seed = mix::sample_seed(500, static_cast<std::uint64_t>(k));
    const mix::StemSet s = mix::synthesize_sample(toy_pools(), r);
    mean += mix::measure_loudness(s.mixture) / count;
    worst_peak = std::max(worst_peak, mix::measure_true_peak(s.mixture));
  }
  CHECK(std::abs(mean + 27.0) <= 0.5);
  CHECK(worst_peak <= -1.9);
}

TEST_CASE("files: manifest CSV and stem-set directory round trip") {
  TempDir dir("mixer");
  mix::MixRecipe r = toy::short_recipe(3.0);
  r.rng_seed = 8;
  const mix::StemSet s = mix::synthesize_sample(toy_pools(), r);
  mix::write_stem_set(dir.path() / "s0", s);
  const auto manifest = mix::read_manifest_csv(dir.path() / "s0" / "manifest.csv");
  REQUIRE(manifest.size() == s.manifest.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    CHECK(manifest[i].clip_id == s.manifest[i].clip_id);
    CHECK(std::abs(manifest[i].placed_start_s - s.manifest[i].placed_start_s) < 1e-6);
  }
  std::ifstream csv(dir.path() / "s0" / "manifest.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "stem,clip_id,source_start_s,placed_start_s,length_s");
  const mix::LoadedSample l = mix::read_stem_set(dir.path() / "s0");
  CHECK(l.mixture.samples == s.mixture.samples);
  CHECK(l.stems[1].samples == s.fx.samples);
  CHECK(l.facial.has_value());
}

TEST_CASE("files: pools JSON written by the toy generator loads back") {
  TempDir dir("pools");
  const mix::Pools small = toy::make_pools({3, 2.0, 9});
  toy::write_pools(dir.path(), small);
  const mix::Pools back = mix::load_pools(dir.path() / "pools.json");
  CHECK(back.dx.clips.size() == 3);
  CHECK(back.mx.clips[1].audio.samples == small.mx.clips[1].audio.samples);
  CHECK(back.fx.clips[2].features.has_value());
  CHECK(!back.mx.clips[0].features.has_value());
}
