// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "cassforge/toy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>

#include "cassforge/errors.hpp"

namespace cassforge::toy {

namespace {

constexpr int kSr = dsp::kModelSampleRate;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::size_t samples_for(double seconds) { return static_cast<std::size_t>(std::llround(seconds * kSr)); }

}  // namespace

mix::Clip dx_clip(const std::string& id, double seconds, std::mt19937_64& rng) {
  const std::size_t n = samples_for(seconds);
  std::vector<double> env(n, 0.0);
  std::vector<double> speaking(n, 0.0);

  // Phrases of syllables separated by pauses.
  double t = uniform(rng, 0.0, 0.4);
  while (t < seconds) {
    const double phrase_end = std::min(seconds, t + uniform(rng, 1.0, 3.0));
    while (t < phrase_end) {
      const double syl = uniform(rng, 0.12, 0.28);
      const auto a = samples_for(t), b = std::min(n, samples_for(std::min(t + syl, phrase_end)));
      const double peak = uniform(rng, 0.6, 1.0);
      for (std::size_t i = a; i < b; ++i) {
        env[i] = peak * std::sin(std::numbers::pi * static_cast<double>(i - a) / static_cast<double>(samples_for(syl)));
        speaking[i] = 1.0;
      }
      t += syl;
      const double gap = uniform(rng, 0.02, 0.08);
      for (std::size_t i = std::min(n, samples_for(t)); i < std::min(n, samples_for(std::min(t + gap, phrase_end))); ++i)
        speaking[i] = 1.0;
      t += gap;
    }
    t = phrase_end + uniform(rng, 0.2, 0.8);
  }

  const double f0 = uniform(rng, 110.0, 200.0);
  const double vib_rate = uniform(rng, 0.3, 0.8);
  mix::Clip c;
  c.id = id;
  c.audio.samples.resize(n);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ti = static_cast<double>(i) / kSr;
    const double f = f0 * (1.0 + 0.05 * std::sin(kTwoPi * vib_rate * ti));
    phase += kTwoPi * f / kSr;
    double s = 0.0;
    for (int h = 1; h <= 20 && h * f < 3400.0; ++h) s += std::sin(h * phase) / h;
    c.audio.samples[i] = static_cast<float>(0.3 * env[i] * s);
  }

  cond::FeatureSequence feat;
  feat.kind = cond::StreamKind::kFacial;
  feat.frame_rate = cond::kFacialFps;
  const auto rows = static_cast<std::size_t>(std::floor(seconds * cond::kFacialFps));
  feat.frames = Matrix(rows, kFacialDim);
  auto env_at = [&](double time) {
    const auto i = static_cast<std::size_t>(std::clamp(time * kSr, 0.0, static_cast<double>(n - 1)));
    return env[i];
  };
  for (std::size_t r = 0; r < rows; ++r) {
    const double tc = (static_cast<double>(r) + 0.5) / cond::kFacialFps;
    feat.frames(r, 0) = env_at(tc);
    feat.frames(r, 1) = (env_at(tc + 0.02) - env_at(tc - 0.02)) / 0.04 * 0.1;
    feat.frames(r, 2) = speaking[std::min(n - 1, samples_for(tc))];
    feat.frames(r, 3) = (f0 - 155.0) / 45.0;
  }
  c.features = std::move(feat);
  return c;
}

mix::Clip fx_clip(const std::string& id, double seconds, std::mt19937_64& rng) {
  const std::size_t n = samples_for(seconds);
  std::vector<double> env(n, 0.0);
  std::vector<double> out(n, 0.0);
  std::normal_distribution<double> gauss;
  std::exponential_distribution<double> gap(1.0 / 0.7);

  double t = uniform(rng, 0.0, 0.5);
  while (t < seconds) {
    const double tau = uniform(rng, 0.04, 0.25);
    const double amp = uniform(rng, 0.2, 0.6);
    const double tilt = uniform(rng, -0.5, 0.7);
    const std::size_t a = samples_for(t);
    const std::size_t b = std::min(n, a + samples_for(5.0 * tau));
    double y = 0.0;
    for (std::size_t i = a; i < b; ++i) {
      const double e = amp * std::exp(-static_cast<double>(i - a) / (tau * kSr));
      y = gauss(rng) + tilt * y;
      const double v = e * y * std::sqrt(1.0 - tilt * tilt);
      out[i] += v;
      env[i] += e;
    }
    t += 5.0 * tau * 0.5 + gap(rng);
  }

  mix::Clip c;
  c.id = id;
  c.audio.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.audio.samples[i] = static_cast<float>(std::clamp(out[i], -1.0, 1.0));

  cond::FeatureSequence feat;
  feat.kind = cond::StreamKind::kScene;
  feat.frame_rate = cond::kSceneFps;
  const auto rows = static_cast<std::size_t>(std::floor(seconds * cond::kSceneFps));
  feat.frames = Matrix(rows, kSceneDim);
  const double scene_a = 0.5 * gauss(rng), scene_b = 0.5 * gauss(rng);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t a = samples_for(static_cast<double>(r) / cond::kSceneFps);
    const std::size_t b = std::min(n, samples_for(static_cast<double>(r + 1) / cond::kSceneFps));
    double sum = 0.0, peak = 0.0;
    for (std::size_t i = a; i < b; ++i) {
      sum += env[i];
      peak = std::max(peak, env[i]);
    }
    feat.frames(r, 0) = b > a ? 2.0 * sum / static_cast<double>(b - a) : 0.0;
    feat.frames(r, 1) = 2.0 * peak;
    feat.frames(r, 2) = scene_a;
    feat.frames(r, 3) = scene_b;
  }
  c.features = std::move(feat);
  return c;
}

mix::Clip mx_clip(const std::string& id, double seconds, std::mt19937_64& rng) {
  const std::size_t n = samples_for(seconds);
  std::vector<double> out(n, 0.0);
  const std::size_t ramp = samples_for(0.03);
  double t = 0.0;
  while (t < seconds) {
    const double len = uniform(rng, 1.5, 3.0);
    const int root = std::uniform_int_distribution<int>(55, 67)(rng);
    const bool major = std::bernoulli_distribution(0.5)(rng);
    const std::array<int, 3> notes{root, root + (major ? 4 : 3), root + 7};
    const std::size_t a = samples_for(t);
    const std::size_t b = std::min(n, samples_for(t + len) + ramp);
    for (int note : notes) {
      const double f = 440.0 * std::pow(2.0, (note - 69) / 12.0);
      const double ph = uniform(rng, 0.0, kTwoPi);
      for (std::size_t i = a; i < b; ++i) {
        const std::size_t k = i - a;
        double g = 1.0;
        if (k < ramp) g = static_cast<double>(k) / ramp;
        if (b - i <= ramp) g = std::min(g, static_cast<double>(b - i) / ramp);
        const double x = kTwoPi * f * static_cast<double>(k) / kSr + ph;
        out[i] += 0.12 * g * (std::sin(x) + 0.4 * std::sin(2.0 * x) + 0.2 * std::sin(3.0 * x));
      }
    }
    t += len;
  }
  mix::Clip c;
  c.id = id;
  c.audio.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.audio.samples[i] = static_cast<float>(out[i]);
  return c;
}

mix::Pools make_pools(const ToyConfig& cfg) {
  require(cfg.clips_per_stem > 0 && cfg.clip_seconds >= 1.0, "toy pools: need clips of at least 1 s");
  std::mt19937_64 rng(cfg.seed);
  mix::Pools pools;
  for (std::size_t i = 0; i < cfg.clips_per_stem; ++i) {
    pools.dx.clips.push_back(dx_clip("dx" + std::to_string(i), cfg.clip_seconds, rng));
    pools.fx.clips.push_back(fx_clip("fx" + std::to_string(i), cfg.clip_seconds, rng));
    pools.mx.clips.push_back(mx_clip("mx" + std::to_string(i), cfg.clip_seconds, rng));
  }
  pools.dx.validate();
  pools.fx.validate();
  pools.mx.validate();
  return pools;
}

void write_pools(const std::filesystem::path& dir, const mix::Pools& pools) {
  std::filesystem::create_directories(dir / "clips");
  nlohmann::json j;
  for (mix::StemKind s : mix::kAllStems) {
    nlohmann::json list = nlohmann::json::array();
    for (const mix::Clip& c : pools[s].clips) {
      nlohmann::json e{{"id", c.id}, {"wav", "clips/" + c.id + ".wav"}};
      dsp::write_wav(dir / "clips" / (c.id + ".wav"), c.audio);
      if (c.features) {
        cond::write_fseq(dir / "clips" / (c.id + ".fseq"), *c.features);
        e["features"] = "clips/" + c.id + ".fseq";
      }
      list.push_back(e);
    }
    j[mix::to_string(s)] = list;
  }
  j["reject"] = nlohmann::json::array();
  for (const std::string& id : pools.dx.reject) j["reject"].push_back(id);
  std::ofstream out(dir / "pools.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "pools.json").string());
  out << j.dump(2) << '\n';
}

mix::MixRecipe short_recipe(double duration_s) {
  mix::MixRecipe r;
  r.duration = duration_s;
  for (auto& c : r.segment_count) c = mix::SegmentCountDist{30.0, 1, 3};
  r.segment_duration = mix::SegmentDurationDist{std::log(1.5), 0.3, 0.5, 4.0};
  r.crossfade = 0.1;
  return r;
}

}  // namespace cassforge::toy
