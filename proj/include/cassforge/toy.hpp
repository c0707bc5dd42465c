// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// Parametric stand-in corpus: dialogue-like amplitude-modulated harmonic
// tones with facial features that follow the mouth envelope, effect-like
// noise bursts with scene features that follow burst activity, and sustained
// triads for music.

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "cassforge/mixer.hpp"

namespace cassforge::toy {

inline constexpr std::size_t kFacialDim = 4;
inline constexpr std::size_t kSceneDim = 4;

struct ToyConfig {
  std::size_t clips_per_stem = 24;
  double clip_seconds = 20.0;
  std::uint64_t seed = 1;
};

/// Facial rows: mouth aperture, aperture velocity, speaking flag, pitch offset.
mix::Clip dx_clip(const std::string& id, double seconds, std::mt19937_64& rng);
/// Scene rows: mean and max burst envelope over the frame, two clip-constant scene ids.
mix::Clip fx_clip(const std::string& id, double seconds, std::mt19937_64& rng);
mix::Clip mx_clip(const std::string& id, double seconds, std::mt19937_64& rng);

mix::Pools make_pools(const ToyConfig& cfg);

/// Writes <dir>/pools.json plus clip WAV and .fseq files readable by load_pools.
void write_pools(const std::filesystem::path& dir, const mix::Pools& pools);

/// Short-sample recipe used by the end-to-end experiment.
mix::MixRecipe short_recipe(double duration_s);

}  // namespace cassforge::toy
