// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// Sample synthesis: per-stem track assembly from clip pools, loudness
// mastering, additive mixing, and the alignment manifests that tie each
// placed segment back to its source clip and feature stream.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cassforge/dsp.hpp"
#include "cassforge/features.hpp"

namespace cassforge::mix {

enum class StemKind : std::uint8_t { kDX = 0, kFX = 1, kMX = 2 };
inline constexpr std::array<StemKind, 3> kAllStems{StemKind::kDX, StemKind::kFX, StemKind::kMX};

const char* to_string(StemKind s);
StemKind stem_from_string(const std::string& s);

struct Clip {
  std::string id;
  dsp::Waveform audio;
  std::optional<cond::FeatureSequence> features;
};

struct ClipPool {
  StemKind kind = StemKind::kDX;
  std::vector<Clip> clips;
  /// Clip ids rejected by an external contamination filter.
  std::set<std::string> reject;

  /// Mono 16 kHz audio, unique ids, feature kinds matching the stem, none on MX.
  void validate() const;
  std::vector<const Clip*> accepted() const;
};

struct Pools {
  ClipPool dx{StemKind::kDX, {}, {}};
  ClipPool fx{StemKind::kFX, {}, {}};
  ClipPool mx{StemKind::kMX, {}, {}};

  const ClipPool& operator[](StemKind s) const;
};

/// {"DX": [{"id", "wav", "features"?}], "FX": [...], "MX": [...], "reject": [ids]}.
/// Paths are relative to the JSON file. Audio is converted to mono 16 kHz.
Pools load_pools(const std::filesystem::path& path);

struct SegmentCountDist {
  double rate_per_minute = 6.0;  // Poisson mean per 60 s of track
  int min = 1;
  int max = 64;
};

struct SegmentDurationDist {
  double mu = 1.3862943611198906;  // ln 4
  double sigma = 0.5;
  double min = 1.0;
  double max = 20.0;
};

struct MixRecipe {
  double duration = 60.0;
  std::array<SegmentCountDist, 3> segment_count{SegmentCountDist{6.0, 1, 64}, SegmentCountDist{6.0, 1, 64},
                                                SegmentCountDist{3.0, 1, 64}};
  SegmentDurationDist segment_duration{};
  double crossfade = 0.5;
  double crossfade_probability = 0.5;
  double target_loudness = -27.0;
  double true_peak_ceiling = -2.0;
  std::uint64_t rng_seed = 0;
  std::array<double, 3> stem_offsets{0.0, -3.0, -6.0};  // LU relative to target

  void validate() const;
};

MixRecipe recipe_from_json(const std::string& text);
std::string recipe_to_json(const MixRecipe& r);
MixRecipe load_recipe(const std::filesystem::path& path);

struct ManifestEntry {
  StemKind stem = StemKind::kDX;
  std::string clip_id;
  double source_start_s = 0.0;
  double placed_start_s = 0.0;
  double length_s = 0.0;
};

/// Placement in samples; the manifest seconds are derived from these.
struct Segment {
  const Clip* clip = nullptr;
  std::size_t source_start = 0;
  std::size_t placed_start = 0;
  std::size_t length = 0;
  std::size_t fade_in = 0;   // equal-power ramp lengths, 0 for none
  std::size_t fade_out = 0;
};

struct StemTrack {
  dsp::Waveform audio;
  std::vector<Segment> segments;
  std::vector<ManifestEntry> manifest;
};

/// Equal-power ramp gains at ramp position k of n: (fade_out, fade_in).
std::pair<double, double> crossfade_gains(std::size_t k, std::size_t n);

/// Draws segment count and durations, picks distinct clips, and places them
/// with crossfades or silent gaps so the track is exactly recipe.duration long.
StemTrack build_stem_track(const ClipPool& pool, const MixRecipe& recipe, std::mt19937_64& rng);

struct SegmentFeatures {
  StemKind stem = StemKind::kDX;
  std::size_t segment = 0;
  std::string clip_id;
  double placed_start_s = 0.0;
  cond::FeatureSequence features;
};

struct StemSet {
  dsp::Waveform dx, fx, mx, mixture;
  std::vector<ManifestEntry> manifest;
  std::vector<SegmentFeatures> segment_features;
  std::optional<cond::FeatureSequence> facial;  // DX track timeline, 25 fps
  std::optional<cond::FeatureSequence> scene;   // FX track timeline, 4 fps
  std::array<double, 3> stem_gains{1.0, 1.0, 1.0};  // total gain applied per stem
  double mix_gain = 1.0;
  double loudness = 0.0;
  double true_peak = 0.0;
  bool peak_limited = false;

  const dsp::Waveform& stem(StemKind s) const;
};

/// Builds DX, FX, MX tracks (in that order) from recipe.rng_seed, normalises
/// each to target + offset, then scales all three jointly so the sum meets
/// the target loudness and true-peak ceiling. mixture = (dx + fx) + mx in float.
StemSet synthesize_sample(const Pools& pools, const MixRecipe& recipe);

/// Per-sample seed for index k of a batch.
std::uint64_t sample_seed(std::uint64_t base_seed, std::uint64_t k);

void write_manifest_csv(const std::filesystem::path& path, const std::vector<ManifestEntry>& manifest);
std::vector<ManifestEntry> read_manifest_csv(const std::filesystem::path& path);

/// <dir>/{mix,dx,fx,mx}.wav, manifest.csv, meta.json, features/*.fseq.
void write_stem_set(const std::filesystem::path& dir, const StemSet& s);

struct LoadedSample {
  dsp::Waveform mixture;
  std::array<dsp::Waveform, 3> stems;
  std::optional<cond::FeatureSequence> facial;
  std::optional<cond::FeatureSequence> scene;
};

LoadedSample read_stem_set(const std::filesystem::path& dir);

}  // namespace cassforge::mix
