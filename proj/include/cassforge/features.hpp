// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// Frame-level feature streams standing in for the frozen visual encoders,
// and the .fseq file format that carries them.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "cassforge/matrix.hpp"

namespace cassforge::cond {

enum class StreamKind : std::uint8_t { kFacial = 0, kScene = 1, kFused = 2 };

inline constexpr double kFacialFps = 25.0;
inline constexpr double kSceneFps = 4.0;

const char* to_string(StreamKind kind);

/// T x D feature rows. Facial and scene streams are uniformly sampled at
/// frame_rate; a fused stream has per-row timestamps instead.
struct FeatureSequence {
  Matrix frames;
  double frame_rate = 0.0;
  StreamKind kind = StreamKind::kFacial;
  std::vector<double> row_times;  // seconds, only for kFused

  std::size_t length() const { return frames.rows(); }
  std::size_t dim() const { return frames.cols(); }
  /// Centre time of row i in seconds.
  double time_of(std::size_t i) const;
  void validate() const;
};

void write_fseq(const std::filesystem::path& path, const FeatureSequence& f);
FeatureSequence read_fseq(const std::filesystem::path& path);

/// Rows covering [start_s, start_s + length_s) of a uniformly sampled stream.
FeatureSequence crop(const FeatureSequence& f, double start_s, double length_s);

/// One clip-feature excerpt placed on a track timeline.
struct PlacedFeatures {
  const FeatureSequence* source = nullptr;
  double source_start_s = 0.0;
  double placed_start_s = 0.0;
  double length_s = 0.0;
};

/// Resamples placed excerpts onto a zero-filled track of `duration_s` at
/// `fps` (nearest source row). Later placements overwrite earlier ones.
FeatureSequence assemble_track(const std::vector<PlacedFeatures>& placements, double duration_s, double fps,
                               std::size_t dim, StreamKind kind);

}  // namespace cassforge::cond
