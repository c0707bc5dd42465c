// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// ITU-R BS.1770-4 integrated loudness and 4x-oversampled true peak.

#pragma once

#include <array>
#include <cmath>
#include <limits>

#include "cassforge/dsp.hpp"

namespace cassforge::mix {

/// Returned by measure_loudness when every block falls under the absolute gate.
inline constexpr double kSilentLoudness = -std::numeric_limits<double>::infinity();

inline bool is_silent(double lkfs) { return lkfs == kSilentLoudness; }

struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 3> a{1.0, 0.0, 0.0};
};

/// K-weighting stages (high-shelf pre-filter, RLB high-pass) for a sample rate.
std::array<Biquad, 2> k_weighting(int sample_rate);

/// Gated integrated loudness in LKFS. Needs at least 400 ms of audio.
double measure_loudness(const dsp::Waveform& w);

/// Peak of the 4x-oversampled signal (and the original samples), in dBTP.
double measure_true_peak(const dsp::Waveform& w);

struct NormalizeResult {
  dsp::Waveform audio;
  double gain = 1.0;
  double loudness = 0.0;   // measured after the gain
  double true_peak = 0.0;  // measured after the gain
  bool peak_limited = false;
};

/// Single scalar gain hitting `target` LKFS, reduced if the true peak would
/// exceed `ceiling` dBTP (loudness then undershoots).
NormalizeResult normalize_to_target(const dsp::Waveform& w, double target, double ceiling);

/// Linear gain factor for a level change in dB.
inline double db_to_gain(double db) { return std::pow(10.0, db / 20.0); }

}  // namespace cassforge::mix
