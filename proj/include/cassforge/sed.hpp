// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// Self-contained sound event detector with three classes (speech, effects,
// music) built from hand-set spectral scores. It stands in for a pretrained
// tagger so WPR can be computed without external models.

#pragma once

#include "cassforge/dsp.hpp"
#include "cassforge/metrics.hpp"

namespace cassforge::metrics {

/// 512-point frames with a 10 ms hop at 16 kHz.
dsp::StftConfig sed_stft_config();

/// Per-frame scores in [0, 1], columns "speech", "effects", "music". Frames
/// below roughly -55 dBFS score near zero in every column.
ActivationMatrix heuristic_sed(const dsp::Spectrogram& spec);

/// Convenience: sed_stft_config() analysis followed by heuristic_sed().
ActivationMatrix heuristic_sed(const dsp::Waveform& w);

}  // namespace cassforge::metrics
