// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// Time/frequency plumbing shared by every other module: waveforms, WAV files,
// resampling to 16 kHz mono, STFT / log-magnitude / inverse STFT.

#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cassforge/matrix.hpp"

namespace cassforge::dsp {

inline constexpr int kModelSampleRate = 16000;

/// Mono sample buffer, nominal full scale +-1.0.
struct Waveform {
  std::vector<float> samples;
  int sample_rate = kModelSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Throws ValidationError on a non-positive rate or a non-finite sample.
void validate(const Waveform& w);

// --- WAV -----------------------------------------------------------------

enum class WavEncoding { kPcm16, kFloat32 };

/// Reads PCM16 or float32 WAV; interleaved multichannel input is averaged to mono.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& w,
               WavEncoding encoding = WavEncoding::kFloat32);

/// Averages interleaved channels into one.
Waveform mix_down(std::span<const float> interleaved, int channels, int sample_rate);

// --- Resampling ----------------------------------------------------------

/// Kaiser-windowed sinc, polyphase over the reduced rate ratio.
struct ResamplerConfig {
  int taps = 64;
  double kaiser_beta = 8.0;
  double rolloff = 0.92;  // cutoff as a fraction of the lower Nyquist
};

Waveform resample(const Waveform& w, int target_rate, const ResamplerConfig& cfg = {});
Waveform resample_to_mono_16k(const Waveform& w);
Waveform resample_to_mono_16k(std::span<const float> interleaved, int channels, int sample_rate);

// --- STFT ----------------------------------------------------------------

enum class WindowKind : std::uint8_t { kHann };

struct StftConfig {
  int fft_size = 1024;
  int window_size = 1024;
  int hop_size = 256;
  WindowKind window_kind = WindowKind::kHann;

  int bins() const { return fft_size / 2 + 1; }
  /// floor((length - window) / hop) + 1, or 0 when shorter than one window.
  std::size_t frames_for(std::size_t source_length) const;
  void validate() const;
  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

/// Hann window sampled at half-sample offsets, w[n] = sin^2(pi (n + 1/2) / N).
/// Sums to a constant at 75 % overlap and is nonzero at both ends.
std::vector<double> analysis_window(const StftConfig& cfg);

struct ComplexSpectrogram {
  std::vector<std::complex<double>> values;  // frames x bins, row-major
  std::size_t frames = 0;
  std::size_t bins = 0;
  StftConfig config;
  std::size_t source_length = 0;
  int sample_rate = kModelSampleRate;

  std::complex<double>& at(std::size_t t, std::size_t k) { return values[t * bins + k]; }
  const std::complex<double>& at(std::size_t t, std::size_t k) const { return values[t * bins + k]; }
};

struct Normalization {
  double offset = 0.0;
  double scale = 1.0;
  friend bool operator==(const Normalization&, const Normalization&) = default;
};

/// Log-magnitude spectrogram (frames x bins). Raw ln|X| is stored;
/// normalized() is what the flow model sees.
inline constexpr double kDefaultLogFloor = 1e-5;

struct Spectrogram {
  Matrix log_mag;
  double floor = kDefaultLogFloor;  // magnitudes at or below it resynthesise as silence
  StftConfig config;
  Normalization normalization;
  int sample_rate = kModelSampleRate;

  std::size_t frames() const { return log_mag.rows(); }
  std::size_t bins() const { return log_mag.cols(); }
  Matrix normalized() const;
  static Spectrogram from_normalized(const Matrix& values, const StftConfig& cfg,
                                     const Normalization& norm, int sample_rate = kModelSampleRate);
};

/// Frames start at sample 0 (no centre padding). Frames run in parallel.
ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg = {});
/// Direct O(N^2) DFT per frame, serial. Test reference for stft().
ComplexSpectrogram stft_reference(const Waveform& w, const StftConfig& cfg = {});

Spectrogram log_magnitude(const ComplexSpectrogram& c, double floor = kDefaultLogFloor,
                          Normalization norm = {});

/// exp(log_mag) with the phase of phase_source, weighted overlap-add normalised
/// by the summed squared window. Bins at or below mag.floor contribute nothing.
/// Samples no frame covers come out as zero. The first and last window - hop
/// samples are covered by fewer frames and amplify non-proportional edits;
/// pad_for_synthesis() keeps real audio out of that region.
Waveform istft_with_phase(const Spectrogram& mag, const ComplexSpectrogram& phase_source);

/// Zero padding that puts every original sample under full window overlap
/// and makes the padded length land exactly on a frame boundary.
struct SynthesisPadding {
  std::size_t lead = 0;
  std::size_t tail = 0;
};
SynthesisPadding synthesis_padding(std::size_t length, const StftConfig& cfg);
Waveform pad_for_synthesis(const Waveform& w, const StftConfig& cfg);
/// Inverse of pad_for_synthesis for a signal of the original length.
Waveform unpad(const Waveform& padded, std::size_t original_length, const StftConfig& cfg);

/// Corpus statistics: offset = mean, scale = 4 * std of all log-magnitudes.
Normalization corpus_normalization(std::span<const Spectrogram* const> corpus);

}  // namespace cassforge::dsp
