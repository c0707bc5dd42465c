// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>
#include <numeric>

#include "cassforge/dsp.hpp"

namespace cassforge::dsp {

namespace {

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

class PolyphaseKernel {
 public:
  PolyphaseKernel(long up, long down, const ResamplerConfig& cfg)
      : up_(up), taps_(cfg.taps), beta_(cfg.kaiser_beta) {
    cutoff_ = cfg.rolloff * std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
    i0_beta_ = std::cyl_bessel_i(0.0, beta_);
    if (up_ <= kMaxTabulatedPhases) {
      table_.resize(static_cast<std::size_t>(up_ * taps_));
      for (long phase = 0; phase < up_; ++phase) fill_phase(phase, &table_[phase * taps_]);
    }
  }

  int taps() const { return taps_; }
  /// First input offset relative to floor(position).
  int first_offset() const { return -taps_ / 2 + 1; }

  /// Taps for input samples floor(pos) + first_offset() + j, j in [0, taps).
  const double* phase(long phase, std::vector<double>& scratch) const {
    if (!table_.empty()) return &table_[phase * taps_];
    scratch.resize(taps_);
    fill_phase(phase, scratch.data());
    return scratch.data();
  }

 private:
  static constexpr long kMaxTabulatedPhases = 8192;

  void fill_phase(long phase, double* out) const {
    const double frac = static_cast<double>(phase) / static_cast<double>(up_);
    const double half = taps_ / 2.0;
    double sum = 0.0;
    for (int j = 0; j < taps_; ++j) {
      const double x = (first_offset() + j) - frac;
      const double r = x / half;
      const double win = std::abs(r) >= 1.0 ? 0.0 : std::cyl_bessel_i(0.0, beta_ * std::sqrt(1.0 - r * r)) / i0_beta_;
      out[j] = cutoff_ * sinc(cutoff_ * x) * win;
      sum += out[j];
    }
    // Unity DC gain for every phase.
    for (int j = 0; j < taps_; ++j) out[j] /= sum;
  }

  long up_;
  int taps_;
  double beta_;
  double cutoff_ = 1.0;
  double i0_beta_ = 1.0;
  std::vector<double> table_;
};

}  // namespace

Waveform resample(const Waveform& w, int target_rate, const ResamplerConfig& cfg) {
  require(w.sample_rate > 0 && target_rate > 0, "resample: sample rates must be positive");
  require(cfg.taps >= 2 && cfg.taps % 2 == 0, "resample: tap count must be even and >= 2");
  validate(w);
  if (w.sample_rate == target_rate || w.samples.empty()) {
    Waveform out = w;
    out.sample_rate = target_rate;
    return out;
  }
  const long g = std::gcd(static_cast<long>(w.sample_rate), static_cast<long>(target_rate));
  const long up = target_rate / g;
  const long down = w.sample_rate / g;
  const PolyphaseKernel kernel(up, down, cfg);

  const long n_in = static_cast<long>(w.samples.size());
  const long n_out = std::lround(static_cast<double>(n_in) * target_rate / w.sample_rate);
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<std::size_t>(n_out));

#pragma omp parallel
  {
    std::vector<double> scratch;
#pragma omp for schedule(static)
    for (long n = 0; n < n_out; ++n) {
      const long num = n * down;
      const long base = num / up;
      const long ph = num % up;
      const double* h = kernel.phase(ph, scratch);
      double acc = 0.0;
      const long start = base + kernel.first_offset();
      for (int j = 0; j < kernel.taps(); ++j) {
        const long idx = start + j;
        if (idx >= 0 && idx < n_in) acc += h[j] * w.samples[idx];
      }
      out.samples[n] = static_cast<float>(acc);
    }
  }
  return out;
}

Waveform resample_to_mono_16k(const Waveform& w) { return resample(w, kModelSampleRate); }

Waveform resample_to_mono_16k(std::span<const float> interleaved, int channels, int sample_rate) {
  return resample(mix_down(interleaved, channels, sample_rate), kModelSampleRate);
}

}  // namespace cassforge::dsp
