// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "cassforge/sed.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>

#include "cassforge/errors.hpp"

namespace cassforge::metrics {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Centred moving average with edge clamping to the available samples.
std::vector<double> moving_average(const std::vector<double>& x, std::size_t width) {
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(n);
  const std::size_t half = width / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

}  // namespace

dsp::StftConfig sed_stft_config() { return dsp::StftConfig{512, 512, 160, dsp::WindowKind::kHann}; }

ActivationMatrix heuristic_sed(const dsp::Spectrogram& spec) {
  require(spec.sample_rate == dsp::kModelSampleRate, "heuristic_sed: expects 16 kHz spectrograms");
  const std::size_t T = spec.frames(), K = spec.bins();
  const double hz_per_bin = static_cast<double>(spec.sample_rate) / spec.config.fft_size;
  const double frame_rate = static_cast<double>(spec.sample_rate) / spec.config.hop_size;

  double wsum2 = 0.0;
  for (double w : dsp::analysis_window(spec.config)) wsum2 += w * w;

  std::vector<double> level_db(T), band_ratio(T), flatness(T), flux(T), chroma_peak(T), band_db(T);
  for (std::size_t t = 0; t < T; ++t) {
    double total = 0.0, band = 0.0, log_sum = 0.0;
    std::array<double, 12> chroma{};
    for (std::size_t k = 0; k < K; ++k) {
      const double lm = spec.log_mag(t, k);
      const double p = std::exp(2.0 * lm);
      const double f = static_cast<double>(k) * hz_per_bin;
      total += p;
      log_sum += 2.0 * lm;
      if (f >= 300.0 && f <= 3400.0) band += p;
      if (f >= 60.0 && f <= 5000.0) {
        const double semis = 12.0 * std::log2(f / 440.0);
        const auto pc = static_cast<std::size_t>(((std::lround(semis) % 12) + 12) % 12);
        chroma[pc] += p;
      }
      if (t > 0) flux[t] += std::max(0.0, lm - spec.log_mag(t - 1, k));
    }
    // Parseval over the one-sided spectrum gives the windowed mean square.
    const double ms = 2.0 * total / (static_cast<double>(spec.config.fft_size) * wsum2);
    level_db[t] = 10.0 * std::log10(ms + 1e-20);
    band_ratio[t] = total > 0.0 ? band / total : 0.0;
    band_db[t] = 10.0 * std::log10(2.0 * band / (static_cast<double>(spec.config.fft_size) * wsum2) + 1e-12);
    const double arith = total / static_cast<double>(K);
    flatness[t] = arith > 0.0 ? std::exp(log_sum / static_cast<double>(K)) / arith : 0.0;
    flux[t] = flux[t] * 20.0 / std::numbers::ln10 / static_cast<double>(K);  // mean dB rise per bin
    std::array<double, 12> sorted = chroma;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const double csum = std::accumulate(chroma.begin(), chroma.end(), 0.0);
    chroma_peak[t] = csum > 0.0 ? (sorted[0] + sorted[1] + sorted[2]) / csum : 0.0;
  }

  // Syllable-rate modulation: a difference of short and long averages of the
  // speech-band level passes roughly 2-8 Hz; its local RMS is the depth.
  const auto frames_for = [&](double seconds) { return std::max<std::size_t>(1, std::lround(seconds * frame_rate)); };
  const std::vector<double> short_avg = moving_average(band_db, frames_for(0.05));
  const std::vector<double> long_avg = moving_average(band_db, frames_for(0.25));
  std::vector<double> bp2(T);
  for (std::size_t t = 0; t < T; ++t) bp2[t] = std::pow(short_avg[t] - long_avg[t], 2);
  const std::vector<double> mod_ms = moving_average(bp2, frames_for(0.5));
  const std::vector<double> flat_s = moving_average(flatness, frames_for(0.05));
  const std::vector<double> flux_s = moving_average(flux, frames_for(0.05));
  const std::vector<double> chroma_s = moving_average(chroma_peak, frames_for(0.2));
  const std::vector<double> band_s = moving_average(band_ratio, frames_for(0.1));

  ActivationMatrix a;
  a.frame_period = 1.0 / frame_rate;
  a.class_names = {"speech", "effects", "music"};
  a.p = Matrix(T, 3);
  for (std::size_t t = 0; t < T; ++t) {
    const double gate = logistic((level_db[t] + 55.0) / 2.5);
    const double depth = std::sqrt(mod_ms[t]);
    const double tonal = logistic(-15.0 * (flat_s[t] - 0.25));
    const double modulated = logistic(1.5 * (depth - 3.0));
    const double speech = logistic(10.0 * (band_s[t] - 0.5)) * modulated * tonal;
    const double effects = logistic(15.0 * (flat_s[t] - 0.25) + 0.3 * flux_s[t]);
    const double music = logistic(12.0 * (chroma_s[t] - 0.6)) * (1.0 - modulated) * tonal;
    a.p(t, 0) = gate * speech;
    a.p(t, 1) = gate * effects;
    a.p(t, 2) = gate * music;
  }
  return a;
}

ActivationMatrix heuristic_sed(const dsp::Waveform& w) {
  const dsp::StftConfig cfg = sed_stft_config();
  return heuristic_sed(dsp::log_magnitude(dsp::stft(w, cfg)));
}

}  // namespace cassforge::metrics
