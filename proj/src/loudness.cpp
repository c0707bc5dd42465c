// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "cassforge/loudness.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace cassforge::mix {

namespace {

constexpr double kBlockSeconds = 0.4;
constexpr double kStepSeconds = 0.1;
constexpr double kAbsoluteGate = -70.0;
constexpr double kRelativeGate = -10.0;

double block_loudness(double mean_square) { return -0.691 + 10.0 * std::log10(mean_square); }

std::vector<double> k_filtered(const dsp::Waveform& w) {
  const auto stages = k_weighting(w.sample_rate);
  std::vector<double> y(w.samples.begin(), w.samples.end());
  for (const Biquad& q : stages) {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : y) {
      const double x0 = v;
      const double y0 = q.b[0] * x0 + q.b[1] * x1 + q.b[2] * x2 - q.a[1] * y1 - q.a[2] * y2;
      x2 = x1;
      x1 = x0;
      y2 = y1;
      y1 = y0;
      v = y0;
    }
  }
  return y;
}

// 4x interpolator: Kaiser-windowed sinc, 12 taps per phase, cutoff at the
// original Nyquist. Phase 0 is the identity.
constexpr int kOversample = 4;
constexpr int kTapsPerPhase = 12;

struct TruePeakFilter {
  std::array<std::array<double, kTapsPerPhase>, kOversample> phases{};

  TruePeakFilter() {
    constexpr double beta = 6.0;
    const double i0b = std::cyl_bessel_i(0.0, beta);
    const double half = kTapsPerPhase / 2.0;
    for (int p = 1; p < kOversample; ++p) {
      const double frac = static_cast<double>(p) / kOversample;
      double sum = 0.0;
      for (int j = 0; j < kTapsPerPhase; ++j) {
        const double x = (j - kTapsPerPhase / 2 + 1) - frac;
        const double r = x / half;
        const double win = std::abs(r) >= 1.0 ? 0.0 : std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r)) / i0b;
        const double px = std::numbers::pi * x;
        phases[p][j] = std::sin(px) / px * win;
        sum += phases[p][j];
      }
      for (double& h : phases[p]) h /= sum;
    }
  }
};

}  // namespace

std::array<Biquad, 2> k_weighting(int sample_rate) {
  require(sample_rate > 0, "k_weighting: sample rate must be positive");
  const double fs = sample_rate;
  std::array<Biquad, 2> out;
  {
    constexpr double f0 = 1681.974450955533;
    constexpr double gain_db = 3.999843853973347;
    constexpr double q = 0.7071752369554196;
    const double k = std::tan(std::numbers::pi * f0 / fs);
    const double vh = std::pow(10.0, gain_db / 20.0);
    const double vb = std::pow(vh, 0.4996667741545416);
    const double a0 = 1.0 + k / q + k * k;
    out[0].b = {(vh + vb * k / q + k * k) / a0, 2.0 * (k * k - vh) / a0, (vh - vb * k / q + k * k) / a0};
    out[0].a = {1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0};
  }
  {
    constexpr double f0 = 38.13547087602444;
    constexpr double q = 0.5003270373238773;
    const double k = std::tan(std::numbers::pi * f0 / fs);
    const double a0 = 1.0 + k / q + k * k;
    out[1].b = {1.0, -2.0, 1.0};
    out[1].a = {1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0};
  }
  return out;
}

double measure_loudness(const dsp::Waveform& w) {
  dsp::validate(w);
  const auto block = static_cast<std::size_t>(std::lround(kBlockSeconds * w.sample_rate));
  const auto step = static_cast<std::size_t>(std::lround(kStepSeconds * w.sample_rate));
  require(w.samples.size() >= block, "measure_loudness: need at least 400 ms of audio, got " +
                                         std::to_string(w.duration_s()) + " s");
  const auto y = k_filtered(w);

  // Prefix sums of squares make each block O(1).
  std::vector<double> prefix(y.size() + 1, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) prefix[i + 1] = prefix[i] + y[i] * y[i];

  std::vector<double> powers;
  for (std::size_t start = 0; start + block <= y.size(); start += step) {
    const double z = (prefix[start + block] - prefix[start]) / static_cast<double>(block);
    if (z > 0.0 && block_loudness(z) > kAbsoluteGate) powers.push_back(z);
  }
  if (powers.empty()) return kSilentLoudness;

  double sum = 0.0;
  for (double z : powers) sum += z;
  const double relative_gate = block_loudness(sum / powers.size()) + kRelativeGate;

  double gated = 0.0;
  std::size_t count = 0;
  for (double z : powers)
    if (block_loudness(z) > relative_gate) {
      gated += z;
      ++count;
    }
  if (count == 0) return kSilentLoudness;
  return block_loudness(gated / count);
}

double measure_true_peak(const dsp::Waveform& w) {
  dsp::validate(w);
  require(!w.samples.empty(), "measure_true_peak: empty waveform");
  static const TruePeakFilter filter;
  const long n = static_cast<long>(w.samples.size());
  const float* x = w.samples.data();
  double peak = 0.0;
#pragma omp parallel for reduction(max : peak) schedule(static)
  for (long i = 0; i < n; ++i) {
    double local = std::abs(static_cast<double>(x[i]));
    for (int p = 1; p < kOversample; ++p) {
      double acc = 0.0;
      const long start = i - kTapsPerPhase / 2 + 1;
      for (int j = 0; j < kTapsPerPhase; ++j) {
        const long idx = start + j;
        if (idx >= 0 && idx < n) acc += filter.phases[p][j] * x[idx];
      }
      local = std::max(local, std::abs(acc));
    }
    peak = std::max(peak, local);
  }
  if (peak <= 0.0) return -std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(peak);
}

NormalizeResult normalize_to_target(const dsp::Waveform& w, double target, double ceiling) {
  const double loudness = measure_loudness(w);
  if (is_silent(loudness)) throw ValidationError("normalize_to_target: input is silent");
  const double peak = measure_true_peak(w);

  NormalizeResult r;
  double gain_db = target - loudness;
  if (peak + gain_db > ceiling) {
    gain_db = ceiling - peak;
    r.peak_limited = true;
  }
  r.gain = db_to_gain(gain_db);
  r.audio.sample_rate = w.sample_rate;
  r.audio.samples.resize(w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    r.audio.samples[i] = static_cast<float>(w.samples[i] * r.gain);
  r.loudness = measure_loudness(r.audio);
  r.true_peak = measure_true_peak(r.audio);
  return r;
}

}  // namespace cassforge::mix
