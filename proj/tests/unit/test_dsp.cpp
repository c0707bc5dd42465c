// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cassforge/dsp.hpp"
#include "cassforge/errors.hpp"
#include "cassforge/metrics.hpp"
#include "test_util.hpp"

using namespace cassforge;
using cassforge::testing::noise;
using cassforge::testing::sine;

TEST_CASE("resample: 16 kHz mono input is returned bit-identical") {
  const dsp::Waveform w = noise(5000, 1);
  const dsp::Waveform out = dsp::resample_to_mono_16k(w);
  CHECK(out.sample_rate == 16000);
  CHECK(out.samples == w.samples);
}

TEST_CASE("resample: output length follows round(len * 16000 / sr)") {
  dsp::Waveform w = noise(32000, 2);
  w.sample_rate = 32000;
  CHECK(dsp::resample_to_mono_16k(w).size() == 16000);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const int sr = std::uniform_int_distribution<int>(8000, 96000)(rng);
    const auto len = std::uniform_int_distribution<std::size_t>(0, 20000)(rng);
    dsp::Waveform x = noise(len, 10 + i);
    x.sample_rate = sr;
    const auto expected = static_cast<std::size_t>(std::llround(static_cast<double>(len) * 16000.0 / sr));
    CHECK(dsp::resample_to_mono_16k(x).size() == expected);
  }
}

TEST_CASE("resample: 44.1 kHz sine matches the analytic 16 kHz sine") {
  const double f = 997.0;
  const dsp::Waveform in = sine(f, 0.5, 44100, 44100);
  const dsp::Waveform out = dsp::resample_to_mono_16k(in);
  REQUIRE(out.size() == 16000);
  double worst = 0.0;
  for (std::size_t i = 100; i + 100 < out.size(); ++i) {
    const double ref = 0.5 * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / 16000.0);
    worst = std::max(worst, std::abs(out.samples[i] - ref));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("resample: empty input gives empty output, non-finite input is rejected") {
  dsp::Waveform empty;
  empty.sample_rate = 44100;
  CHECK(dsp::resample_to_mono_16k(empty).size() == 0);
  dsp::Waveform bad = noise(100, 4);
  bad.samples[7] = std::nanf("");
  CHECK_THROWS_AS(dsp::resample_to_mono_16k(bad), ValidationError);
}

TEST_CASE("resample: interleaved stereo is averaged before resampling") {
  std::vector<float> stereo = {1.0f, 0.0f, 0.5f, 0.5f, -1.0f, 1.0f};
  const dsp::Waveform out = dsp::resample_to_mono_16k(stereo, 2, 16000);
  CHECK(out.samples == std::vector<float>{0.5f, 0.5f, 0.0f});
}

TEST_CASE("wav: PCM16 and float32 round trips") {
  cassforge::testing::TempDir dir("wav");
  const dsp::Waveform w = sine(440.0, 0.7, 1600);
  dsp::write_wav(dir.path() / "f.wav", w, dsp::WavEncoding::kFloat32);
  CHECK(dsp::read_wav(dir.path() / "f.wav").samples == w.samples);

  dsp::write_wav(dir.path() / "p.wav", w, dsp::WavEncoding::kPcm16);
  const dsp::Waveform p = dsp::read_wav(dir.path() / "p.wav");
  REQUIRE(p.size() == w.size());
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(p.samples[i] - w.samples[i]) <= 1.0 / 32768.0);
}

TEST_CASE("wav: missing file is an I/O error") {
  CHECK_THROWS_AS(dsp::read_wav("/nonexistent/none.wav"), IoError);
}

TEST_CASE("stft: frame-count formula is exact over random lengths") {
  const dsp::StftConfig cfg;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto len = std::uniform_int_distribution<std::size_t>(1024, 40000)(rng);
    const std::size_t expected = (len - 1024) / 256 + 1;
    CHECK(cfg.frames_for(len) == expected);
  }
  // 8.192 s gives 509 frames without centre padding; 512 frames need 131840 samples.
  CHECK(cfg.frames_for(131072) == 509);
  CHECK(cfg.frames_for(131840) == 512);
}

TEST_CASE("stft: shape, zero input and short input") {
  const dsp::ComplexSpectrogram c = dsp::stft(noise(131840, 6));
  CHECK(c.frames == 512);
  CHECK(c.bins == 513);
  dsp::Waveform zero;
  zero.samples.assign(4096, 0.0f);
  for (const auto& v : dsp::stft(zero).values) CHECK(std::abs(v) == 0.0);
  CHECK_THROWS_AS(dsp::stft(noise(1000, 7)), ValidationError);
}

TEST_CASE("stft: unit impulse at sample 0 gives the first window value in every bin") {
  dsp::Waveform w;
  w.samples.assign(2048, 0.0f);
  w.samples[0] = 1.0f;
  const dsp::StftConfig cfg;
  const dsp::ComplexSpectrogram c = dsp::stft(w, cfg);
  const double w0 = dsp::analysis_window(cfg)[0];
  for (std::size_t k = 0; k < c.bins; ++k) CHECK(std::abs(c.at(0, k)) == doctest::Approx(w0).epsilon(1e-9));
}

TEST_CASE("stft: FFT path matches the direct DFT reference") {
  const dsp::StftConfig cfg{256, 200, 64, dsp::WindowKind::kHann};
  const dsp::Waveform w = noise(2000, 8);
  const auto fast = dsp::stft(w, cfg);
  const auto slow = dsp::stft_reference(w, cfg);
  REQUIRE(fast.values.size() == slow.values.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < fast.values.size(); ++i) worst = std::max(worst, std::abs(fast.values[i] - slow.values[i]));
  CHECK(worst < 1e-9);
}

TEST_CASE("stft: Parseval energy scales linearly with input energy") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const dsp::Waveform a = noise(16000, 100 + seed, 0.1);
    dsp::Waveform b = a;
    for (float& v : b.samples) v *= 3.0f;
    auto energy = [](const dsp::ComplexSpectrogram& c) {
      double e = 0.0;
      for (const auto& v : c.values) e += std::norm(v);
      return e;
    };
    CHECK(energy(dsp::stft(b)) / energy(dsp::stft(a)) == doctest::Approx(9.0).epsilon(0.01));
  }
}

TEST_CASE("log_magnitude: floor and natural log") {
  dsp::ComplexSpectrogram c;
  c.frames = 1;
  c.bins = 3;
  c.values = {1.0, 0.0, std::complex<double>(0.0, std::exp(2.0))};
  const dsp::Spectrogram s = dsp::log_magnitude(c);
  CHECK(s.log_mag(0, 0) == 0.0);
  CHECK(s.log_mag(0, 1) == doctest::Approx(std::log(1e-5)));
  CHECK(s.log_mag(0, 2) == doctest::Approx(2.0));
}

TEST_CASE("normalization: normalized/from_normalized are inverse") {
  const dsp::Spectrogram s = dsp::log_magnitude(dsp::stft(noise(8000, 9)));
  const dsp::Spectrogram* corpus[] = {&s};
  const dsp::Normalization n = dsp::corpus_normalization(corpus);
  dsp::Spectrogram t = s;
  t.normalization = n;
  const Matrix z = t.normalized();
  double sum = 0.0;
  for (double v : z.values()) sum += v;
  CHECK(std::abs(sum / static_cast<double>(z.size())) < 1e-9);
  const dsp::Spectrogram back = dsp::Spectrogram::from_normalized(z, s.config, n);
  for (std::size_t i = 0; i < s.log_mag.size(); ++i)
    CHECK(back.log_mag.values()[i] == doctest::Approx(s.log_mag.values()[i]).epsilon(1e-12));
}

TEST_CASE("istft: own-phase round trip exceeds 50 dB over the covered span") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const dsp::Waveform w = noise(16000 + 37 * seed, 200 + seed, 0.2);
    const dsp::ComplexSpectrogram c = dsp::stft(w);
    const dsp::Waveform out = dsp::istft_with_phase(dsp::log_magnitude(c), c);
    REQUIRE(out.size() == w.size());
    const std::size_t covered = (c.frames - 1) * 256 + 1024;
    const std::span<const float> a(w.samples.data(), covered), b(out.samples.data(), covered);
    CHECK(metrics::si_sdr(a, b) > 50.0);
    for (std::size_t i = covered; i < out.size(); ++i) CHECK(out.samples[i] == 0.0f);
  }
}

TEST_CASE("istft: all-floor magnitude is near silent") {
  const dsp::Waveform w = noise(8000, 11);
  const dsp::ComplexSpectrogram c = dsp::stft(w);
  dsp::Spectrogram s = dsp::log_magnitude(c);
  s.log_mag.fill(std::log(1e-5));
  const dsp::Waveform out = dsp::istft_with_phase(s, c);
  double peak = 0.0;
  for (float v : out.samples) peak = std::max(peak, static_cast<double>(std::abs(v)));
  CHECK(peak < 1e-3);
}

TEST_CASE("istft: shape mismatch is rejected") {
  const dsp::ComplexSpectrogram c = dsp::stft(noise(8000, 12));
  dsp::Spectrogram s = dsp::log_magnitude(dsp::stft(noise(9000, 13)));
  CHECK_THROWS_AS(dsp::istft_with_phase(s, c), ValidationError);
}

TEST_CASE("synthesis padding: full overlap for every original sample, exact frame fit") {
  const dsp::StftConfig cfg;
  std::mt19937_64 rng(14);
  for (int i = 0; i < 200; ++i) {
    const auto len = std::uniform_int_distribution<std::size_t>(0, 50000)(rng);
    const dsp::SynthesisPadding p = dsp::synthesis_padding(len, cfg);
    const std::size_t total = p.lead + len + p.tail;
    CHECK(p.lead == 768);
    CHECK((total - 1024) % 256 == 0);
    CHECK(cfg.frames_for(total) * 256 >= p.lead + len);
  }
}

TEST_CASE("synthesis padding: perturbed magnitudes stay bounded after unpad") {
  const dsp::StftConfig cfg;
  const dsp::Waveform w = noise(16000, 15, 0.1);
  const dsp::Waveform padded = dsp::pad_for_synthesis(w, cfg);
  const dsp::ComplexSpectrogram c = dsp::stft(padded, cfg);
  dsp::Spectrogram s = dsp::log_magnitude(c);
  std::mt19937_64 rng(16);
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (double& v : s.log_mag.values()) v += jitter(rng);
  const dsp::Waveform out = dsp::unpad(dsp::istft_with_phase(s, c), w.size(), cfg);
  REQUIRE(out.size() == w.size());
  double peak = 0.0;
  for (float v : out.samples) peak = std::max(peak, static_cast<double>(std::abs(v)));
  CHECK(peak < 1.0);
  CHECK(metrics::si_sdr(w, out) > 10.0);
}
