// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "cassforge/dsp.hpp"

namespace cassforge::dsp {

namespace {

// FFTW planning is not thread-safe; execution on new arrays is.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan forward(int n) { return get(n, true); }
  fftw_plan inverse(int n) { return get(n, false); }

 private:
  fftw_plan get(int n, bool fwd) {
    std::lock_guard lock(mutex_);
    auto& plans = fwd ? forward_ : inverse_;
    if (auto it = plans.find(n); it != plans.end()) return it->second;
    double* real = fftw_alloc_real(n);
    fftw_complex* cplx = fftw_alloc_complex(n / 2 + 1);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan p = fwd ? fftw_plan_dft_r2c_1d(n, real, cplx, flags) : fftw_plan_dft_c2r_1d(n, cplx, real, flags);
    fftw_free(real);
    fftw_free(cplx);
    if (p == nullptr) throw ValidationError("FFT planning failed for size " + std::to_string(n));
    plans.emplace(n, p);
    return p;
  }

  std::mutex mutex_;
  std::map<int, fftw_plan> forward_;
  std::map<int, fftw_plan> inverse_;
};

void require_input(const Waveform& w, const StftConfig& cfg) {
  cfg.validate();
  validate(w);
  require(w.samples.size() >= static_cast<std::size_t>(cfg.window_size),
          "stft: input has " + std::to_string(w.samples.size()) + " samples, shorter than one window (" +
              std::to_string(cfg.window_size) + ")");
}

ComplexSpectrogram empty_like(const Waveform& w, const StftConfig& cfg) {
  ComplexSpectrogram c;
  c.config = cfg;
  c.frames = cfg.frames_for(w.samples.size());
  c.bins = static_cast<std::size_t>(cfg.bins());
  c.source_length = w.samples.size();
  c.sample_rate = w.sample_rate;
  c.values.assign(c.frames * c.bins, {});
  return c;
}

}  // namespace

std::size_t StftConfig::frames_for(std::size_t source_length) const {
  if (source_length < static_cast<std::size_t>(window_size)) return 0;
  return (source_length - window_size) / hop_size + 1;
}

void StftConfig::validate() const {
  require(fft_size >= 2 && fft_size % 2 == 0, "stft: fft_size must be even and >= 2");
  require(window_size >= 1 && window_size <= fft_size, "stft: need 1 <= window_size <= fft_size");
  require(hop_size > 0 && hop_size <= window_size, "stft: need 0 < hop_size <= window_size");
}

std::vector<double> analysis_window(const StftConfig& cfg) {
  std::vector<double> w(cfg.window_size);
  for (int n = 0; n < cfg.window_size; ++n) {
    const double s = std::sin(std::numbers::pi * (n + 0.5) / cfg.window_size);
    w[n] = s * s;
  }
  return w;
}

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  require_input(w, cfg);
  ComplexSpectrogram c = empty_like(w, cfg);
  const auto window = analysis_window(cfg);
  fftw_plan plan = PlanCache::instance().forward(cfg.fft_size);
  const long frames = static_cast<long>(c.frames);

#pragma omp parallel
  {
    std::vector<double> frame(cfg.fft_size, 0.0);
    std::vector<std::complex<double>> spec(c.bins);
#pragma omp for schedule(static)
    for (long t = 0; t < frames; ++t) {
      const std::size_t start = static_cast<std::size_t>(t) * cfg.hop_size;
      for (int n = 0; n < cfg.window_size; ++n) frame[n] = window[n] * w.samples[start + n];
      std::fill(frame.begin() + cfg.window_size, frame.end(), 0.0);
      fftw_execute_dft_r2c(plan, frame.data(), reinterpret_cast<fftw_complex*>(spec.data()));
      std::copy(spec.begin(), spec.end(), c.values.begin() + static_cast<std::ptrdiff_t>(t * c.bins));
    }
  }
  return c;
}

ComplexSpectrogram stft_reference(const Waveform& w, const StftConfig& cfg) {
  require_input(w, cfg);
  ComplexSpectrogram c = empty_like(w, cfg);
  const auto window = analysis_window(cfg);
  const double step = -2.0 * std::numbers::pi / cfg.fft_size;
  for (std::size_t t = 0; t < c.frames; ++t) {
    const std::size_t start = t * cfg.hop_size;
    for (std::size_t k = 0; k < c.bins; ++k) {
      std::complex<double> acc{};
      for (int n = 0; n < cfg.window_size; ++n) {
        // Reduce k*n modulo N before scaling so the angle stays small.
        const double angle = step * static_cast<double>((k * n) % cfg.fft_size);
        acc += window[n] * w.samples[start + n] * std::polar(1.0, angle);
      }
      c.at(t, k) = acc;
    }
  }
  return c;
}

Matrix Spectrogram::normalized() const {
  Matrix out(log_mag.rows(), log_mag.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = (log_mag.values()[i] - normalization.offset) / normalization.scale;
  return out;
}

Spectrogram Spectrogram::from_normalized(const Matrix& values, const StftConfig& cfg, const Normalization& norm,
                                         int sample_rate) {
  Spectrogram s;
  s.log_mag = Matrix(values.rows(), values.cols());
  for (std::size_t i = 0; i < values.size(); ++i)
    s.log_mag.values()[i] = values.values()[i] * norm.scale + norm.offset;
  s.config = cfg;
  s.normalization = norm;
  s.sample_rate = sample_rate;
  return s;
}

Spectrogram log_magnitude(const ComplexSpectrogram& c, double floor, Normalization norm) {
  require(floor > 0.0, "log_magnitude: floor must be positive");
  require(norm.scale > 0.0, "log_magnitude: normalization scale must be positive");
  Spectrogram s;
  s.log_mag = Matrix(c.frames, c.bins);
  for (std::size_t i = 0; i < c.values.size(); ++i)
    s.log_mag.values()[i] = std::log(std::max(std::abs(c.values[i]), floor));
  s.floor = floor;
  s.config = c.config;
  s.normalization = norm;
  s.sample_rate = c.sample_rate;
  return s;
}

Waveform istft_with_phase(const Spectrogram& mag, const ComplexSpectrogram& phase_source) {
  const StftConfig& cfg = phase_source.config;
  require(mag.config == cfg, "istft_with_phase: STFT configurations differ");
  require(mag.frames() == phase_source.frames && mag.bins() == phase_source.bins,
          "istft_with_phase: magnitude is " + std::to_string(mag.frames()) + "x" + std::to_string(mag.bins()) +
              " but phase source is " + std::to_string(phase_source.frames) + "x" +
              std::to_string(phase_source.bins));
  const auto window = analysis_window(cfg);
  fftw_plan plan = PlanCache::instance().inverse(cfg.fft_size);
  const std::size_t frames = phase_source.frames, bins = phase_source.bins;
  const std::size_t win = static_cast<std::size_t>(cfg.window_size);

  Matrix segments(frames, win);
  const long nframes = static_cast<long>(frames);
#pragma omp parallel
  {
    std::vector<std::complex<double>> spec(bins);
    std::vector<double> frame(cfg.fft_size);
#pragma omp for schedule(static)
    for (long t = 0; t < nframes; ++t) {
      for (std::size_t k = 0; k < bins; ++k) {
        double m = std::exp(mag.log_mag(t, k));
        if (m <= mag.floor * (1.0 + 1e-12)) m = 0.0;
        spec[k] = std::polar(m, std::arg(phase_source.at(t, k)));
      }
      fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(spec.data()), frame.data());
      for (std::size_t n = 0; n < win; ++n) segments(t, n) = frame[n] * window[n] / cfg.fft_size;
    }
  }

  std::vector<double> acc(phase_source.source_length, 0.0);
  std::vector<double> norm(phase_source.source_length, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * cfg.hop_size;
    for (std::size_t n = 0; n < win; ++n) {
      acc[start + n] += segments(t, n);
      norm[start + n] += window[n] * window[n];
    }
  }
  Waveform out;
  out.sample_rate = phase_source.sample_rate;
  out.samples.resize(phase_source.source_length);
  for (std::size_t i = 0; i < acc.size(); ++i)
    out.samples[i] = norm[i] > 0.0 ? static_cast<float>(acc[i] / norm[i]) : 0.0f;
  return out;
}

SynthesisPadding synthesis_padding(std::size_t length, const StftConfig& cfg) {
  cfg.validate();
  const auto win = static_cast<std::size_t>(cfg.window_size);
  const auto hop = static_cast<std::size_t>(cfg.hop_size);
  SynthesisPadding p;
  p.lead = win - hop;
  // Samples before frames * hop have full overlap; land the end on a frame.
  const std::size_t frames = std::max<std::size_t>(1, (p.lead + length + hop - 1) / hop);
  p.tail = (frames - 1) * hop + win - p.lead - length;
  return p;
}

Waveform pad_for_synthesis(const Waveform& w, const StftConfig& cfg) {
  const SynthesisPadding p = synthesis_padding(w.size(), cfg);
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(p.lead + w.size() + p.tail, 0.0f);
  std::copy(w.samples.begin(), w.samples.end(), out.samples.begin() + static_cast<std::ptrdiff_t>(p.lead));
  return out;
}

Waveform unpad(const Waveform& padded, std::size_t original_length, const StftConfig& cfg) {
  const SynthesisPadding p = synthesis_padding(original_length, cfg);
  require(padded.size() == p.lead + original_length + p.tail, "unpad: padded length does not match the original length");
  Waveform out;
  out.sample_rate = padded.sample_rate;
  const auto first = padded.samples.begin() + static_cast<std::ptrdiff_t>(p.lead);
  out.samples.assign(first, first + static_cast<std::ptrdiff_t>(original_length));
  return out;
}

Normalization corpus_normalization(std::span<const Spectrogram* const> corpus) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const Spectrogram* s : corpus)
    for (double v : s->log_mag.values()) {
      sum += v;
      ++count;
    }
  require(count > 1, "corpus_normalization: need at least two values");
  const double mean = sum / count;
  double ss = 0.0;
  for (const Spectrogram* s : corpus)
    for (double v : s->log_mag.values()) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / count);
  require(sd > 0.0, "corpus_normalization: corpus has zero variance");
  return {mean, 4.0 * sd};
}

}  // namespace cassforge::dsp
