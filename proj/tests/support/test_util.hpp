// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// Small helpers shared by the unit tests.

#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include "cassforge/dsp.hpp"

namespace cassforge::testing {

inline dsp::Waveform sine(double freq, double amp, std::size_t n, int sr = 16000, double phase = 0.0) {
  dsp::Waveform w;
  w.sample_rate = sr;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / sr + phase));
  return w;
}

inline dsp::Waveform noise(std::size_t n, std::uint64_t seed, double stddev = 0.1, int sr = 16000) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, stddev);
  dsp::Waveform w;
  w.sample_rate = sr;
  w.samples.resize(n);
  for (float& v : w.samples) v = static_cast<float>(d(rng));
  return w;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("cassforge_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace cassforge::testing
