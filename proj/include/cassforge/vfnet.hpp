// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// Desk-scale vector-field estimator u(x_t, t | s_A, c_V).
//
// Every time-frequency cell is processed by the same small MLP. Its input is
// a cross-shaped dilated stencil over the four input channels (three noisy
// stems plus the mixture), so the receptive field reaches +-16 frames in time
// and a few bins in frequency. Time and frequency position enter as additive
// biases on the first hidden layer. One cross-attention block lets each frame
// attend to the fused visual rows; its contribution is multiplied by a scalar
// gate that starts at zero, so a fresh block leaves the audio path untouched.

#pragma once

#include <array>
#include <random>
#include <vector>

#include "cassforge/features.hpp"
#include "cassforge/nn.hpp"

namespace cassforge::vfn {

inline constexpr std::size_t kNumStems = 3;
inline constexpr std::size_t kInputChannels = 4;

/// Source stack in fixed channel order DX, FX, MX; each frames x bins.
using Stems3 = std::array<Matrix, kNumStems>;

Stems3 make_stems(std::size_t frames, std::size_t bins, double fill = 0.0);

struct VfnConfig {
  std::size_t bins = 513;
  std::vector<int> time_taps{-16, -8, -4, -2, -1, 0, 1, 2, 4, 8, 16};
  std::vector<int> freq_taps{-2, -1, 1, 2};
  std::size_t hidden = 32;
  std::size_t time_embed_dim = 8;
  std::size_t freq_features = 4;
  std::size_t cond_dim = 64;
  std::size_t attn_dim = 16;
  /// Width (s) of the Gaussian bias favouring visual rows near the frame time; <= 0 disables it.
  double attn_time_sigma = 0.15;

  std::size_t stencil_size() const { return time_taps.size() + freq_taps.size(); }
  std::size_t input_features() const { return kInputChannels * stencil_size(); }
  void validate() const;
};

struct VfnParams {
  VfnConfig config;
  nn::Affine in_proj;  // hidden x input_features
  Matrix time_proj;    // hidden x time_embed_dim
  Matrix freq_proj;    // hidden x freq_features
  nn::Affine mid;      // hidden x hidden
  nn::Affine out;      // 3 x hidden
  Matrix attn_q;       // attn_dim x hidden
  Matrix attn_k;       // attn_dim x cond_dim
  Matrix attn_v;       // attn_dim x cond_dim
  Matrix attn_o;       // hidden x attn_dim
  Matrix gate;         // 1 x 1

  static VfnParams zeros(const VfnConfig& cfg);
  /// Glorot weights, zero biases, gate exactly 0.
  static VfnParams init(const VfnConfig& cfg, std::mt19937_64& rng);

  template <class F>
  void visit(F&& f) {
    in_proj.visit("vfn.in", f);
    f(std::string("vfn.time_proj"), time_proj);
    f(std::string("vfn.freq_proj"), freq_proj);
    mid.visit("vfn.mid", f);
    out.visit("vfn.out", f);
    f(std::string("vfn.attn.q"), attn_q);
    f(std::string("vfn.attn.k"), attn_k);
    f(std::string("vfn.attn.v"), attn_v);
    f(std::string("vfn.attn.o"), attn_o);
    f(std::string("vfn.attn.gate"), gate);
  }
};

/// Maps spectrogram frame indices to seconds (frame centres).
struct FrameClock {
  double period_s = 256.0 / 16000.0;
  double origin_s = 512.0 / 16000.0;
  double time_of(std::size_t frame) const { return origin_s + period_s * static_cast<double>(frame); }
};

struct ModelInput {
  const Stems3& x_t;
  const Matrix& s_A;
  double t = 0.0;
  const cond::FeatureSequence* c_V = nullptr;  // null selects the audio-only path
  FrameClock clock{};
};

/// Sinusoidal embedding, dim/2 frequencies spaced geometrically from 1 to 1e4;
/// layout [sin..., cos...].
std::vector<double> time_embed(double t, std::size_t dim);

struct VfnCache {
  std::size_t frames = 0;
  std::size_t bins = 0;
  Matrix patches, pre1, h1, pre2, h2;
  std::vector<double> temb;
  bool attention = false;
  Matrix cond, pooled, q, k, v, attn, o, attn_out;
};

/// Output has the shape of x_t.
Stems3 forward(const ModelInput& in, const VfnParams& p, VfnCache* cache = nullptr);

struct VfnGrads {
  VfnParams params;
  Matrix cond;  // d loss / d c_V rows; empty on the audio-only path
};

VfnGrads backward(const Stems3& grad_u, const VfnCache& cache, const VfnParams& p);

}  // namespace cassforge::vfn
