// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "cassforge/vfnet.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>

#include "cassforge/kernels.hpp"

namespace cassforge::vfn {

namespace {

std::vector<double> freq_basis(std::size_t bin, std::size_t bins, std::size_t count) {
  const double p = bins > 1 ? static_cast<double>(bin) / static_cast<double>(bins - 1) : 0.0;
  std::vector<double> phi(count);
  for (std::size_t k = 0; k < count; ++k) phi[k] = std::cos(std::numbers::pi * static_cast<double>(k + 1) * p);
  return phi;
}

Matrix im2col(const ModelInput& in, const VfnConfig& cfg) {
  const std::size_t frames = in.s_A.rows(), bins = in.s_A.cols();
  const std::size_t nin = cfg.input_features();
  Matrix patches(frames * bins, nin);
  const std::array<const Matrix*, kInputChannels> ch{&in.x_t[0], &in.x_t[1], &in.x_t[2], &in.s_A};
  const long nframes = static_cast<long>(frames);
#pragma omp parallel for schedule(static)
  for (long f = 0; f < nframes; ++f) {
    for (std::size_t b = 0; b < bins; ++b) {
      double* row = patches.data() + (static_cast<std::size_t>(f) * bins + b) * nin;
      std::size_t col = 0;
      auto gather = [&](long tf, long tb) {
        const bool inside = tf >= 0 && tf < nframes && tb >= 0 && tb < static_cast<long>(bins);
        for (const Matrix* m : ch) row[col++] = inside ? (*m)(static_cast<std::size_t>(tf), static_cast<std::size_t>(tb)) : 0.0;
      };
      for (int dt : cfg.time_taps) gather(f + dt, static_cast<long>(b));
      for (int db : cfg.freq_taps) gather(f, static_cast<long>(b) + db);
    }
  }
  return patches;
}

void apply_gelu(const Matrix& pre, Matrix& out) {
  out = Matrix(pre.rows(), pre.cols());
  const long n = static_cast<long>(pre.size());
  const double* src = pre.data();
  double* dst = out.data();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) dst[i] = nn::gelu(src[i]);
}

void mul_gelu_grad(Matrix& grad, const Matrix& pre) {
  const long n = static_cast<long>(grad.size());
  double* g = grad.data();
  const double* x = pre.data();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) g[i] *= nn::gelu_grad(x[i]);
}

void add_into(Matrix& dst, const Matrix& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.values()[i] += src.values()[i];
}

/// Sum over bins for each frame of a (frames*bins) x width matrix.
Matrix frame_sums(const Matrix& cells, std::size_t frames, std::size_t bins) {
  Matrix out(frames, cells.cols());
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t b = 0; b < bins; ++b) {
      const auto src = cells.row(f * bins + b);
      auto dst = out.row(f);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  return out;
}

}  // namespace

Stems3 make_stems(std::size_t frames, std::size_t bins, double fill) {
  return {Matrix(frames, bins, fill), Matrix(frames, bins, fill), Matrix(frames, bins, fill)};
}

void VfnConfig::validate() const {
  require(bins >= 1, "vfnet: bins must be >= 1");
  require(!time_taps.empty(), "vfnet: need at least one time tap");
  require(hidden >= 1 && attn_dim >= 1 && cond_dim >= 1, "vfnet: widths must be positive");
  require(time_embed_dim >= 2 && time_embed_dim % 2 == 0, "vfnet: time embedding dimension must be even");
}

VfnParams VfnParams::zeros(const VfnConfig& cfg) {
  cfg.validate();
  VfnParams p;
  p.config = cfg;
  p.in_proj = nn::Affine::zeros(cfg.input_features(), cfg.hidden);
  p.time_proj = Matrix(cfg.hidden, cfg.time_embed_dim);
  p.freq_proj = Matrix(cfg.hidden, cfg.freq_features);
  p.mid = nn::Affine::zeros(cfg.hidden, cfg.hidden);
  p.out = nn::Affine::zeros(cfg.hidden, kNumStems);
  p.attn_q = Matrix(cfg.attn_dim, cfg.hidden);
  p.attn_k = Matrix(cfg.attn_dim, cfg.cond_dim);
  p.attn_v = Matrix(cfg.attn_dim, cfg.cond_dim);
  p.attn_o = Matrix(cfg.hidden, cfg.attn_dim);
  p.gate = Matrix(1, 1);
  return p;
}

VfnParams VfnParams::init(const VfnConfig& cfg, std::mt19937_64& rng) {
  VfnParams p = zeros(cfg);
  p.visit([&](const std::string& name, Matrix& m) {
    if (name.ends_with(".bias") || name == "vfn.attn.gate") return;
    nn::init_glorot(m, rng);
  });
  return p;
}

std::vector<double> time_embed(double t, std::size_t dim) {
  require(dim >= 2 && dim % 2 == 0, "time_embed: dimension must be even and >= 2");
  const std::size_t half = dim / 2;
  std::vector<double> e(dim);
  for (std::size_t i = 0; i < half; ++i) {
    const double omega = half > 1 ? std::pow(1e4, static_cast<double>(i) / static_cast<double>(half - 1)) : 1.0;
    e[i] = std::sin(omega * t);
    e[half + i] = std::cos(omega * t);
  }
  return e;
}

Stems3 forward(const ModelInput& in, const VfnParams& p, VfnCache* cache) {
  const VfnConfig& cfg = p.config;
  const std::size_t frames = in.s_A.rows(), bins = in.s_A.cols();
  require(bins == cfg.bins, "vfnet: input has " + std::to_string(bins) + " bins, network expects " +
                                std::to_string(cfg.bins));
  for (const Matrix& x : in.x_t) require_same_shape(x, in.s_A, "vfnet input");
  require(in.t >= 0.0 && in.t <= 1.0, "vfnet: t must lie in [0, 1]");
  const bool attention = in.c_V != nullptr;
  if (attention) {
    require(in.c_V->kind == cond::StreamKind::kFused, "vfnet: condition must be a fused feature sequence");
    require(in.c_V->dim() == cfg.cond_dim, "vfnet: condition has dimension " + std::to_string(in.c_V->dim()) +
                                               ", network expects " + std::to_string(cfg.cond_dim));
  }

  VfnCache local;
  VfnCache& c = cache != nullptr ? *cache : local;
  c = VfnCache{};
  c.frames = frames;
  c.bins = bins;
  c.attention = attention;

  c.patches = im2col(in, cfg);
  p.in_proj.forward(c.patches, c.pre1);

  // Additive time and frequency-position biases.
  c.temb = time_embed(in.t, cfg.time_embed_dim);
  std::vector<double> tbias(cfg.hidden, 0.0);
  for (std::size_t h = 0; h < cfg.hidden; ++h)
    for (std::size_t e = 0; e < cfg.time_embed_dim; ++e) tbias[h] += p.time_proj(h, e) * c.temb[e];
  Matrix fbias(bins, cfg.hidden);
  for (std::size_t b = 0; b < bins; ++b) {
    const auto phi = freq_basis(b, bins, cfg.freq_features);
    for (std::size_t h = 0; h < cfg.hidden; ++h)
      for (std::size_t k = 0; k < cfg.freq_features; ++k) fbias(b, h) += p.freq_proj(h, k) * phi[k];
  }
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t b = 0; b < bins; ++b) {
      auto row = c.pre1.row(f * bins + b);
      for (std::size_t h = 0; h < cfg.hidden; ++h) row[h] += tbias[h] + fbias(b, h);
    }
  apply_gelu(c.pre1, c.h1);

  p.mid.forward(c.h1, c.pre2);

  if (attention) {
    c.cond = in.c_V->frames;
    c.pooled = frame_sums(c.h1, frames, bins);
    for (double& v : c.pooled.values()) v /= static_cast<double>(bins);
    kernels::gemm_nt(c.pooled, p.attn_q, c.q);
    kernels::gemm_nt(c.cond, p.attn_k, c.k);
    kernels::gemm_nt(c.cond, p.attn_v, c.v);
    Matrix logits;
    kernels::gemm_nt(c.q, c.k, logits);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.attn_dim));
    const std::size_t rows = c.cond.rows();
    c.attn = Matrix(frames, rows);
    for (std::size_t f = 0; f < frames; ++f) {
      const double tf = in.clock.time_of(f);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < rows; ++r) {
        double z = logits(f, r) * inv_sqrt_d;
        if (cfg.attn_time_sigma > 0.0) {
          const double dt = (tf - in.c_V->time_of(r)) / cfg.attn_time_sigma;
          z -= 0.5 * dt * dt;
        }
        c.attn(f, r) = z;
        mx = std::max(mx, z);
      }
      double sum = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        c.attn(f, r) = std::exp(c.attn(f, r) - mx);
        sum += c.attn(f, r);
      }
      for (std::size_t r = 0; r < rows; ++r) c.attn(f, r) /= sum;
    }
    kernels::gemm_nn(c.attn, c.v, c.o);
    kernels::gemm_nt(c.o, p.attn_o, c.attn_out);

    const double gate = p.gate(0, 0);
    // Skipping a zero gate keeps the output bit-identical to the audio-only path.
    if (gate != 0.0) {
      for (std::size_t f = 0; f < frames; ++f) {
        const auto a = c.attn_out.row(f);
        for (std::size_t b = 0; b < bins; ++b) {
          auto row = c.pre2.row(f * bins + b);
          for (std::size_t h = 0; h < cfg.hidden; ++h) row[h] += gate * a[h];
        }
      }
    }
  }
  apply_gelu(c.pre2, c.h2);

  Matrix u;
  p.out.forward(c.h2, u);
  Stems3 out = make_stems(frames, bins);
  for (std::size_t cell = 0; cell < frames * bins; ++cell)
    for (std::size_t s = 0; s < kNumStems; ++s) out[s].values()[cell] = u(cell, s);
  return out;
}

VfnGrads backward(const Stems3& grad_u, const VfnCache& c, const VfnParams& p) {
  const VfnConfig& cfg = p.config;
  const std::size_t frames = c.frames, bins = c.bins, cells = frames * bins;
  require(!c.patches.empty() || cells == 0, "vfnet backward: forward cache is empty");
  for (const Matrix& g : grad_u)
    require(g.rows() == frames && g.cols() == bins, "vfnet backward: gradient shape does not match forward");

  VfnGrads g;
  g.params = nn::zeros_like(p);
  VfnParams& gp = g.params;

  Matrix du(cells, kNumStems);
  for (std::size_t cell = 0; cell < cells; ++cell)
    for (std::size_t s = 0; s < kNumStems; ++s) du(cell, s) = grad_u[s].values()[cell];

  Matrix dpre2;
  p.out.backward(c.h2, du, gp.out, &dpre2);
  mul_gelu_grad(dpre2, c.pre2);

  Matrix dh1;
  p.mid.backward(c.h1, dpre2, gp.mid, &dh1);

  if (c.attention) {
    const double gate = p.gate(0, 0);
    const Matrix dsum = frame_sums(dpre2, frames, bins);  // frames x hidden

    double dgate = 0.0;
    for (std::size_t i = 0; i < dsum.size(); ++i) dgate += dsum.values()[i] * c.attn_out.values()[i];
    gp.gate(0, 0) = dgate;

    Matrix dattn_out = dsum;
    for (double& v : dattn_out.values()) v *= gate;

    kernels::gemm_tn(dattn_out, c.o, gp.attn_o);
    Matrix d_o;
    kernels::gemm_nn(dattn_out, p.attn_o, d_o);

    Matrix dattn;
    kernels::gemm_nt(d_o, c.v, dattn);  // frames x rows
    Matrix dv;
    kernels::gemm_tn(c.attn, d_o, dv);  // rows x attn_dim

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.attn_dim));
    Matrix dlogits(frames, c.attn.cols());
    for (std::size_t f = 0; f < frames; ++f) {
      double dot = 0.0;
      for (std::size_t r = 0; r < c.attn.cols(); ++r) dot += dattn(f, r) * c.attn(f, r);
      for (std::size_t r = 0; r < c.attn.cols(); ++r)
        dlogits(f, r) = c.attn(f, r) * (dattn(f, r) - dot) * inv_sqrt_d;
    }
    Matrix dq, dk;
    kernels::gemm_nn(dlogits, c.k, dq);  // frames x attn_dim
    kernels::gemm_tn(dlogits, c.q, dk);  // rows x attn_dim

    kernels::gemm_tn(dq, c.pooled, gp.attn_q);
    kernels::gemm_tn(dk, c.cond, gp.attn_k);
    kernels::gemm_tn(dv, c.cond, gp.attn_v);

    Matrix dcond_k, dcond_v;
    kernels::gemm_nn(dk, p.attn_k, dcond_k);
    kernels::gemm_nn(dv, p.attn_v, dcond_v);
    add_into(dcond_k, dcond_v);
    g.cond = std::move(dcond_k);

    Matrix dpooled;
    kernels::gemm_nn(dq, p.attn_q, dpooled);
    const double inv_bins = 1.0 / static_cast<double>(bins);
    for (std::size_t f = 0; f < frames; ++f) {
      const auto dp = dpooled.row(f);
      for (std::size_t b = 0; b < bins; ++b) {
        auto row = dh1.row(f * bins + b);
        for (std::size_t h = 0; h < cfg.hidden; ++h) row[h] += dp[h] * inv_bins;
      }
    }
  }

  mul_gelu_grad(dh1, c.pre1);
  Matrix& dpre1 = dh1;
  p.in_proj.backward(c.patches, dpre1, gp.in_proj, nullptr);

  std::vector<double> col;
  kernels::column_sums(dpre1, col);
  for (std::size_t h = 0; h < cfg.hidden; ++h)
    for (std::size_t e = 0; e < cfg.time_embed_dim; ++e) gp.time_proj(h, e) = col[h] * c.temb[e];

  for (std::size_t b = 0; b < bins; ++b) {
    const auto phi = freq_basis(b, bins, cfg.freq_features);
    std::vector<double> per_bin(cfg.hidden, 0.0);
    for (std::size_t f = 0; f < frames; ++f) {
      const auto row = dpre1.row(f * bins + b);
      for (std::size_t h = 0; h < cfg.hidden; ++h) per_bin[h] += row[h];
    }
    for (std::size_t h = 0; h < cfg.hidden; ++h)
      for (std::size_t k = 0; k < cfg.freq_features; ++k) gp.freq_proj(h, k) += per_bin[h] * phi[k];
  }
  return g;
}

}  // namespace cassforge::vfn
