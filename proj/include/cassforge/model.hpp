// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// The trainable model (fusion + vector-field net), its Adam optimiser, and
// the VFNC checkpoint format.

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cassforge/dsp.hpp"
#include "cassforge/fusion.hpp"
#include "cassforge/vfnet.hpp"

namespace cassforge {

struct Model {
  cond::FusionParams fusion;
  vfn::VfnParams vfn;

  template <class F>
  void visit(F&& f) {
    fusion.visit(f);
    vfn.visit(f);
  }

  /// Fresh model; the fusion output width becomes the attention's condition width.
  static Model init(const cond::FusionConfig& fusion_cfg, vfn::VfnConfig vfn_cfg, std::uint64_t seed);
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Single-precision master weights and moments; arithmetic runs in double.
/// Keeping the master copy in float makes a checkpoint an exact snapshot.
struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update (no weight decay).
void adam_step(std::vector<float>& params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg);

/// Master weights + optimiser state for a Model.
struct TrainState {
  std::vector<float> master;
  AdamState adam;
  AdamConfig adam_config;

  static TrainState from_model(Model& m, const AdamConfig& cfg = {});
  /// Copies master weights into the model's double tensors.
  void load_into(Model& m) const;
};

struct Checkpoint {
  Model model;
  TrainState train;
  dsp::StftConfig stft;
  dsp::Normalization normalization;
  std::string phase;         // "warmup" or "full"
  std::uint64_t global_step = 0;
  std::string rng_state;     // textual std::mt19937_64 state
  std::string extra_json = "{}";  // free-form run metadata
};

/// VFNC: magic, u32 version, u32 header length, JSON header, f32 blob
/// (parameters in declaration order, then Adam m, then Adam v).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cassforge
