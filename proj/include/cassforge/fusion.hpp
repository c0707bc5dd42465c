// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// Visual condition fusion: each stream is projected frame by frame to a shared
// width, the two are stacked along time (facial rows first) and a final
// per-row map produces the condition sequence.

#pragma once

#include <random>
#include <vector>

#include "cassforge/features.hpp"
#include "cassforge/nn.hpp"

namespace cassforge::cond {

struct FusionConfig {
  std::size_t facial_dim = 4;
  std::size_t scene_dim = 4;
  std::size_t proj_dim = 64;  // shared width after the stream projections
  std::size_t out_dim = 64;   // width of the fused condition
  int depth = 1;              // affine + activation layers per MLP
  nn::Activation activation = nn::Activation::kGelu;
};

struct FusionParams {
  FusionConfig config;
  std::vector<nn::Affine> facial;
  std::vector<nn::Affine> scene;
  std::vector<nn::Affine> fusion;

  static FusionParams zeros(const FusionConfig& cfg);
  static FusionParams init(const FusionConfig& cfg, std::mt19937_64& rng);

  template <class F>
  void visit(F&& f) {
    for (std::size_t i = 0; i < facial.size(); ++i) facial[i].visit("fusion.facial." + std::to_string(i), f);
    for (std::size_t i = 0; i < scene.size(); ++i) scene[i].visit("fusion.scene." + std::to_string(i), f);
    for (std::size_t i = 0; i < fusion.size(); ++i) fusion[i].visit("fusion.map." + std::to_string(i), f);
  }
};

/// Per-layer inputs and pre-activations kept for the backward pass.
struct FusionCache {
  std::vector<Matrix> facial_in, facial_pre;
  std::vector<Matrix> scene_in, scene_pre;
  std::vector<Matrix> fusion_in, fusion_pre;
  std::size_t facial_rows = 0;
};

FeatureSequence fuse(const FeatureSequence& facial, const FeatureSequence& scene, const FusionParams& p,
                     FusionCache* cache = nullptr);

struct FusionGrads {
  Matrix facial;
  Matrix scene;
  FusionParams params;
};

/// Exact reverse-mode gradients of fuse() for an upstream gradient on its output rows.
FusionGrads fuse_backward(const Matrix& grad_out, const FusionCache& cache, const FusionParams& p);

}  // namespace cassforge::cond
