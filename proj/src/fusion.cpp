// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "cassforge/fusion.hpp"

namespace cassforge::cond {

namespace {

std::vector<nn::Affine> make_mlp(std::size_t in, std::size_t width, int depth) {
  std::vector<nn::Affine> layers;
  for (int i = 0; i < depth; ++i) layers.push_back(nn::Affine::zeros(i == 0 ? in : width, width));
  return layers;
}

Matrix run_mlp(const std::vector<nn::Affine>& layers, nn::Activation act, Matrix h, std::vector<Matrix>* ins,
               std::vector<Matrix>* pres) {
  for (const nn::Affine& layer : layers) {
    Matrix pre;
    layer.forward(h, pre);
    if (ins != nullptr) ins->push_back(std::move(h));
    h = Matrix(pre.rows(), pre.cols());
    for (std::size_t i = 0; i < pre.size(); ++i) h.values()[i] = nn::activate(act, pre.values()[i]);
    if (pres != nullptr) pres->push_back(std::move(pre));
  }
  return h;
}

Matrix backprop_mlp(const std::vector<nn::Affine>& layers, nn::Activation act, const std::vector<Matrix>& ins,
                    const std::vector<Matrix>& pres, Matrix grad, std::vector<nn::Affine>& grads) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad.values()[i] *= nn::activate_grad(act, pres[l].values()[i]);
    Matrix dx;
    layers[l].backward(ins[l], grad, grads[l], &dx);
    grad = std::move(dx);
  }
  return grad;
}

void check_layers(const std::vector<nn::Affine>& layers, std::size_t in, const char* which) {
  require(!layers.empty(), std::string("fuse: ") + which + " MLP has no layers");
  require(layers.front().in() == in, std::string("fuse: ") + which + " features have dimension " +
                                         std::to_string(in) + ", parameters expect " +
                                         std::to_string(layers.front().in()));
}

}  // namespace

FusionParams FusionParams::zeros(const FusionConfig& cfg) {
  require(cfg.depth >= 1, "fusion depth must be >= 1");
  FusionParams p;
  p.config = cfg;
  p.facial = make_mlp(cfg.facial_dim, cfg.proj_dim, cfg.depth);
  p.scene = make_mlp(cfg.scene_dim, cfg.proj_dim, cfg.depth);
  p.fusion = make_mlp(cfg.proj_dim, cfg.out_dim, cfg.depth);
  return p;
}

FusionParams FusionParams::init(const FusionConfig& cfg, std::mt19937_64& rng) {
  FusionParams p = zeros(cfg);
  p.visit([&](const std::string& name, Matrix& m) {
    if (name.ends_with(".weight")) nn::init_glorot(m, rng);
  });
  return p;
}

FeatureSequence fuse(const FeatureSequence& facial, const FeatureSequence& scene, const FusionParams& p,
                     FusionCache* cache) {
  require(facial.kind == StreamKind::kFacial, "fuse: first stream must be facial");
  require(scene.kind == StreamKind::kScene, "fuse: second stream must be scene");
  check_layers(p.facial, facial.dim(), "facial");
  check_layers(p.scene, scene.dim(), "scene");
  require(p.fusion.front().in() == p.facial.back().out() && p.facial.back().out() == p.scene.back().out(),
          "fuse: projection widths disagree with the fusion map");

  if (cache != nullptr) *cache = FusionCache{};
  const Matrix hf = run_mlp(p.facial, p.config.activation, facial.frames, cache ? &cache->facial_in : nullptr,
                            cache ? &cache->facial_pre : nullptr);
  const Matrix hs = run_mlp(p.scene, p.config.activation, scene.frames, cache ? &cache->scene_in : nullptr,
                            cache ? &cache->scene_pre : nullptr);

  Matrix stacked(hf.rows() + hs.rows(), hf.cols());
  std::copy(hf.values().begin(), hf.values().end(), stacked.values().begin());
  std::copy(hs.values().begin(), hs.values().end(), stacked.values().begin() + static_cast<std::ptrdiff_t>(hf.size()));

  FeatureSequence out;
  out.kind = StreamKind::kFused;
  out.frames = run_mlp(p.fusion, p.config.activation, std::move(stacked), cache ? &cache->fusion_in : nullptr,
                       cache ? &cache->fusion_pre : nullptr);
  out.row_times.reserve(out.frames.rows());
  for (std::size_t i = 0; i < facial.length(); ++i) out.row_times.push_back(facial.time_of(i));
  for (std::size_t i = 0; i < scene.length(); ++i) out.row_times.push_back(scene.time_of(i));
  if (cache != nullptr) cache->facial_rows = facial.length();
  return out;
}

FusionGrads fuse_backward(const Matrix& grad_out, const FusionCache& cache, const FusionParams& p) {
  require(!cache.fusion_pre.empty(), "fuse_backward: forward cache is empty");
  require(grad_out.same_shape(cache.fusion_pre.back()), "fuse_backward: gradient shape does not match output");
  FusionGrads g;
  g.params = nn::zeros_like(p);
  const nn::Activation act = p.config.activation;

  const Matrix dstacked = backprop_mlp(p.fusion, act, cache.fusion_in, cache.fusion_pre, grad_out, g.params.fusion);
  const std::size_t width = dstacked.cols();
  Matrix dhf(cache.facial_rows, width);
  Matrix dhs(dstacked.rows() - cache.facial_rows, width);
  std::copy(dstacked.values().begin(), dstacked.values().begin() + static_cast<std::ptrdiff_t>(dhf.size()),
            dhf.values().begin());
  std::copy(dstacked.values().begin() + static_cast<std::ptrdiff_t>(dhf.size()), dstacked.values().end(),
            dhs.values().begin());

  g.facial = backprop_mlp(p.facial, act, cache.facial_in, cache.facial_pre, std::move(dhf), g.params.facial);
  g.scene = backprop_mlp(p.scene, act, cache.scene_in, cache.scene_pre, std::move(dhs), g.params.scene);
  return g;
}

}  // namespace cassforge::cond
