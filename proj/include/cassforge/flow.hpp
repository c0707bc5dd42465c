// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// Conditional flow matching over the three-stem joint: logit-normal timestep
// sampling, straight-path interpolation, the regression loss, one training
// step, and forward-Euler sampling.

#pragma once

#include <array>
#include <functional>
#include <optional>
#include <random>
#include <span>

#include "cassforge/dsp.hpp"
#include "cassforge/model.hpp"

namespace cassforge::flow {

using vfn::Stems3;

/// t = 1 / (1 + exp(-z)), z ~ N(0, 1); always strictly inside (0, 1).
double sample_timestep(std::mt19937_64& rng);

/// (1 - t) x0 + t x1, elementwise.
Matrix interpolate(const Matrix& x0, const Matrix& x1, double t);
Stems3 interpolate(const Stems3& x0, const Stems3& x1, double t);

Stems3 gaussian_like(const Matrix& shape, std::mt19937_64& rng);

struct LossAndGrad {
  double loss = 0.0;
  Stems3 grad;  // d loss / d u_pred
};

/// Mean over all entries of (u_pred - (x1 - x0))^2.
LossAndGrad cfm_loss(const Stems3& u_pred, const Stems3& x0, const Stems3& x1);

struct VisualStreams {
  cond::FeatureSequence facial;
  cond::FeatureSequence scene;
};

/// One training example. Spectrogram matrices are already normalised.
struct TrainBatchItem {
  Matrix s_A;
  Stems3 targets;  // s_DX, s_FX, s_MX
  std::optional<VisualStreams> visual;
  vfn::FrameClock clock{};
};

/// Builds a (normalised) item from raw log-magnitude spectrograms.
TrainBatchItem make_item(const dsp::Spectrogram& mix, const std::array<dsp::Spectrogram, 3>& stems,
                         std::optional<VisualStreams> visual);

/// Clock for frame centres of an STFT geometry.
vfn::FrameClock clock_for(const dsp::StftConfig& cfg, int sample_rate);

/// Loss for a fixed (t, x0) and, if grad is non-null, its gradient with
/// respect to every model parameter (accumulated into *grad).
double loss_for_draw(const TrainBatchItem& item, const Model& model, double t, const Stems3& x0, bool use_visual,
                     Model* grad);

struct StepReport {
  double loss = 0.0;
};

/// Largest |value| over the hidden layers and output for one draw; infinite
/// if any is non-finite. Used for the non-finite-loss diagnostic.
double max_activation(const TrainBatchItem& item, const Model& model, double t, const Stems3& x0, bool use_visual);

/// Draws t then x0 per item, averages losses and gradients over the batch and
/// applies one Adam update. use_visual = false is the warm-up (audio-only) path.
/// Throws NumericError naming the step and max |activation| on a non-finite loss.
StepReport train_step(std::span<const TrainBatchItem> batch, Model& model, TrainState& state, std::mt19937_64& rng,
                      bool use_visual, std::uint64_t step_index);

using VectorField = std::function<Stems3(const Stems3& x, double t)>;

/// x <- x + u(x, n/N) / N for n = 1..N.
Stems3 euler_integrate(Stems3 x, int steps, const VectorField& field);

/// Starts from fresh Gaussian noise, integrates the learned field conditioned
/// on the mixture (and fused visual streams when given), and returns the three
/// de-normalised stem spectrograms. `clock` defaults to clock_for(s_A.config);
/// pass one when frames are offset from the visual timeline (e.g. padding).
std::array<dsp::Spectrogram, 3> euler_sample(const dsp::Spectrogram& s_A, const VisualStreams* visual, const Model& model,
                                             int steps, std::mt19937_64& rng,
                                             std::optional<vfn::FrameClock> clock = std::nullopt);

}  // namespace cassforge::flow
