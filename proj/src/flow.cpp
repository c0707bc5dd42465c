// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "cassforge/flow.hpp"

#include <cmath>
#include <sstream>

namespace cassforge::flow {

namespace {

void add_scaled(Model& dst, Model& src, double scale) {
  std::vector<Matrix*> targets;
  dst.visit([&](const std::string&, Matrix& m) { targets.push_back(&m); });
  std::size_t i = 0;
  src.visit([&](const std::string&, Matrix& m) {
    Matrix& t = *targets[i++];
    for (std::size_t k = 0; k < m.size(); ++k) t.values()[k] += scale * m.values()[k];
  });
}

}  // namespace

double sample_timestep(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double z = normal(rng);
  const double t = 1.0 / (1.0 + std::exp(-z));
  return std::clamp(t, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
}

Matrix interpolate(const Matrix& x0, const Matrix& x1, double t) {
  require_same_shape(x0, x1, "interpolate");
  require(t >= 0.0 && t <= 1.0, "interpolate: t must lie in [0, 1]");
  Matrix out(x0.rows(), x0.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = (1.0 - t) * x0.values()[i] + t * x1.values()[i];
  return out;
}

Stems3 interpolate(const Stems3& x0, const Stems3& x1, double t) {
  Stems3 out;
  for (std::size_t s = 0; s < vfn::kNumStems; ++s) out[s] = interpolate(x0[s], x1[s], t);
  return out;
}

Stems3 gaussian_like(const Matrix& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Stems3 x = vfn::make_stems(shape.rows(), shape.cols());
  for (Matrix& m : x)
    for (double& v : m.values()) v = normal(rng);
  return x;
}

LossAndGrad cfm_loss(const Stems3& u_pred, const Stems3& x0, const Stems3& x1) {
  std::size_t count = 0;
  for (std::size_t s = 0; s < vfn::kNumStems; ++s) {
    require_same_shape(u_pred[s], x0[s], "cfm_loss");
    require_same_shape(x0[s], x1[s], "cfm_loss");
    count += u_pred[s].size();
  }
  require(count > 0, "cfm_loss: empty tensors");
  LossAndGrad r;
  const double scale = 2.0 / static_cast<double>(count);
  double sum = 0.0;
  for (std::size_t s = 0; s < vfn::kNumStems; ++s) {
    r.grad[s] = Matrix(u_pred[s].rows(), u_pred[s].cols());
    for (std::size_t i = 0; i < u_pred[s].size(); ++i) {
      const double diff = u_pred[s].values()[i] - (x1[s].values()[i] - x0[s].values()[i]);
      sum += diff * diff;
      r.grad[s].values()[i] = scale * diff;
    }
  }
  r.loss = sum / static_cast<double>(count);
  return r;
}

TrainBatchItem make_item(const dsp::Spectrogram& mix, const std::array<dsp::Spectrogram, 3>& stems,
                         std::optional<VisualStreams> visual) {
  TrainBatchItem item;
  item.s_A = mix.normalized();
  for (std::size_t s = 0; s < vfn::kNumStems; ++s) {
    require(stems[s].log_mag.same_shape(mix.log_mag), "make_item: stem and mixture spectrograms differ in shape");
    item.targets[s] = stems[s].normalized();
  }
  item.visual = std::move(visual);
  item.clock = clock_for(mix.config, mix.sample_rate);
  return item;
}

vfn::FrameClock clock_for(const dsp::StftConfig& cfg, int sample_rate) {
  return {static_cast<double>(cfg.hop_size) / sample_rate, 0.5 * cfg.window_size / sample_rate};
}

double loss_for_draw(const TrainBatchItem& item, const Model& model, double t, const Stems3& x0, bool use_visual,
                     Model* grad) {
  const bool visual = use_visual && item.visual.has_value();
  cond::FusionCache fcache;
  std::optional<cond::FeatureSequence> c_V;
  if (visual) c_V = cond::fuse(item.visual->facial, item.visual->scene, model.fusion, &fcache);

  const Stems3 x_t = interpolate(x0, item.targets, t);
  vfn::VfnCache vcache;
  const vfn::ModelInput in{x_t, item.s_A, t, c_V ? &*c_V : nullptr, item.clock};
  const Stems3 u = vfn::forward(in, model.vfn, grad != nullptr ? &vcache : nullptr);
  LossAndGrad lg = cfm_loss(u, x0, item.targets);
  if (grad == nullptr) return lg.loss;

  Model g = nn::zeros_like(model);
  vfn::VfnGrads vg = vfn::backward(lg.grad, vcache, model.vfn);
  g.vfn = std::move(vg.params);
  if (visual) g.fusion = cond::fuse_backward(vg.cond, fcache, model.fusion).params;
  add_scaled(*grad, g, 1.0);
  return lg.loss;
}

double max_activation(const TrainBatchItem& item, const Model& model, double t, const Stems3& x0, bool use_visual) {
  std::optional<cond::FeatureSequence> c_V;
  if (use_visual && item.visual) c_V = cond::fuse(item.visual->facial, item.visual->scene, model.fusion);
  const Stems3 x_t = interpolate(x0, item.targets, t);
  vfn::VfnCache cache;
  const Stems3 u = vfn::forward({x_t, item.s_A, t, c_V ? &*c_V : nullptr, item.clock}, model.vfn, &cache);
  double worst = 0.0;
  for (const Matrix* m : std::initializer_list<const Matrix*>{&cache.pre1, &cache.h1, &cache.pre2, &cache.h2, &u[0], &u[1], &u[2]})
    for (double v : m->values()) worst = std::isfinite(v) ? std::max(worst, std::abs(v)) : INFINITY;
  return worst;
}

StepReport train_step(std::span<const TrainBatchItem> batch, Model& model, TrainState& state, std::mt19937_64& rng,
                      bool use_visual, std::uint64_t step_index) {
  require(!batch.empty(), "train_step: empty batch");
  Model grad = nn::zeros_like(model);
  StepReport report;
  for (const TrainBatchItem& item : batch) {
    const double t = sample_timestep(rng);
    const Stems3 x0 = gaussian_like(item.s_A, rng);
    const double loss = loss_for_draw(item, model, t, x0, use_visual, &grad);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step_index << " (max |activation| "
          << max_activation(item, model, t, x0, use_visual) << ", t = " << t << ")";
      throw NumericError(msg.str());
    }
    report.loss += loss;
  }
  report.loss /= static_cast<double>(batch.size());

  std::vector<double> flat = nn::flatten(grad);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& v : flat) v *= inv;
  adam_step(state.master, flat, state.adam, state.adam_config);
  state.load_into(model);
  return report;
}

Stems3 euler_integrate(Stems3 x, int steps, const VectorField& field) {
  require(steps >= 1, "euler: need at least one step");
  const double eta = 1.0 / steps;
  for (int n = 1; n <= steps; ++n) {
    const double t = static_cast<double>(n) / steps;
    const Stems3 u = field(x, t);
    for (std::size_t s = 0; s < vfn::kNumStems; ++s) {
      require_same_shape(u[s], x[s], "euler: vector field output");
      for (std::size_t i = 0; i < x[s].size(); ++i) x[s].values()[i] += eta * u[s].values()[i];
    }
  }
  return x;
}

std::array<dsp::Spectrogram, 3> euler_sample(const dsp::Spectrogram& s_A, const VisualStreams* visual, const Model& model,
                                             int steps, std::mt19937_64& rng, std::optional<vfn::FrameClock> clock) {
  const Matrix mix = s_A.normalized();
  std::optional<cond::FeatureSequence> c_V;
  if (visual != nullptr) c_V = cond::fuse(visual->facial, visual->scene, model.fusion);
  if (!clock) clock = clock_for(s_A.config, s_A.sample_rate);

  Stems3 x = gaussian_like(mix, rng);
  x = euler_integrate(std::move(x), steps, [&](const Stems3& state, double t) {
    const vfn::ModelInput in{state, mix, t, c_V ? &*c_V : nullptr, *clock};
    return vfn::forward(in, model.vfn);
  });

  std::array<dsp::Spectrogram, 3> out;
  for (std::size_t s = 0; s < vfn::kNumStems; ++s)
    out[s] = dsp::Spectrogram::from_normalized(x[s], s_A.config, s_A.normalization, s_A.sample_rate);
  return out;
}

}  // namespace cassforge::flow
