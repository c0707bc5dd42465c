// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "cassforge/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "config_json.hpp"
#include "json.hpp"

namespace cassforge {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'V', 'F', 'N', 'C'};
constexpr std::uint32_t kVersion = 1;

void put32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ValidationError(what + ": truncated checkpoint");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

}  // namespace

namespace detail {

json fusion_to_json(const cond::FusionConfig& c) {
  return {{"facial_dim", c.facial_dim}, {"scene_dim", c.scene_dim}, {"proj_dim", c.proj_dim},
          {"out_dim", c.out_dim},       {"depth", c.depth},         {"activation", nn::to_string(c.activation)}};
}

cond::FusionConfig fusion_from_json(const json& j) {
  cond::FusionConfig c;
  c.facial_dim = j.at("facial_dim");
  c.scene_dim = j.at("scene_dim");
  c.proj_dim = j.at("proj_dim");
  c.out_dim = j.at("out_dim");
  c.depth = j.at("depth");
  c.activation = nn::activation_from_string(j.at("activation").get<std::string>());
  return c;
}

json vfn_to_json(const vfn::VfnConfig& c) {
  return {{"bins", c.bins},
          {"time_taps", c.time_taps},
          {"freq_taps", c.freq_taps},
          {"hidden", c.hidden},
          {"time_embed_dim", c.time_embed_dim},
          {"freq_features", c.freq_features},
          {"cond_dim", c.cond_dim},
          {"attn_dim", c.attn_dim},
          {"attn_time_sigma", c.attn_time_sigma}};
}

vfn::VfnConfig vfn_from_json(const json& j) {
  vfn::VfnConfig c;
  c.bins = j.at("bins");
  c.time_taps = j.at("time_taps").get<std::vector<int>>();
  c.freq_taps = j.at("freq_taps").get<std::vector<int>>();
  c.hidden = j.at("hidden");
  c.time_embed_dim = j.at("time_embed_dim");
  c.freq_features = j.at("freq_features");
  c.cond_dim = j.at("cond_dim");
  c.attn_dim = j.at("attn_dim");
  c.attn_time_sigma = j.at("attn_time_sigma");
  return c;
}

}  // namespace detail

using detail::fusion_from_json;
using detail::fusion_to_json;
using detail::vfn_from_json;
using detail::vfn_to_json;

Model Model::init(const cond::FusionConfig& fusion_cfg, vfn::VfnConfig vfn_cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  vfn_cfg.cond_dim = fusion_cfg.out_dim;
  Model m;
  m.fusion = cond::FusionParams::init(fusion_cfg, rng);
  m.vfn = vfn::VfnParams::init(vfn_cfg, rng);
  return m;
}

void adam_step(std::vector<float>& params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg) {
  require(grads.size() == params.size(), "adam_step: gradient has " + std::to_string(grads.size()) +
                                             " entries, parameters have " + std::to_string(params.size()));
  if (state.m.size() != params.size()) {
    require(state.m.empty() && state.v.empty(), "adam_step: optimiser state does not match parameters");
    state.m.assign(params.size(), 0.0f);
    state.v.assign(params.size(), 0.0f);
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    state.m[i] = static_cast<float>(m);
    state.v[i] = static_cast<float>(v);
    const double update = cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
    params[i] = static_cast<float>(params[i] - update);
  }
}

TrainState TrainState::from_model(Model& m, const AdamConfig& cfg) {
  TrainState s;
  const auto flat = nn::flatten(m);
  s.master.assign(flat.begin(), flat.end());
  s.adam_config = cfg;
  s.load_into(m);
  return s;
}

void TrainState::load_into(Model& m) const {
  nn::unflatten(m, std::vector<double>(master.begin(), master.end()));
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Model model = ckpt.model;
  json tensors = json::array();
  model.visit([&](const std::string& name, Matrix& m) {
    tensors.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}});
  });
  const std::size_t count = nn::parameter_count(model);
  const auto& train = ckpt.train;
  require(train.master.empty() || train.master.size() == count, "save_checkpoint: master weights do not match model");
  const bool moments = !train.adam.m.empty();

  json header = {
      {"format", "cassforge-vfnc"},
      {"fusion", fusion_to_json(model.fusion.config)},
      {"vfn", vfn_to_json(model.vfn.config)},
      {"tensors", tensors},
      {"parameter_count", count},
      {"stft", {{"fft_size", ckpt.stft.fft_size}, {"window_size", ckpt.stft.window_size},
                {"hop_size", ckpt.stft.hop_size}, {"window", "hann"}}},
      {"normalization", {{"offset", ckpt.normalization.offset}, {"scale", ckpt.normalization.scale}}},
      {"phase", ckpt.phase},
      {"global_step", ckpt.global_step},
      {"rng_state", ckpt.rng_state},
      {"adam", {{"lr", train.adam_config.lr}, {"beta1", train.adam_config.beta1}, {"beta2", train.adam_config.beta2},
                {"eps", train.adam_config.eps}, {"step", train.adam.step}, {"has_moments", moments}}},
      {"extra", json::parse(ckpt.extra_json)},
  };
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, 4);
  put32(out, kVersion);
  put32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  // Parameters come from the master copy when present so that the blob is
  // bit-exact with what training will resume from.
  if (!train.master.empty()) {
    for (float v : train.master) put32(out, std::bit_cast<std::uint32_t>(v));
  } else {
    for (double v : nn::flatten(model)) put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (moments) {
    for (float v : train.adam.m) put32(out, std::bit_cast<std::uint32_t>(v));
    for (float v : train.adam.v) put32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string what = path.string();
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw ValidationError(what + ": bad checkpoint magic");
  const std::uint32_t version = get32(in, what);
  require(version == kVersion, what + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t header_len = get32(in, what);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), header_len)) throw ValidationError(what + ": truncated header");

  Checkpoint ckpt;
  try {
    const json header = json::parse(text);
    const auto fusion_cfg = fusion_from_json(header.at("fusion"));
    const auto vfn_cfg = vfn_from_json(header.at("vfn"));
    ckpt.model.fusion = cond::FusionParams::zeros(fusion_cfg);
    ckpt.model.vfn = vfn::VfnParams::zeros(vfn_cfg);
    const auto& s = header.at("stft");
    ckpt.stft.fft_size = s.at("fft_size");
    ckpt.stft.window_size = s.at("window_size");
    ckpt.stft.hop_size = s.at("hop_size");
    ckpt.normalization.offset = header.at("normalization").at("offset");
    ckpt.normalization.scale = header.at("normalization").at("scale");
    ckpt.phase = header.at("phase");
    ckpt.global_step = header.at("global_step");
    ckpt.rng_state = header.at("rng_state");
    const auto& a = header.at("adam");
    ckpt.train.adam_config = {a.at("lr"), a.at("beta1"), a.at("beta2"), a.at("eps")};
    ckpt.train.adam.step = a.at("step");
    const bool moments = a.at("has_moments");
    ckpt.extra_json = header.value("extra", json::object()).dump();

    const std::size_t count = nn::parameter_count(ckpt.model);
    require(header.at("parameter_count").get<std::size_t>() == count, what + ": parameter count mismatch");
    auto read_block = [&](std::vector<float>& dst) {
      dst.resize(count);
      for (float& v : dst) v = std::bit_cast<float>(get32(in, what));
    };
    read_block(ckpt.train.master);
    if (moments) {
      read_block(ckpt.train.adam.m);
      read_block(ckpt.train.adam.v);
    }
  } catch (const json::exception& e) {
    throw ValidationError(what + ": malformed checkpoint header: " + e.what());
  }
  ckpt.train.load_into(ckpt.model);
  return ckpt;
}

}  // namespace cassforge
