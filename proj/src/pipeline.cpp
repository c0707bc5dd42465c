// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "cassforge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <numbers>
#include <sstream>

#include "cassforge/loudness.hpp"
#include "cassforge/sed.hpp"
#include "config_json.hpp"
#include "json.hpp"

namespace cassforge::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::array<const char*, 3> kStemFiles{"dx.wav", "fx.wav", "mx.wav"};
constexpr std::array<const char*, 3> kStemNames{"dx", "fx", "mx"};
constexpr std::array<const char*, 3> kStemLabels{"DX", "FX", "MX"};
constexpr std::array<metrics::MainClass, 3> kTargets{metrics::MainClass::kSpeech, metrics::MainClass::kEffects,
                                                     metrics::MainClass::kMusic};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

json stats(const std::vector<double>& v) {
  std::vector<double> finite;
  for (double x : v)
    if (std::isfinite(x)) finite.push_back(x);
  json j = {{"count", v.size()}, {"silent", v.size() - finite.size()}};
  if (finite.empty()) return j;
  const double mean = std::accumulate(finite.begin(), finite.end(), 0.0) / static_cast<double>(finite.size());
  double var = 0.0;
  for (double x : finite) var += (x - mean) * (x - mean);
  j["mean"] = mean;
  j["std"] = std::sqrt(var / static_cast<double>(finite.size()));
  j["min"] = *std::min_element(finite.begin(), finite.end());
  j["max"] = *std::max_element(finite.begin(), finite.end());
  return j;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

dsp::Spectrogram crop_rows(const dsp::Spectrogram& s, std::size_t first, std::size_t count) {
  dsp::Spectrogram out = s;
  out.log_mag = Matrix(count, s.bins());
  for (std::size_t r = 0; r < count; ++r)
    std::copy(s.log_mag.row(first + r).begin(), s.log_mag.row(first + r).end(), out.log_mag.row(r).begin());
  return out;
}

vfn::FrameClock padded_clock(const dsp::StftConfig& cfg, int sample_rate, std::size_t lead, std::size_t first_frame) {
  const double origin = (static_cast<double>(first_frame) * cfg.hop_size + 0.5 * cfg.window_size -
                         static_cast<double>(lead)) / sample_rate;
  return {static_cast<double>(cfg.hop_size) / sample_rate, origin};
}

std::optional<flow::VisualStreams> visual_from(const std::optional<cond::FeatureSequence>& facial,
                                               const std::optional<cond::FeatureSequence>& scene) {
  if (!facial || !scene) return std::nullopt;
  return flow::VisualStreams{*facial, *scene};
}

std::optional<cond::FeatureSequence> maybe_fseq(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  return cond::read_fseq(p);
}

json adam_to_json(const AdamConfig& a) {
  return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}

}  // namespace

// --- Synthesis -------------------------------------------------------------

SynthSummary synthesize_dataset(const mix::Pools& pools, const mix::MixRecipe& recipe, const fs::path& out_dir,
                                std::size_t count, std::uint64_t seed, const std::string& pools_source) {
  recipe.validate();
  fs::create_directories(out_dir);
  SynthSummary summary;
  summary.count = count;
  summary.mixture_loudness.resize(count);
  summary.mixture_true_peak.resize(count);
  for (std::size_t s = 0; s < 3; ++s) {
    summary.stem_loudness[s].resize(count);
    summary.stem_true_peak[s].resize(count);
  }
  std::vector<char> limited(count, 0);
  std::vector<std::string> errors(count);

#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < static_cast<long>(count); ++k) {
    try {
      mix::MixRecipe r = recipe;
      r.rng_seed = mix::sample_seed(seed, static_cast<std::uint64_t>(k));
      const mix::StemSet set = mix::synthesize_sample(pools, r);
      char name[32];
      std::snprintf(name, sizeof name, "sample_%05ld", k);
      mix::write_stem_set(out_dir / name, set);
      summary.mixture_loudness[k] = set.loudness;
      summary.mixture_true_peak[k] = set.true_peak;
      limited[k] = set.peak_limited ? 1 : 0;
      for (mix::StemKind kind : mix::kAllStems) {
        const auto s = static_cast<std::size_t>(kind);
        summary.stem_loudness[s][k] = mix::measure_loudness(set.stem(kind));
        summary.stem_true_peak[s][k] = mix::measure_true_peak(set.stem(kind));
      }
    } catch (const std::exception& e) {
      errors[k] = "sample " + std::to_string(k) + ": " + e.what();
    }
  }
  for (const std::string& e : errors)
    if (!e.empty()) throw ValidationError(e);
  summary.peak_limited = static_cast<std::size_t>(std::count(limited.begin(), limited.end(), 1));

  json j = {{"count", count},
            {"seed", seed},
            {"target_loudness", recipe.target_loudness},
            {"true_peak_ceiling", recipe.true_peak_ceiling},
            {"peak_limited", summary.peak_limited},
            {"mixture", {{"loudness", stats(summary.mixture_loudness)}, {"true_peak", stats(summary.mixture_true_peak)}}}};
  for (std::size_t s = 0; s < 3; ++s)
    j["stems"][kStemLabels[s]] = {{"loudness", stats(summary.stem_loudness[s])},
                                  {"true_peak", stats(summary.stem_true_peak[s])}};
  write_text(out_dir / "summary.json", j.dump(2) + "\n");
  json config = {{"command", "synth"},
                 {"count", count},
                 {"seed", seed},
                 {"recipe", json::parse(mix::recipe_to_json(recipe))}};
  if (!pools_source.empty()) config["pools"] = pools_source;
  write_text(out_dir / "config.json", config.dump(2) + "\n");
  return summary;
}

std::vector<fs::path> list_samples(const fs::path& dataset_dir) {
  if (!fs::is_directory(dataset_dir)) throw IoError("dataset directory " + dataset_dir.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dataset_dir))
    if (e.is_directory() && fs::exists(e.path() / "mix.wav")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// --- Training --------------------------------------------------------------

vfn::VfnConfig TrainConfig::default_vfn() {
  vfn::VfnConfig c;
  c.bins = 129;
  c.time_taps = {-32, -16, -8, -4, -2, -1, 0, 1, 2, 4, 8, 16, 32};
  c.freq_taps = {-6, -4, -3, -2, -1, 1, 2, 3, 4, 6};
  c.hidden = 24;
  c.time_embed_dim = 8;
  c.freq_features = 4;
  c.cond_dim = 8;
  c.attn_dim = 8;
  c.attn_time_sigma = 0.15;
  return c;
}

double scheduled_lr(const TrainConfig& c, std::uint64_t step) {
  const double progress = c.steps > 0 ? static_cast<double>(step) / static_cast<double>(c.steps) : 0.0;
  const double f = c.lr_final_fraction;
  return c.adam.lr * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

std::string train_config_to_json(const TrainConfig& c) {
  const json j = {{"stft", {{"fft_size", c.stft.fft_size}, {"window_size", c.stft.window_size}, {"hop_size", c.stft.hop_size}}},
                  {"fusion", detail::fusion_to_json(c.fusion)},
                  {"vfn", detail::vfn_to_json(c.vfn)},
                  {"adam", adam_to_json(c.adam)},
                  {"lr_final_fraction", c.lr_final_fraction},
                  {"batch", c.batch},
                  {"crop_frames", c.crop_frames},
                  {"steps", c.steps},
                  {"seed", c.seed},
                  {"log_every", c.log_every}};
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text, TrainConfig c) {
  try {
    const json j = json::parse(text);
    require(j.is_object(), "train config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "stft") {
        c.stft.fft_size = value.at("fft_size");
        c.stft.window_size = value.at("window_size");
        c.stft.hop_size = value.at("hop_size");
      } else if (key == "fusion") {
        c.fusion = detail::fusion_from_json(value);
      } else if (key == "vfn") {
        c.vfn = detail::vfn_from_json(value);
      } else if (key == "adam") {
        c.adam.lr = value.value("lr", c.adam.lr);
        c.adam.beta1 = value.value("beta1", c.adam.beta1);
        c.adam.beta2 = value.value("beta2", c.adam.beta2);
        c.adam.eps = value.value("eps", c.adam.eps);
      } else if (key == "lr_final_fraction") {
        c.lr_final_fraction = value;
      } else if (key == "batch") {
        c.batch = value;
      } else if (key == "crop_frames") {
        c.crop_frames = value;
      } else if (key == "steps") {
        c.steps = value;
      } else if (key == "seed") {
        c.seed = value;
      } else if (key == "log_every") {
        c.log_every = value;
      } else {
        throw ValidationError("train config: unknown key \"" + key + "\"");
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  c.stft.validate();
  require(c.lr_final_fraction > 0.0 && c.lr_final_fraction <= 1.0,
          "train config: lr_final_fraction must lie in (0, 1]");
  require(c.batch >= 1, "train config: batch must be >= 1");
  require(c.crop_frames >= 1, "train config: crop_frames must be >= 1");
  require(c.log_every >= 1, "train config: log_every must be >= 1");
  return c;
}

TrainSample prepare_sample(const mix::LoadedSample& s, const dsp::StftConfig& cfg) {
  TrainSample t;
  t.lead = dsp::synthesis_padding(s.mixture.size(), cfg).lead;
  t.mixture = dsp::log_magnitude(dsp::stft(dsp::pad_for_synthesis(s.mixture, cfg), cfg));
  for (std::size_t k = 0; k < 3; ++k)
    t.stems[k] = dsp::log_magnitude(dsp::stft(dsp::pad_for_synthesis(s.stems[k], cfg), cfg));
  t.visual = visual_from(s.facial, s.scene);
  return t;
}

std::vector<TrainSample> load_training_set(const fs::path& dataset_dir, const dsp::StftConfig& cfg) {
  const auto dirs = list_samples(dataset_dir);
  require(!dirs.empty(), "dataset " + dataset_dir.string() + " has no samples");
  std::vector<TrainSample> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(prepare_sample(mix::read_stem_set(d), cfg));
  return out;
}

flow::TrainBatchItem crop_item(const TrainSample& s, const dsp::Normalization& norm, std::size_t crop_frames,
                               std::mt19937_64& rng) {
  const std::size_t frames = s.mixture.frames();
  require(frames > 0, "crop_item: empty spectrogram");
  const std::size_t len = std::min(frames, crop_frames);
  const std::size_t first =
      frames > len ? std::uniform_int_distribution<std::size_t>(0, frames - len)(rng) : std::size_t{0};
  dsp::Spectrogram mixture = crop_rows(s.mixture, first, len);
  mixture.normalization = norm;
  std::array<dsp::Spectrogram, 3> stems;
  for (std::size_t k = 0; k < 3; ++k) {
    stems[k] = crop_rows(s.stems[k], first, len);
    stems[k].normalization = norm;
  }
  flow::TrainBatchItem item = flow::make_item(mixture, stems, s.visual);
  item.clock = padded_clock(s.mixture.config, s.mixture.sample_rate, s.lead, first);
  return item;
}

const char* to_string(Phase p) { return p == Phase::kWarmup ? "warmup" : "full"; }

Phase phase_from_string(const std::string& s) {
  if (s == "warmup") return Phase::kWarmup;
  if (s == "full") return Phase::kFull;
  throw ValidationError("unknown phase \"" + s + "\" (expected warmup or full)");
}

TrainResult train(const std::vector<TrainSample>& data, const TrainRequest& req, const TrainObserver& observer) {
  require(!data.empty(), "train: no training samples");
  const TrainConfig& cfg = req.config;
  const auto started = std::chrono::steady_clock::now();

  Checkpoint ck;
  std::mt19937_64 rng(cfg.seed);
  std::optional<Checkpoint> loaded;
  if (req.start)
    loaded = *req.start;
  else if (req.checkpoint)
    loaded = load_checkpoint(*req.checkpoint);

  const bool resume = loaded && loaded->phase == to_string(req.phase);
  if (resume) {
    ck = std::move(*loaded);
    std::istringstream(ck.rng_state) >> rng;
    ck.train.adam_config = cfg.adam;
  } else if (req.phase == Phase::kFull && loaded) {
    require(loaded->phase == "warmup", "train: full phase needs a warmup checkpoint, got phase " + loaded->phase);
    ck.model = std::move(loaded->model);
    ck.stft = loaded->stft;
    ck.normalization = loaded->normalization;
    // The attention block starts closed whatever the warm-up left behind.
    ck.model.vfn.gate.fill(0.0);
    ck.train = TrainState::from_model(ck.model, cfg.adam);
  } else {
    require(req.phase == Phase::kWarmup || req.allow_without_warmup,
            "train: full phase needs a warmup checkpoint (or the override flag)");
    require(!loaded, "train: a warmup run cannot start from a full-phase checkpoint");
    vfn::VfnConfig vcfg = cfg.vfn;
    vcfg.bins = static_cast<std::size_t>(cfg.stft.bins());
    ck.model = Model::init(cfg.fusion, vcfg, cfg.seed);
    ck.stft = cfg.stft;
    std::vector<const dsp::Spectrogram*> corpus;
    for (const auto& s : data) corpus.push_back(&s.mixture);
    ck.normalization = dsp::corpus_normalization(corpus);
    ck.train = TrainState::from_model(ck.model, cfg.adam);
  }
  ck.phase = to_string(req.phase);
  for (const auto& s : data) {
    require(s.mixture.config == ck.stft, "train: dataset STFT geometry differs from the checkpoint");
    require(s.mixture.bins() == ck.model.vfn.config.bins, "train: spectrogram bins differ from the model");
  }

  const bool use_visual = req.phase == Phase::kFull;
  TrainResult result;
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<flow::TrainBatchItem> batch(cfg.batch);
  while (ck.global_step < cfg.steps) {
    ck.train.adam_config.lr = scheduled_lr(cfg, ck.global_step);
    for (auto& item : batch) item = crop_item(data[pick(rng)], ck.normalization, cfg.crop_frames, rng);
    const double loss = flow::train_step(batch, ck.model, ck.train, rng, use_visual, ck.global_step).loss;
    result.losses.push_back(loss);
    if (observer) observer(ck.global_step, loss);
    ++ck.global_step;
  }

  ck.train.adam_config.lr = cfg.adam.lr;

  std::ostringstream rs;
  rs << rng;
  ck.rng_state = rs.str();
  ck.extra_json = json{{"seed", cfg.seed}, {"batch", cfg.batch}, {"crop_frames", cfg.crop_frames}}.dump();
  result.checkpoint = std::move(ck);
  result.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

TrainResult train_to_directory(const fs::path& dataset_dir, const fs::path& out_dir, const TrainRequest& req) {
  dsp::StftConfig stft = req.config.stft;
  if (req.checkpoint) stft = load_checkpoint(*req.checkpoint).stft;
  const auto data = load_training_set(dataset_dir, stft);
  fs::create_directories(out_dir);

  json config = json::parse(train_config_to_json(req.config));
  config["command"] = "train";
  config["phase"] = to_string(req.phase);
  config["dataset"] = fs::absolute(dataset_dir).string();
  config["checkpoint"] = req.checkpoint ? json(fs::absolute(*req.checkpoint).string()) : json(nullptr);
  config["allow_without_warmup"] = req.allow_without_warmup;
  write_text(out_dir / "config.json", config.dump(2) + "\n");

  const fs::path log_path = out_dir / "train_log.csv";
  const bool append = req.checkpoint && fs::exists(log_path) &&
                      load_checkpoint(*req.checkpoint).phase == to_string(req.phase);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path.string());
  if (!append) log << "step,loss,wallclock_s\n";
  const auto started = std::chrono::steady_clock::now();
  TrainResult r = train(data, req, [&](std::uint64_t step, double loss) {
    if (step % req.config.log_every != 0) return;
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    char line[96];
    std::snprintf(line, sizeof line, "%llu,%.9g,%.3f\n", static_cast<unsigned long long>(step), loss, t);
    log << line;
  });
  log.flush();
  if (!log) throw IoError("write failed for " + log_path.string());
  save_checkpoint(out_dir / "checkpoint.vfnc", r.checkpoint);
  return r;
}

// --- Separation ------------------------------------------------------------

const char* to_string(Reconstruction r) { return r == Reconstruction::kRatioMask ? "ratio-mask" : "direct"; }

Reconstruction reconstruction_from_string(const std::string& s) {
  if (s == "ratio-mask") return Reconstruction::kRatioMask;
  if (s == "direct") return Reconstruction::kDirect;
  throw ValidationError("unknown reconstruction '" + s + "' (expected ratio-mask or direct)");
}

std::array<dsp::Waveform, 3> separate(const dsp::Waveform& mixture, const flow::VisualStreams* visual,
                                      const Checkpoint& ckpt, const SeparateOptions& opt) {
  require(opt.steps >= 1, "separate: steps must be >= 1");
  dsp::validate(mixture);
  require(static_cast<std::size_t>(ckpt.stft.bins()) == ckpt.model.vfn.config.bins,
          "separate: checkpoint STFT geometry does not match its model");
  const dsp::Waveform w =
      mixture.sample_rate == dsp::kModelSampleRate ? mixture : dsp::resample_to_mono_16k(mixture);
  const dsp::StftConfig& cfg = ckpt.stft;
  const std::size_t lead = dsp::synthesis_padding(w.size(), cfg).lead;
  const dsp::ComplexSpectrogram spec = dsp::stft(dsp::pad_for_synthesis(w, cfg), cfg);
  const dsp::Spectrogram mag = dsp::log_magnitude(spec, dsp::kDefaultLogFloor, ckpt.normalization);

  std::mt19937_64 rng(opt.seed);
  const auto est = flow::euler_sample(mag, opt.use_visual ? visual : nullptr, ckpt.model, opt.steps, rng,
                                      padded_clock(cfg, w.sample_rate, lead, 0));
  for (const auto& e : est)
    for (double v : e.log_mag.values())
      if (!std::isfinite(v)) throw NumericError("separate: sampler produced a non-finite value");

  std::array<dsp::Spectrogram, 3> stems = est;
  if (opt.reconstruction == Reconstruction::kRatioMask) {
    const auto& m = mag.log_mag.values();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double top = std::max({est[0].log_mag.values()[i], est[1].log_mag.values()[i], est[2].log_mag.values()[i]});
      double z = 0.0;
      for (const auto& e : est) z += std::exp(e.log_mag.values()[i] - top);
      const double log_z = top + std::log(z);
      for (std::size_t k = 0; k < 3; ++k) stems[k].log_mag.values()[i] = m[i] + est[k].log_mag.values()[i] - log_z;
    }
  } else {
    // An estimate far above the loudest mixture bin is a failed sample; cap it
    // so resynthesis stays finite instead of overflowing the float output.
    const double ceiling =
        *std::max_element(mag.log_mag.values().begin(), mag.log_mag.values().end()) + kSeparationHeadroom;
    for (auto& s : stems)
      for (double& v : s.log_mag.values()) v = std::min(v, ceiling);
  }
  std::array<dsp::Waveform, 3> out;
  for (std::size_t k = 0; k < 3; ++k) out[k] = dsp::unpad(dsp::istft_with_phase(stems[k], spec), w.size(), cfg);
  return out;
}

void separate_directory(const fs::path& input, const Checkpoint& ckpt, const fs::path& out_dir,
                        const SeparateOptions& opt) {
  std::vector<fs::path> samples;
  if (fs::exists(input / "mix.wav"))
    samples.push_back(input);
  else
    samples = list_samples(input);
  require(!samples.empty(), "separate: no mix.wav under " + input.string());
  fs::create_directories(out_dir);
  for (const auto& dir : samples) {
    const dsp::Waveform mixture = dsp::read_wav(dir / "mix.wav");
    const auto visual = visual_from(maybe_fseq(dir / "features" / "facial.fseq"),
                                    maybe_fseq(dir / "features" / "scene.fseq"));
    const auto stems = separate(mixture, visual ? &*visual : nullptr, ckpt, opt);
    const fs::path target = out_dir / dir.filename();
    fs::create_directories(target);
    for (std::size_t k = 0; k < 3; ++k) dsp::write_wav(target / kStemFiles[k], stems[k]);
  }
  const json config = {{"command", "separate"},
                       {"input", fs::absolute(input).string()},
                       {"steps", opt.steps},
                       {"seed", opt.seed},
                       {"use_visual", opt.use_visual},
                       {"reconstruction", to_string(opt.reconstruction)},
                       {"checkpoint_phase", ckpt.phase},
                       {"checkpoint_step", ckpt.global_step}};
  write_text(out_dir / "config.json", config.dump(2) + "\n");
}

// --- Evaluation ------------------------------------------------------------

SampleScores score_sample(const std::string& name, const std::array<dsp::Waveform, 3>& estimates,
                          const std::array<dsp::Waveform, 3>* references, const dsp::Waveform* mixture,
                          const metrics::ClassGrouping& grouping,
                          const std::array<std::optional<metrics::ActivationMatrix>, 3>* activations) {
  SampleScores s;
  s.name = name;
  for (std::size_t k = 0; k < 3; ++k) {
    if (references != nullptr && mixture != nullptr)
      s.stems[k].si_sdri = metrics::si_sdri((*references)[k], estimates[k], *mixture);
    const metrics::ActivationMatrix act = activations != nullptr && (*activations)[k]
                                              ? *(*activations)[k]
                                              : metrics::heuristic_sed(estimates[k]);
    s.stems[k].wpr = metrics::wpr(act, grouping, kTargets[k]);
  }
  return s;
}

void summarize(EvalReport& r) {
  std::vector<double> avg_sdr, avg_wpr;
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> sdr, wp;
    for (const auto& s : r.samples) {
      if (s.stems[k].si_sdri) sdr.push_back(*s.stems[k].si_sdri);
      if (s.stems[k].wpr) wp.push_back(*s.stems[k].wpr);
    }
    r.mean_si_sdri[k] = mean_of(sdr);
    r.mean_wpr[k] = mean_of(wp);
    if (r.mean_si_sdri[k]) avg_sdr.push_back(*r.mean_si_sdri[k]);
    if (r.mean_wpr[k]) avg_wpr.push_back(*r.mean_wpr[k]);
  }
  r.average_si_sdri = mean_of(avg_sdr);
  r.average_wpr = mean_of(avg_wpr);
}

EvalReport evaluate(const EvalInputs& in) {
  if (!fs::is_directory(in.estimates)) throw IoError("estimate directory " + in.estimates.string() + " does not exist");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(in.estimates))
    if (e.is_directory() && fs::exists(e.path() / kStemFiles[0])) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());

  EvalReport r;
  const metrics::ClassGrouping grouping = in.grouping.value_or(metrics::ClassGrouping::identity());
  bool any_act = false, any_heuristic = false, missing_ref = false;
  std::array<std::vector<std::vector<double>>, 3> kl_p, kl_q;

  for (const auto& dir : dirs) {
    const std::string name = dir.filename().string();
    std::array<dsp::Waveform, 3> est;
    std::array<std::optional<metrics::ActivationMatrix>, 3> acts;
    for (std::size_t k = 0; k < 3; ++k) {
      est[k] = dsp::read_wav(dir / kStemFiles[k]);
      const fs::path act = dir / (std::string(kStemNames[k]) + ".act");
      if (fs::exists(act)) {
        acts[k] = metrics::read_act(act);
        any_act = true;
      } else {
        any_heuristic = true;
      }
    }
    std::optional<std::array<dsp::Waveform, 3>> refs;
    std::optional<dsp::Waveform> mixture;
    const fs::path ref_dir = in.refs ? *in.refs / name : fs::path();
    if (in.refs && fs::exists(ref_dir / "mix.wav")) {
      refs.emplace();
      for (std::size_t k = 0; k < 3; ++k) (*refs)[k] = dsp::read_wav(ref_dir / kStemFiles[k]);
      mixture = dsp::read_wav(ref_dir / "mix.wav");
    } else {
      missing_ref = true;
    }
    r.samples.push_back(score_sample(name, est, refs ? &*refs : nullptr, mixture ? &*mixture : nullptr, grouping, &acts));

    // Clip-level class distributions for KL: mean activation over frames, normalised.
    for (std::size_t k = 0; k < 3; ++k) {
      const fs::path ref_act = ref_dir / (std::string(kStemNames[k]) + ".act");
      if (!acts[k] || !in.refs || !fs::exists(ref_act)) continue;
      const metrics::ActivationMatrix q_act = metrics::read_act(ref_act);
      require(q_act.classes() == acts[k]->classes(), name + ": reference and estimate .act class counts differ");
      auto clip_dist = [](const metrics::ActivationMatrix& a) {
        std::vector<double> d(a.classes(), 0.0);
        for (std::size_t t = 0; t < a.frames(); ++t)
          for (std::size_t c = 0; c < a.classes(); ++c) d[c] += a.p(t, c);
        const double sum = std::accumulate(d.begin(), d.end(), 0.0);
        for (double& v : d) v = sum > 0.0 ? v / sum : 1.0 / static_cast<double>(d.size());
        return d;
      };
      kl_p[k].push_back(clip_dist(q_act));
      kl_q[k].push_back(clip_dist(*acts[k]));
    }
  }
  summarize(r);
  r.activation_source = any_act && any_heuristic ? "mixed" : any_act ? "act-files" : "heuristic";

  if (dirs.empty()) r.skipped.push_back("all: no estimate samples found");
  if (!in.refs)
    r.skipped.push_back("si_sdri: no reference directory");
  else if (missing_ref)
    r.skipped.push_back("si_sdri: some samples have no reference");
  for (std::size_t k = 0; k < 3; ++k) {
    const std::string emb = std::string(kStemNames[k]) + ".emb";
    if (in.refs && fs::exists(in.estimates / emb) && fs::exists(*in.refs / emb))
      r.frechet[k] = metrics::frechet_distance(metrics::read_emb(*in.refs / emb), metrics::read_emb(in.estimates / emb));
    else
      r.skipped.push_back(std::string("frechet ") + kStemLabels[k] + ": no embedding files");
    if (!kl_p[k].empty()) {
      Matrix p(kl_p[k].size(), kl_p[k][0].size()), q(p.rows(), p.cols());
      for (std::size_t i = 0; i < p.rows(); ++i) {
        std::copy(kl_p[k][i].begin(), kl_p[k][i].end(), p.row(i).begin());
        std::copy(kl_q[k][i].begin(), kl_q[k][i].end(), q.row(i).begin());
      }
      r.kl[k] = metrics::pairwise_kl(p, q);
    } else {
      r.skipped.push_back(std::string("kl ") + kStemLabels[k] + ": no paired .act files");
    }
  }
  return r;
}

std::string report_to_json(const EvalReport& r) {
  json j;
  j["activation_source"] = r.activation_source;
  j["samples"] = json::array();
  for (const auto& s : r.samples) {
    json row = {{"name", s.name}};
    for (std::size_t k = 0; k < 3; ++k)
      row["stems"][kStemLabels[k]] = {{"si_sdri", optional_json(s.stems[k].si_sdri)},
                                      {"wpr", optional_json(s.stems[k].wpr)}};
    j["samples"].push_back(row);
  }
  for (std::size_t k = 0; k < 3; ++k)
    j["per_stem"][kStemLabels[k]] = {{"si_sdri", optional_json(r.mean_si_sdri[k])},
                                     {"wpr", optional_json(r.mean_wpr[k])},
                                     {"frechet", optional_json(r.frechet[k])},
                                     {"kl", optional_json(r.kl[k])}};
  j["average"] = {{"si_sdri", optional_json(r.average_si_sdri)}, {"wpr", optional_json(r.average_wpr)}};
  j["skipped"] = r.skipped;
  return j.dump(2) + "\n";
}

std::string report_table(const EvalReport& r) {
  auto cell = [](const std::optional<double>& v) {
    char buf[32];
    if (v)
      std::snprintf(buf, sizeof buf, "%10.3f", *v);
    else
      std::snprintf(buf, sizeof buf, "%10s", "-");
    return std::string(buf);
  };
  std::ostringstream out;
  out << "samples: " << r.samples.size() << "  activations: " << r.activation_source << "\n";
  out << "stem      SI-SDRi        WPR    Frechet         KL\n";
  for (std::size_t k = 0; k < 3; ++k)
    out << kStemLabels[k] << "   " << cell(r.mean_si_sdri[k]) << " " << cell(r.mean_wpr[k]) << " "
        << cell(r.frechet[k]) << " " << cell(r.kl[k]) << "\n";
  out << "avg   " << cell(r.average_si_sdri) << " " << cell(r.average_wpr) << "\n";
  for (const auto& s : r.skipped) out << "skipped: " << s << "\n";
  return out.str();
}

}  // namespace cassforge::pipeline
