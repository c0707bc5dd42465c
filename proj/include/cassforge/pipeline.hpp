// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end steps behind the command-line tool: dataset synthesis, the
// two-phase training loop, separation of a mixture, and evaluation reports.
// Every step writes a config.json next to its outputs.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cassforge/flow.hpp"
#include "cassforge/metrics.hpp"
#include "cassforge/mixer.hpp"
#include "cassforge/model.hpp"

namespace cassforge::pipeline {

// --- Synthesis -------------------------------------------------------------

struct SynthSummary {
  std::size_t count = 0;
  std::vector<double> mixture_loudness;
  std::vector<double> mixture_true_peak;
  std::array<std::vector<double>, 3> stem_loudness;
  std::array<std::vector<double>, 3> stem_true_peak;
  std::size_t peak_limited = 0;
};

/// Writes <out>/sample_NNNNN/ for k = 0..count-1 with recipe seed
/// sample_seed(seed, k), plus summary.json and config.json. `pools_source`
/// is recorded in config.json when non-empty.
SynthSummary synthesize_dataset(const mix::Pools& pools, const mix::MixRecipe& recipe,
                                const std::filesystem::path& out_dir, std::size_t count, std::uint64_t seed,
                                const std::string& pools_source = {});

/// Sample directories (those containing mix.wav) in lexicographic order.
std::vector<std::filesystem::path> list_samples(const std::filesystem::path& dataset_dir);

// --- Training --------------------------------------------------------------

struct TrainConfig {
  dsp::StftConfig stft{256, 256, 128};
  cond::FusionConfig fusion{4, 4, 8, 8, 1, nn::Activation::kGelu};
  vfn::VfnConfig vfn = default_vfn();
  AdamConfig adam{2e-3, 0.9, 0.999, 1e-8};
  /// Cosine decay from adam.lr at step 0 to lr_final_fraction * adam.lr at
  /// `steps`; 1 keeps the rate constant.
  double lr_final_fraction = 1.0;
  std::size_t batch = 2;
  std::size_t crop_frames = 96;
  std::uint64_t steps = 1000;
  std::uint64_t seed = 0;
  std::uint64_t log_every = 1;

  static vfn::VfnConfig default_vfn();
};

/// Learning rate used for the update at `step` (0-based) of a phase.
double scheduled_lr(const TrainConfig& c, std::uint64_t step);

std::string train_config_to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const std::string& text, TrainConfig base = {});

/// Training example held in memory: padded log-magnitude spectrograms and the
/// sample's visual streams on the original timeline.
struct TrainSample {
  dsp::Spectrogram mixture;
  std::array<dsp::Spectrogram, 3> stems;
  std::optional<flow::VisualStreams> visual;
  std::size_t lead = 0;  // synthesis padding in samples
};

TrainSample prepare_sample(const mix::LoadedSample& s, const dsp::StftConfig& cfg);
std::vector<TrainSample> load_training_set(const std::filesystem::path& dataset_dir, const dsp::StftConfig& cfg);

/// Random crop of crop_frames frames (the whole sample if shorter), normalised,
/// with the clock placing frames on the original timeline.
flow::TrainBatchItem crop_item(const TrainSample& s, const dsp::Normalization& norm, std::size_t crop_frames,
                               std::mt19937_64& rng);

enum class Phase { kWarmup, kFull };
const char* to_string(Phase p);
Phase phase_from_string(const std::string& s);

struct TrainRequest {
  Phase phase = Phase::kWarmup;
  TrainConfig config;
  /// Warm-up checkpoint to start the full phase from, or a checkpoint of the
  /// same phase to resume (training continues to config.steps in total).
  std::optional<std::filesystem::path> checkpoint;
  /// In-memory alternative to `checkpoint`; takes precedence when set.
  std::optional<Checkpoint> start;
  /// Lets the full phase start from a fresh model.
  bool allow_without_warmup = false;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> losses;  // this invocation only
  double wallclock_s = 0.0;
};

/// Progress callback: (global step, loss).
using TrainObserver = std::function<void(std::uint64_t, double)>;

/// Runs in memory; writes nothing.
TrainResult train(const std::vector<TrainSample>& data, const TrainRequest& req, const TrainObserver& observer = {});

/// train() plus <out>/config.json, <out>/train_log.csv and <out>/checkpoint.vfnc.
TrainResult train_to_directory(const std::filesystem::path& dataset_dir, const std::filesystem::path& out_dir,
                               const TrainRequest& req);

// --- Separation ------------------------------------------------------------

/// How sampled magnitudes become stem spectrograms.
///  kRatioMask: each stem takes the mixture magnitude scaled by its share
///              exp(s_k) / sum_j exp(s_j) of the three estimates, so the stems
///              never exceed the mixture and their magnitudes add up to it.
///  kDirect:    the estimates are used as they are, capped kSeparationHeadroom
///              above the loudest mixture bin.
enum class Reconstruction { kRatioMask, kDirect };
const char* to_string(Reconstruction r);
Reconstruction reconstruction_from_string(const std::string& s);

struct SeparateOptions {
  int steps = 128;
  std::uint64_t seed = 0;
  bool use_visual = true;  // ignored when no streams are given
  Reconstruction reconstruction = Reconstruction::kRatioMask;
};

/// Cap for kDirect: ln 4, about 12 dB above the loudest mixture bin.
inline constexpr double kSeparationHeadroom = 1.3862943611198906;

/// Pads the mixture, samples the three stem spectrograms and resynthesises each
/// with the mixture phase. Output stems have the mixture's length.
std::array<dsp::Waveform, 3> separate(const dsp::Waveform& mixture, const flow::VisualStreams* visual,
                                      const Checkpoint& ckpt, const SeparateOptions& opt);

/// Separates every sample under `input` (a dataset or a single sample dir)
/// into <out>/<sample>/{dx,fx,mx}.wav.
void separate_directory(const std::filesystem::path& input, const Checkpoint& ckpt,
                        const std::filesystem::path& out_dir, const SeparateOptions& opt);

// --- Evaluation ------------------------------------------------------------

struct StemScores {
  std::optional<double> si_sdri;
  std::optional<double> wpr;
};

struct SampleScores {
  std::string name;
  std::array<StemScores, 3> stems;
};

struct EvalReport {
  std::vector<SampleScores> samples;
  std::array<std::optional<double>, 3> mean_si_sdri;
  std::array<std::optional<double>, 3> mean_wpr;
  std::optional<double> average_si_sdri;
  std::optional<double> average_wpr;
  std::array<std::optional<double>, 3> frechet;
  std::array<std::optional<double>, 3> kl;
  std::vector<std::string> skipped;
  std::string activation_source;  // "act-files", "heuristic" or "mixed"
};

struct EvalInputs {
  std::filesystem::path estimates;            // <est>/<sample>/{dx,fx,mx}.wav
  std::optional<std::filesystem::path> refs;  // <ref>/<sample>/{mix,dx,fx,mx}.wav
  std::optional<metrics::ClassGrouping> grouping;
};

/// Activations come from <est>/<sample>/<stem>.act when present, otherwise the
/// built-in heuristic tagger runs on the estimate. Fréchet distance uses
/// <est>/<stem>.emb against <ref>/<stem>.emb. KL compares per-clip class
/// distributions (frame-averaged activations, normalised) from paired
/// <est>/<sample>/<stem>.act and <ref>/<sample>/<stem>.act files.
EvalReport evaluate(const EvalInputs& in);

/// Scores stems already in memory (the acceptance path uses this directly).
/// Missing activations are computed with the heuristic tagger.
SampleScores score_sample(const std::string& name, const std::array<dsp::Waveform, 3>& estimates,
                          const std::array<dsp::Waveform, 3>* references, const dsp::Waveform* mixture,
                          const metrics::ClassGrouping& grouping,
                          const std::array<std::optional<metrics::ActivationMatrix>, 3>* activations = nullptr);

/// Fills the means from the per-sample rows.
void summarize(EvalReport& r);

std::string report_to_json(const EvalReport& r);
std::string report_table(const EvalReport& r);

}  // namespace cassforge::pipeline
