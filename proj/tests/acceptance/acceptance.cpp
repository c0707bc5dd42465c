// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset. Exit status is non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "cassforge/flow.hpp"
#include "cassforge/kernels.hpp"
#include "cassforge/loudness.hpp"
#include "cassforge/metrics.hpp"
#include "cassforge/mixer.hpp"
#include "cassforge/pipeline.hpp"
#include "cassforge/toy.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"
#include "toy_experiment.hpp"
#include "wpr_oracle.hpp"

using namespace cassforge;
using cassforge::testing::check_gradients;
using cassforge::testing::GradCheckResult;
using cassforge::testing::PrefixView;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", id, title, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = n(rng);
  return m;
}

double weighted_sum(const Matrix& y, const Matrix& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * w.values()[i];
  return s;
}

template <class P>
void randomize_biases(P& p, std::mt19937_64& rng) {
  p.visit([&](const std::string& name, Matrix& m) {
    if (name.ends_with(".bias") || name.ends_with("_proj"))
      for (double& v : m.values()) v = std::normal_distribution<double>(0.0, 0.3)(rng);
  });
}

// --- 1 ---------------------------------------------------------------------

void gradient_fidelity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::size_t largest = 0;
  std::string detail;
  bool pass = true;
  auto note = [&](const char* what, const GradCheckResult& r, double limit) {
    pass = pass && r.worst_relative < limit && r.checked > 0;
    detail += fmt("%s %.1e (%zu) ", what, r.worst_relative, r.checked);
  };

  // Fusion, two layers per MLP.
  {
    cond::FusionConfig cfg{4, 4, 6, 5, 2, nn::Activation::kGelu};
    cond::FusionParams p = cond::FusionParams::init(cfg, rng);
    randomize_biases(p, rng);
    largest = std::max(largest, nn::parameter_count(p));
    const cond::FeatureSequence facial{random_matrix(9, 4, rng), cond::kFacialFps, cond::StreamKind::kFacial, {}};
    const cond::FeatureSequence scene{random_matrix(3, 4, rng), cond::kSceneFps, cond::StreamKind::kScene, {}};
    cond::FusionCache cache;
    const auto fused = cond::fuse(facial, scene, p, &cache);
    const Matrix w = random_matrix(fused.length(), fused.dim(), rng);
    auto g = cond::fuse_backward(w, cache, p);
    note("fusion", check_gradients(p, g.params, [&] { return weighted_sum(cond::fuse(facial, scene, p).frames, w); }),
         1e-4);
  }

  // Vector-field net: trunk, attention (gate open), gate (at zero).
  {
    vfn::VfnConfig cfg;
    cfg.bins = 9;
    cfg.time_taps = {-4, -1, 0, 1, 3};
    cfg.freq_taps = {-1, 2};
    cfg.hidden = 6;
    cfg.time_embed_dim = 4;
    cfg.freq_features = 3;
    cfg.cond_dim = 5;
    cfg.attn_dim = 3;
    vfn::VfnParams p = vfn::VfnParams::init(cfg, rng);
    randomize_biases(p, rng);
    largest = std::max(largest, nn::parameter_count(p));
    vfn::Stems3 x;
    for (auto& m : x) m = random_matrix(11, cfg.bins, rng);
    const Matrix s_A = random_matrix(11, cfg.bins, rng);
    std::array<Matrix, 3> w;
    for (auto& m : w) m = random_matrix(11, cfg.bins, rng);
    cond::FeatureSequence c_V{random_matrix(6, cfg.cond_dim, rng), 0.0, cond::StreamKind::kFused,
                              {0.0, 0.04, 0.08, 0.12, 0.05, 0.2}};
    const vfn::FrameClock clock{0.02, 0.01};
    auto loss = [&] {
      const auto u = vfn::forward({x, s_A, 0.37, &c_V, clock}, p);
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += weighted_sum(u[k], w[k]);
      return s;
    };
    auto grads = [&] {
      vfn::VfnCache cache;
      vfn::forward({x, s_A, 0.37, &c_V, clock}, p, &cache);
      return vfn::backward(w, cache, p);
    };
    auto check = [&](const char* what, std::vector<std::string> prefixes) {
      auto g = grads();
      PrefixView<vfn::VfnParams> pv{&p, prefixes}, gv{&g.params, prefixes};
      note(what, check_gradients(pv, gv, loss), 1e-4);
    };
    check("gate", {"vfn.attn.gate"});
    p.gate(0, 0) = 0.7;
    check("trunk", {"vfn.in", "vfn.time_proj", "vfn.freq_proj", "vfn.mid", "vfn.out"});
    check("attention", {"vfn.attn.q", "vfn.attn.k", "vfn.attn.v", "vfn.attn.o"});
  }

  // Full train-step composition: fusion -> attention -> trunk -> flow-matching loss.
  {
    cond::FusionConfig fcfg{4, 4, 4, 4, 1, nn::Activation::kGelu};
    vfn::VfnConfig vcfg;
    vcfg.bins = 7;
    vcfg.time_taps = {-3, -1, 0, 2};
    vcfg.freq_taps = {-1, 1};
    vcfg.hidden = 6;
    vcfg.time_embed_dim = 4;
    vcfg.freq_features = 2;
    vcfg.attn_dim = 3;
    Model model = Model::init(fcfg, vcfg, 5);
    randomize_biases(model, rng);
    model.vfn.gate(0, 0) = 0.6;
    largest = std::max(largest, nn::parameter_count(model));
    flow::TrainBatchItem item;
    item.s_A = random_matrix(10, 7, rng);
    for (auto& m : item.targets) m = random_matrix(10, 7, rng, 0.5);
    item.visual = flow::VisualStreams{{random_matrix(6, 4, rng), cond::kFacialFps, cond::StreamKind::kFacial, {}},
                                      {random_matrix(2, 4, rng), cond::kSceneFps, cond::StreamKind::kScene, {}}};
    item.clock = {0.025, 0.01};
    const double t = flow::sample_timestep(rng);
    const auto x0 = flow::gaussian_like(item.s_A, rng);
    Model grad = nn::zeros_like(model);
    flow::loss_for_draw(item, model, t, x0, true, &grad);
    note("composition", check_gradients(model, grad, [&] { return flow::loss_for_draw(item, model, t, x0, true, nullptr); }),
         1e-3);
  }

  const double elapsed = seconds_since(t0);
  pass = pass && largest <= 5000 && elapsed < 120.0;
  report(1, "gradient fidelity", pass, detail + fmt("| largest net %zu params, %.1f s", largest, elapsed));
}

// --- 2 ---------------------------------------------------------------------

void integrator_exactness() {
  std::mt19937_64 rng(202);
  const Matrix shape(40, 65);
  const auto x0 = flow::gaussian_like(shape, rng);
  auto x1 = flow::gaussian_like(shape, rng);
  for (auto& m : x1)
    for (double& v : m.values()) v = 3.0 * v + 1.0;
  const flow::VectorField field = [&](const flow::Stems3&, double) {
    flow::Stems3 u;
    for (std::size_t s = 0; s < 3; ++s) {
      u[s] = x1[s];
      for (std::size_t i = 0; i < u[s].size(); ++i) u[s].values()[i] -= x0[s].values()[i];
    }
    return u;
  };
  bool pass = true;
  std::string detail;
  for (int n : {1, 4, 128}) {
    const auto out = flow::euler_integrate(x0, n, field);
    double worst = 0.0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t i = 0; i < out[s].size(); ++i)
        worst = std::max(worst, std::abs(out[s].values()[i] - x1[s].values()[i]));
    pass = pass && worst < 1e-9;
    detail += fmt("N=%d max err %.1e  ", n, worst);
  }
  report(2, "integrator exactness", pass, detail);
}

// --- 3 ---------------------------------------------------------------------

void timestep_law() {
  std::mt19937_64 rng(303);
  const std::size_t n = 100000;
  std::vector<double> t(n);
  for (double& v : t) v = flow::sample_timestep(rng);
  std::sort(t.begin(), t.end());
  auto cdf = [](double x) { return 0.5 * std::erfc(-std::log(x / (1.0 - x)) / std::sqrt(2.0)); };
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = cdf(t[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  const double critical = 1.6276 / std::sqrt(static_cast<double>(n));
  const double median = t[n / 2];
  const double mass =
      static_cast<double>(std::count_if(t.begin(), t.end(), [](double v) { return v > 0.25 && v < 0.75; })) / n;
  const bool pass = d < critical && std::abs(median - 0.5) <= 0.02 && std::abs(mass - 0.728) <= 0.01;
  report(3, "timestep law", pass,
         fmt("KS D %.5f (critical %.5f), median %.4f, mass(0.25,0.75) %.4f", d, critical, median, mass));
}

// --- 4 ---------------------------------------------------------------------

void dsp_round_trip() {
  const dsp::StftConfig cfg;  // 1024 / 1024 / 256
  std::mt19937_64 rng(404);
  std::normal_distribution<double> n(0.0, 0.2);
  double worst = INFINITY;
  for (int i = 0; i < 10; ++i) {
    dsp::Waveform w;
    w.samples.resize(static_cast<std::size_t>(8.192 * dsp::kModelSampleRate));
    for (float& v : w.samples) v = static_cast<float>(n(rng));
    const auto spec = dsp::stft(dsp::pad_for_synthesis(w, cfg), cfg);
    const auto back = dsp::unpad(dsp::istft_with_phase(dsp::log_magnitude(spec), spec), w.size(), cfg);
    worst = std::min(worst, metrics::si_sdr(w, back));
  }
  std::size_t exact = 0;
  std::uniform_int_distribution<std::size_t> len(cfg.window_size, 131072);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t L = len(rng);
    const std::size_t formula =
        L < static_cast<std::size_t>(cfg.window_size) ? 0 : (L - cfg.window_size) / cfg.hop_size + 1;
    dsp::Waveform w;
    w.samples.assign(L, 0.0f);
    if (cfg.frames_for(L) == formula && dsp::stft(w, cfg).frames == formula) ++exact;
  }
  report(4, "dsp round trip", worst > 50.0 && exact == 1000,
         fmt("min SI-SDR %.1f dB over 10 x 8.192 s, frame formula exact %zu/1000", worst, exact));
}

// --- 5 ---------------------------------------------------------------------

void mastering_targets() {
  const auto t0 = Clock::now();
  const mix::Pools pools = toy::make_pools({24, 20.0, 5});
  const mix::MixRecipe recipe;  // 60 s, -27 LKFS, -2 dBTP ceiling
  const std::size_t count = 100;
  std::vector<double> lufs(count), peak(count);
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < static_cast<long>(count); ++k) {
    mix::MixRecipe r = recipe;
    r.rng_seed = mix::sample_seed(505, static_cast<std::uint64_t>(k));
    const mix::StemSet s = mix::synthesize_sample(pools, r);
    lufs[k] = mix::measure_loudness(s.mixture);
    peak[k] = mix::measure_true_peak(s.mixture);
  }
  const double mean = std::accumulate(lufs.begin(), lufs.end(), 0.0) / count;
  const double max_peak = *std::max_element(peak.begin(), peak.end());
  const double elapsed = seconds_since(t0);
  report(5, "mastering targets", std::abs(mean + 27.0) <= 0.5 && max_peak <= -1.9 && elapsed < 300.0,
         fmt("mean loudness %.3f LKFS, max true peak %.3f dBTP over %zu x 60 s, %.1f s", mean, max_peak, count, elapsed));
}

// --- 6 ---------------------------------------------------------------------

void metric_oracles() {
  std::mt19937_64 rng(606);
  std::size_t wpr_equal = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = std::uniform_int_distribution<std::size_t>(0, 500)(rng);
    const std::size_t C = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    const auto a = cassforge::testing::random_activations(rng, T, C);
    const auto g = cassforge::testing::random_grouping(rng, a);
    const auto target = static_cast<metrics::MainClass>(rng() % 3);
    const auto fast = metrics::wpr(a, g, target);
    const auto slow = cassforge::testing::wpr_oracle(a, g, target, 0.25, 50);
    if (fast.has_value() == slow.has_value() && (!fast || *fast == *slow)) ++wpr_equal;
  }

  const dsp::Waveform ref = cassforge::testing::noise(16000, 7);
  const dsp::Waveform other = cassforge::testing::noise(16000, 8);
  dsp::Waveform mixture = ref;
  for (std::size_t i = 0; i < mixture.size(); ++i) mixture.samples[i] += other.samples[i];
  const double sdri = metrics::si_sdri(ref, mixture, mixture);

  std::normal_distribution<double> d;
  const std::size_t n = 100000;
  metrics::EmbeddingSet ea{Matrix(n, 1)}, eb{Matrix(n, 1)};
  for (std::size_t i = 0; i < n; ++i) {
    ea.rows(i, 0) = d(rng);
    eb.rows(i, 0) = 1.0 + 2.0 * d(rng);
  }
  const double fd = metrics::frechet_distance(ea, eb);

  std::size_t kl_ok = 0;
  std::gamma_distribution<double> gamma(1.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Matrix p(1, 8), q(1, 8);
    double sp = 0.0, sq = 0.0;
    for (std::size_t c = 0; c < 8; ++c) {
      sp += p(0, c) = gamma(rng);
      sq += q(0, c) = gamma(rng);
    }
    for (std::size_t c = 0; c < 8; ++c) {
      p(0, c) /= sp;
      q(0, c) /= sq;
    }
    if (metrics::pairwise_kl(p, p) == 0.0 && metrics::pairwise_kl(p, q) >= 0.0) ++kl_ok;
  }
  const bool pass = wpr_equal == 1000 && sdri == 0.0 && std::abs(fd - 2.0) <= 0.05 && kl_ok == 1000;
  report(6, "metric oracles", pass,
         fmt("WPR matches oracle %zu/1000, SI-SDRi(mixture) %g, Frechet 1-d %.4f (closed form 2), KL ok %zu/1000",
             wpr_equal, sdri, fd, kl_ok));
}

// --- 7, 8, 9 ---------------------------------------------------------------

struct ToyPlan {
  std::size_t train_samples = 64;
  std::size_t test_samples = 32;
  double seconds = 2.0;
  std::uint64_t warmup_steps = 2000;
  std::uint64_t full_steps = 5000;
  std::uint64_t seed = 1;
};

void toy_end_to_end(bool run7, bool run8, bool run9) {
  const auto t0 = Clock::now();
  const ToyPlan plan;
  pipeline::TrainConfig cfg;
  cfg.seed = plan.seed;
  const auto set = cassforge::testing::make_toy_set(plan.train_samples, plan.test_samples, plan.seconds, cfg.stft, plan.seed);
  std::fprintf(stderr, "toy data ready (%.0f s)\n", seconds_since(t0));
  auto progress = [&](const char* phase) {
    return [&, phase](std::uint64_t step, double loss) {
      if (step % 500 == 0) std::fprintf(stderr, "  %s step %llu loss %.4f (%.0f s)\n", phase,
                                        static_cast<unsigned long long>(step), loss, seconds_since(t0));
    };
  };

  pipeline::TrainRequest warm_req;
  warm_req.config = cfg;
  warm_req.config.steps = plan.warmup_steps;
  const auto warm = pipeline::train(set.train, warm_req, progress("warmup"));

  if (run8) {
    // Full phase step 0: the warm-up weights with the gate closed, one batch,
    // identical draws with and without the visual streams.
    pipeline::TrainRequest probe;
    probe.phase = pipeline::Phase::kFull;
    probe.config = cfg;
    probe.config.steps = 0;
    probe.start = warm.checkpoint;
    const Checkpoint full0 = pipeline::train(set.train, probe).checkpoint;
    std::mt19937_64 crop_rng(808);
    std::vector<flow::TrainBatchItem> batch;
    for (std::size_t i = 0; i < cfg.batch; ++i)
      batch.push_back(pipeline::crop_item(set.train[i], full0.normalization, cfg.crop_frames, crop_rng));
    Model with = full0.model, without = full0.model;
    TrainState sw = full0.train, so = full0.train;
    std::mt19937_64 rw(809), ro(809);
    const double lw = flow::train_step(batch, with, sw, rw, true, 0).loss;
    const double lo = flow::train_step(batch, without, so, ro, false, 0).loss;
    report(8, "zero-gate preservation", lw == lo && full0.model.vfn.gate(0, 0) == 0.0,
           fmt("step-0 loss with visual %.17g, without %.17g, bitwise %s", lw, lo, lw == lo ? "equal" : "different"));
  }
  if (!run7 && !run9) return;

  pipeline::TrainRequest full_req;
  full_req.phase = pipeline::Phase::kFull;
  full_req.config = cfg;
  full_req.config.steps = plan.full_steps;
  full_req.start = warm.checkpoint;
  const auto full = pipeline::train(set.train, full_req, progress("full"));

  const auto pass_rep = cassforge::testing::evaluate_model(set.test, nullptr, 0, false, 0);
  const auto av128 = cassforge::testing::evaluate_model(set.test, &full.checkpoint, 128, true, 9000);
  std::fprintf(stderr, "  evaluated N=128 (%.0f s)\n", seconds_since(t0));

  if (run7) {
    // Audio-only comparison run: the warm-up continued for the same number of steps.
    pipeline::TrainRequest audio_req;
    audio_req.config = cfg;
    audio_req.config.steps = plan.warmup_steps + plan.full_steps;
    audio_req.start = warm.checkpoint;
    const auto audio = pipeline::train(set.train, audio_req, progress("audio-only"));
    const auto ao128 = cassforge::testing::evaluate_model(set.test, &audio.checkpoint, 128, false, 9000);
    const double elapsed = seconds_since(t0);

    Model trained = full.checkpoint.model;
    const std::size_t params = nn::parameter_count(trained);
    const double gain = *av128.average_si_sdri - *pass_rep.average_si_sdri;
    const bool pass = gain > 3.0 && *av128.average_wpr < *pass_rep.average_wpr &&
                      *av128.mean_wpr[1] <= *ao128.mean_wpr[1] && params <= 5000 && elapsed < 1800.0;
    report(7, "toy end-to-end", pass,
           fmt("SI-SDRi %.2f dB (DX %.2f FX %.2f MX %.2f) vs passthrough %.2f; WPR %.3f vs passthrough %.3f; "
               "FX WPR audio-visual %.3f vs audio-only %.3f; %zu params; %.0f s",
               *av128.average_si_sdri, *av128.mean_si_sdri[0], *av128.mean_si_sdri[1], *av128.mean_si_sdri[2],
               *pass_rep.average_si_sdri, *av128.average_wpr, *pass_rep.average_wpr, *av128.mean_wpr[1],
               *ao128.mean_wpr[1], params, elapsed));
  }
  if (run9) {
    const auto av4 = cassforge::testing::evaluate_model(set.test, &full.checkpoint, 4, true, 9000);
    report(9, "sampling-step trend", *av128.average_si_sdri >= *av4.average_si_sdri,
           fmt("mean SI-SDRi N=128 %.2f dB, N=4 %.2f dB", *av128.average_si_sdri, *av4.average_si_sdri));
  }
}

}  // namespace

int main(int argc, char** argv) {
  kernels::apply_thread_limit_from_env();
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto want = [&](int id) { return only.empty() || only.count(id) > 0; };

  if (want(1)) gradient_fidelity();
  if (want(2)) integrator_exactness();
  if (want(3)) timestep_law();
  if (want(4)) dsp_round_trip();
  if (want(5)) mastering_targets();
  if (want(6)) metric_oracles();
  if (want(7) || want(8) || want(9)) toy_end_to_end(want(7), want(8), want(9));
  std::printf("%s: %d failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
