// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// cassforge: synthesize mixtures, train the separator, separate, evaluate.
//
// Exit codes: 0 success, 2 validation error, 3 numeric abort, 4 I/O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cassforge/kernels.hpp"
#include "cassforge/pipeline.hpp"
#include "cassforge/toy.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace cassforge;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed for " + p.string());
}

std::string sweep_dir(int steps) { return "N" + std::to_string(steps); }

}  // namespace

int main(int argc, char** argv) {
  kernels::apply_thread_limit_from_env();

  CLI::App app{"Cinematic audio source separation: mixture synthesis, training, separation, evaluation"};
  app.require_subcommand(1);

  // toy-pools
  auto* toy_cmd = app.add_subcommand("toy-pools", "Write synthetic DX/FX/MX clip pools and a short-mixture recipe");
  fs::path toy_out;
  std::uint64_t toy_seed = 1;
  std::size_t toy_clips = 24;
  double toy_seconds = 20.0;
  double toy_mix_seconds = 2.0;
  toy_cmd->add_option("--out", toy_out, "Output directory")->required();
  toy_cmd->add_option("--seed", toy_seed, "Clip generator seed");
  toy_cmd->add_option("--count", toy_clips, "Clips per stem");
  toy_cmd->add_option("--clip-seconds", toy_seconds, "Length of each clip");
  toy_cmd->add_option("--mix-seconds", toy_mix_seconds, "Duration written into recipe_short.json");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Synthesize a dataset of mixtures and stems");
  fs::path synth_recipe, synth_pools, synth_out;
  std::size_t synth_count = 1;
  std::uint64_t synth_seed = 0;
  synth_cmd->add_option("--recipe", synth_recipe, "Mix recipe JSON (defaults apply when omitted)");
  synth_cmd->add_option("--pools", synth_pools, "Pools JSON")->required();
  synth_cmd->add_option("--out", synth_out, "Output dataset directory")->required();
  synth_cmd->add_option("--count", synth_count, "Number of samples");
  synth_cmd->add_option("--seed", synth_seed, "Base seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train (warm-up or full phase)");
  fs::path train_data, train_out, train_ckpt, train_config;
  std::string train_phase = "warmup";
  std::uint64_t train_steps = 0, train_seed = 0;
  bool train_override = false;
  train_cmd->add_option("dataset", train_data, "Dataset directory written by synth")->required();
  train_cmd->add_option("--out", train_out, "Run directory")->required();
  train_cmd->add_option("--phase", train_phase, "warmup or full")->check(CLI::IsMember({"warmup", "full"}));
  train_cmd->add_option("--steps", train_steps, "Total optimiser steps for this phase");
  train_cmd->add_option("--seed", train_seed, "Seed for init, crops, timesteps and noise");
  train_cmd->add_option("--checkpoint", train_ckpt,
                        "Warm-up checkpoint (full phase) or a checkpoint of the same phase to resume");
  train_cmd->add_option("--config", train_config, "Training config JSON (hyperparameters)");
  train_cmd->add_flag("--allow-without-warmup", train_override, "Start the full phase from a fresh model");

  // separate
  auto* sep_cmd = app.add_subcommand("separate", "Separate mixtures into DX, FX and MX");
  fs::path sep_input, sep_ckpt, sep_out;
  int sep_steps = 128;
  std::uint64_t sep_seed = 0;
  bool sep_audio_only = false;
  std::vector<int> sep_sweep;
  std::string sep_recon = "ratio-mask";
  sep_cmd->add_option("input", sep_input, "Dataset directory or a sample directory with mix.wav")->required();
  sep_cmd->add_option("--checkpoint", sep_ckpt, "Checkpoint file")->required();
  sep_cmd->add_option("--out", sep_out, "Output directory")->required();
  sep_cmd->add_option("--steps", sep_steps, "Euler steps");
  sep_cmd->add_option("--seed", sep_seed, "Noise seed");
  sep_cmd->add_flag("--audio-only", sep_audio_only, "Ignore visual feature files");
  sep_cmd->add_option("--reconstruction", sep_recon, "ratio-mask (default) or direct")
      ->check(CLI::IsMember({"ratio-mask", "direct"}));
  sep_cmd->add_option("--sweep", sep_sweep, "Step counts; writes <out>/N<steps>/ for each")->delimiter(',');

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score separated stems");
  fs::path eval_est, eval_ref, eval_grouping, eval_report;
  bool eval_sweep = false;
  eval_cmd->add_option("estimates", eval_est, "Directory of <sample>/{dx,fx,mx}.wav")->required();
  eval_cmd->add_option("--ref", eval_ref, "Reference dataset directory");
  eval_cmd->add_option("--grouping", eval_grouping, "class_name,main_class CSV for .act files");
  eval_cmd->add_option("--report", eval_report, "JSON report path")->required();
  eval_cmd->add_flag("--sweep", eval_sweep, "Evaluate every N<steps>/ subdirectory (from separate --sweep)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (toy_cmd->parsed()) {
      fs::create_directories(toy_out);
      toy::write_pools(toy_out, toy::make_pools({toy_clips, toy_seconds, toy_seed}));
      write_file(toy_out / "recipe_short.json", mix::recipe_to_json(toy::short_recipe(toy_mix_seconds)) + "\n");
      std::printf("wrote %s and %s\n", (toy_out / "pools.json").c_str(), (toy_out / "recipe_short.json").c_str());
    } else if (synth_cmd->parsed()) {
      const mix::MixRecipe recipe = synth_recipe.empty() ? mix::MixRecipe{} : mix::load_recipe(synth_recipe);
      const mix::Pools pools = mix::load_pools(synth_pools);
      const auto s = pipeline::synthesize_dataset(pools, recipe, synth_out, synth_count, synth_seed,
                                                  fs::absolute(synth_pools).string());
      std::printf("wrote %zu samples to %s (%zu peak-limited)\n", s.count, synth_out.c_str(), s.peak_limited);
    } else if (train_cmd->parsed()) {
      pipeline::TrainRequest req;
      req.phase = pipeline::phase_from_string(train_phase);
      if (!train_config.empty()) req.config = pipeline::train_config_from_json(read_file(train_config));
      if (train_steps > 0) req.config.steps = train_steps;
      if (train_cmd->count("--seed") > 0) req.config.seed = train_seed;
      if (!train_ckpt.empty()) req.checkpoint = train_ckpt;
      req.allow_without_warmup = train_override;
      const auto r = pipeline::train_to_directory(train_data, train_out, req);
      std::printf("%s phase: %zu steps in %.1f s, final loss %.5f, checkpoint %s\n", train_phase.c_str(),
                  r.losses.size(), r.wallclock_s, r.losses.empty() ? 0.0 : r.losses.back(),
                  (train_out / "checkpoint.vfnc").c_str());
    } else if (sep_cmd->parsed()) {
      const Checkpoint ckpt = load_checkpoint(sep_ckpt);
      pipeline::SeparateOptions opt{sep_steps, sep_seed, !sep_audio_only,
                                    pipeline::reconstruction_from_string(sep_recon)};
      if (sep_sweep.empty()) {
        pipeline::separate_directory(sep_input, ckpt, sep_out, opt);
      } else {
        for (int n : sep_sweep) {
          opt.steps = n;
          pipeline::separate_directory(sep_input, ckpt, sep_out / sweep_dir(n), opt);
        }
      }
      std::printf("wrote stems under %s\n", sep_out.c_str());
    } else if (eval_cmd->parsed()) {
      pipeline::EvalInputs in;
      if (!eval_ref.empty()) in.refs = eval_ref;
      if (!eval_grouping.empty()) in.grouping = metrics::read_grouping_csv(eval_grouping);
      if (!eval_sweep) {
        in.estimates = eval_est;
        const auto report = pipeline::evaluate(in);
        write_file(eval_report, pipeline::report_to_json(report));
        std::cout << pipeline::report_table(report);
      } else {
        std::vector<std::pair<int, fs::path>> dirs;
        for (const auto& e : fs::directory_iterator(eval_est)) {
          const std::string name = e.path().filename().string();
          if (e.is_directory() && name.size() > 1 && name[0] == 'N' &&
              name.find_first_not_of("0123456789", 1) == std::string::npos)
            dirs.emplace_back(std::stoi(name.substr(1)), e.path());
        }
        require(!dirs.empty(), "eval --sweep: no N<steps> directories under " + eval_est.string());
        std::sort(dirs.begin(), dirs.end());
        nlohmann::json sweep = nlohmann::json::array();
        std::printf("%6s %10s %10s\n", "steps", "SI-SDRi", "WPR");
        for (const auto& [n, dir] : dirs) {
          in.estimates = dir;
          const auto report = pipeline::evaluate(in);
          nlohmann::json row = nlohmann::json::parse(pipeline::report_to_json(report));
          row["steps"] = n;
          sweep.push_back(row);
          std::printf("%6d %10.3f %10.3f\n", n, report.average_si_sdri.value_or(NAN), report.average_wpr.value_or(NAN));
        }
        write_file(eval_report, nlohmann::json{{"sweep", sweep}}.dump(2) + "\n");
      }
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  }
  return 0;
}
