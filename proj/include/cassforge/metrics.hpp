// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// Separation metrics: SI-SDR / SI-SDRi, Wrong Placement Ratio over frame-wise
// class activations, Frechet distance between embedding sets, and mean
// pairwise KL between class-probability vectors. File formats for external
// model outputs (.act, .emb, grouping CSV) live here too.

#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cassforge/dsp.hpp"

namespace cassforge::metrics {

inline constexpr double kSiSdrEpsilon = 9.76562e-4;

/// 10 log10((|a x|^2 + eps) / (|a x - x_hat|^2 + eps)), a = (x.x_hat + eps) / (|x|^2 + eps).
double si_sdr(std::span<const float> reference, std::span<const float> estimate);
double si_sdr(const dsp::Waveform& reference, const dsp::Waveform& estimate);
/// si_sdr(x, x_hat) - si_sdr(x, mixture).
double si_sdri(const dsp::Waveform& reference, const dsp::Waveform& estimate, const dsp::Waveform& mixture);

// --- Activations and WPR --------------------------------------------------

enum class MainClass : std::uint8_t { kSpeech = 0, kEffects = 1, kMusic = 2 };
inline constexpr std::size_t kNumMainClasses = 3;

const char* to_string(MainClass c);
MainClass main_class_from_string(const std::string& s);

/// Frame-wise class activity (T x C), probabilities or 0/1.
struct ActivationMatrix {
  Matrix p;
  double frame_period = 0.01;
  std::vector<std::string> class_names;

  std::size_t frames() const { return p.rows(); }
  std::size_t classes() const { return p.cols(); }
  void validate() const;
};

/// Fine class name -> main class.
struct ClassGrouping {
  std::map<std::string, MainClass> groups;

  /// The identity grouping for the three main classes themselves.
  static ClassGrouping identity();
};

struct BinarizedActivations {
  Matrix binary;   // [p >= threshold]
  Matrix cleaned;  // binary with runs shorter than min_run removed, per class
};

BinarizedActivations binarize_and_clean(const ActivationMatrix& a, double threshold = 0.25, std::size_t min_run = 50);

/// Fraction of non-silent frames (any group active in the thresholded matrix)
/// in which some non-target group is active in the run-cleaned matrix.
/// Returns nullopt when the track has no non-silent frame.
std::optional<double> wpr(const ActivationMatrix& a, const ClassGrouping& grouping, MainClass target,
                          double threshold = 0.25, std::size_t min_run = 50);

void write_act(const std::filesystem::path& path, const ActivationMatrix& a);
ActivationMatrix read_act(const std::filesystem::path& path);
ClassGrouping read_grouping_csv(const std::filesystem::path& path);
void write_grouping_csv(const std::filesystem::path& path, const ClassGrouping& g);

// --- Distribution metrics -------------------------------------------------

/// One embedding per row.
struct EmbeddingSet {
  Matrix rows;
};

void write_emb(const std::filesystem::path& path, const EmbeddingSet& e);
EmbeddingSet read_emb(const std::filesystem::path& path);

/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}) with unbiased covariances.
double frechet_distance(const EmbeddingSet& a, const EmbeddingSet& b);

inline constexpr double kKlFloor = 1e-10;

/// Mean over rows of sum_i p_i ln(p_i / q_i), with both sides floored.
double pairwise_kl(const Matrix& p, const Matrix& q);

}  // namespace cassforge::metrics
