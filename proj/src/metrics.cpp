// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "cassforge/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cassforge::metrics {

namespace {

void put32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get32(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ValidationError(path.string() + ": truncated file");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

void check_magic(std::istream& in, const std::filesystem::path& path, const char* magic) {
  char m[4];
  if (!in.read(m, 4) || std::memcmp(m, magic, 4) != 0)
    throw ValidationError(path.string() + ": expected magic " + std::string(magic, 4));
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
  return out;
}

/// Symmetric PSD square root; eigenvalues below -1e-8 are rejected, small negatives clamped.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-8)
      throw NumericError("frechet_distance: covariance product has eigenvalue " + std::to_string(ev(i)));
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double si_sdr(std::span<const float> x, std::span<const float> xh) {
  require(x.size() == xh.size(), "si_sdr: reference has " + std::to_string(x.size()) + " samples, estimate has " +
                                     std::to_string(xh.size()));
  require(!x.empty(), "si_sdr: empty signals");
  double xx = 0.0, xy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx += static_cast<double>(x[i]) * x[i];
    xy += static_cast<double>(x[i]) * xh[i];
  }
  const double eps = kSiSdrEpsilon;
  const double alpha = (xy + eps) / (xx + eps);
  double target = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = alpha * x[i];
    const double e = s - xh[i];
    target += s * s;
    noise += e * e;
  }
  return 10.0 * std::log10((target + eps) / (noise + eps));
}

double si_sdr(const dsp::Waveform& reference, const dsp::Waveform& estimate) {
  return si_sdr(std::span<const float>(reference.samples), std::span<const float>(estimate.samples));
}

double si_sdri(const dsp::Waveform& reference, const dsp::Waveform& estimate, const dsp::Waveform& mixture) {
  return si_sdr(reference, estimate) - si_sdr(reference, mixture);
}

const char* to_string(MainClass c) {
  switch (c) {
    case MainClass::kSpeech: return "speech";
    case MainClass::kEffects: return "effects";
    case MainClass::kMusic: return "music";
  }
  return "unknown";
}

MainClass main_class_from_string(const std::string& s) {
  if (s == "speech") return MainClass::kSpeech;
  if (s == "effects") return MainClass::kEffects;
  if (s == "music") return MainClass::kMusic;
  throw ValidationError("unknown main class '" + s + "' (expected speech, effects or music)");
}

void ActivationMatrix::validate() const {
  require(class_names.size() == p.cols(), "activation matrix: class name count does not match columns");
  require(frame_period > 0.0, "activation matrix: frame period must be positive");
  for (double v : p.values()) require(v >= 0.0 && v <= 1.0, "activation matrix: entries must lie in [0, 1]");
}

ClassGrouping ClassGrouping::identity() {
  ClassGrouping g;
  for (MainClass c : {MainClass::kSpeech, MainClass::kEffects, MainClass::kMusic}) g.groups[to_string(c)] = c;
  return g;
}

BinarizedActivations binarize_and_clean(const ActivationMatrix& a, double threshold, std::size_t min_run) {
  require(threshold > 0.0 && threshold < 1.0, "binarize: threshold must lie in (0, 1)");
  require(min_run >= 1, "binarize: min_run must be >= 1");
  const std::size_t T = a.frames(), C = a.classes();
  BinarizedActivations out{Matrix(T, C), Matrix(T, C)};
  for (std::size_t i = 0; i < a.p.size(); ++i) out.binary.values()[i] = a.p.values()[i] >= threshold ? 1.0 : 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t t = 0;
    while (t < T) {
      if (out.binary(t, c) == 0.0) {
        ++t;
        continue;
      }
      std::size_t end = t;
      while (end < T && out.binary(end, c) != 0.0) ++end;
      if (end - t >= min_run)
        for (std::size_t k = t; k < end; ++k) out.cleaned(k, c) = 1.0;
      t = end;
    }
  }
  return out;
}

std::optional<double> wpr(const ActivationMatrix& a, const ClassGrouping& grouping, MainClass target, double threshold,
                          std::size_t min_run) {
  a.validate();
  std::vector<MainClass> column_group(a.classes());
  for (std::size_t c = 0; c < a.classes(); ++c) {
    auto it = grouping.groups.find(a.class_names[c]);
    if (it == grouping.groups.end()) throw ValidationError("wpr: class '" + a.class_names[c] + "' has no main-class mapping");
    column_group[c] = it->second;
  }
  const BinarizedActivations b = binarize_and_clean(a, threshold, min_run);

  std::size_t non_silent = 0, misplaced = 0;
  for (std::size_t t = 0; t < a.frames(); ++t) {
    // Group collapse is a per-frame max, i.e. "any member active".
    std::array<bool, kNumMainClasses> active{}, persistent{};
    for (std::size_t c = 0; c < a.classes(); ++c) {
      const auto g = static_cast<std::size_t>(column_group[c]);
      active[g] = active[g] || b.binary(t, c) != 0.0;
      persistent[g] = persistent[g] || b.cleaned(t, c) != 0.0;
    }
    if (!(active[0] || active[1] || active[2])) continue;
    ++non_silent;
    bool wrong = false;
    for (std::size_t g = 0; g < kNumMainClasses; ++g)
      if (g != static_cast<std::size_t>(target) && persistent[g]) wrong = true;
    if (wrong) ++misplaced;
  }
  if (non_silent == 0) return std::nullopt;
  return static_cast<double>(misplaced) / static_cast<double>(non_silent);
}

void write_act(const std::filesystem::path& path, const ActivationMatrix& a) {
  a.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("ACTV", 4);
  put32(out, static_cast<std::uint32_t>(a.frames()));
  put32(out, static_cast<std::uint32_t>(a.classes()));
  put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(a.frame_period)));
  for (const std::string& name : a.class_names) out.write(name.c_str(), static_cast<std::streamsize>(name.size() + 1));
  for (double v : a.p.values()) put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw IoError("write failed for " + path.string());
}

ActivationMatrix read_act(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  check_magic(in, path, "ACTV");
  const std::uint32_t T = get32(in, path);
  const std::uint32_t C = get32(in, path);
  ActivationMatrix a;
  a.frame_period = std::bit_cast<float>(get32(in, path));
  for (std::uint32_t c = 0; c < C; ++c) {
    std::string name;
    if (!std::getline(in, name, '\0')) throw ValidationError(path.string() + ": truncated class names");
    a.class_names.push_back(name);
  }
  a.p = Matrix(T, C);
  for (double& v : a.p.values()) v = std::bit_cast<float>(get32(in, path));
  a.validate();
  return a;
}

ClassGrouping read_grouping_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty grouping file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "class_name,main_class", path.string() + ": header must be 'class_name,main_class'");
  ClassGrouping g;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    // Class names may contain commas (quoted); the main class never does.
    const auto comma = line.rfind(',');
    require(comma != std::string::npos, path.string() + ":" + std::to_string(lineno) + ": expected two fields");
    std::string name = line.substr(0, comma);
    if (name.size() >= 2 && name.front() == '"' && name.back() == '"') name = name.substr(1, name.size() - 2);
    g.groups[name] = main_class_from_string(line.substr(comma + 1));
  }
  return g;
}

void write_grouping_csv(const std::filesystem::path& path, const ClassGrouping& g) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "class_name,main_class\n";
  for (const auto& [name, cls] : g.groups) {
    if (name.find(',') != std::string::npos)
      out << '"' << name << '"';
    else
      out << name;
    out << ',' << to_string(cls) << '\n';
  }
}

void write_emb(const std::filesystem::path& path, const EmbeddingSet& e) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("EMBD", 4);
  put32(out, static_cast<std::uint32_t>(e.rows.rows()));
  put32(out, static_cast<std::uint32_t>(e.rows.cols()));
  for (double v : e.rows.values()) put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw IoError("write failed for " + path.string());
}

EmbeddingSet read_emb(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  check_magic(in, path, "EMBD");
  const std::uint32_t n = get32(in, path);
  const std::uint32_t d = get32(in, path);
  EmbeddingSet e{Matrix(n, d)};
  for (double& v : e.rows.values()) v = std::bit_cast<float>(get32(in, path));
  return e;
}

double frechet_distance(const EmbeddingSet& a, const EmbeddingSet& b) {
  require(a.rows.cols() == b.rows.cols(), "frechet_distance: embedding dimensions differ");
  require(a.rows.rows() >= 2 && b.rows.rows() >= 2, "frechet_distance: need at least two embeddings per set");
  for (const Matrix* m : {&a.rows, &b.rows})
    for (double v : m->values()) require(std::isfinite(v), "frechet_distance: non-finite embedding");

  auto moments = [](const Matrix& m) {
    const Eigen::MatrixXd x = to_eigen(m);
    const Eigen::VectorXd mu = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
    return std::pair{mu, cov};
  };
  const auto [mu_a, cov_a] = moments(a.rows);
  const auto [mu_b, cov_b] = moments(b.rows);

  // tr((S_a S_b)^{1/2}) = tr((S_a^{1/2} S_b S_a^{1/2})^{1/2}), which is symmetric.
  const Eigen::MatrixXd root_a = psd_sqrt(cov_a);
  const Eigen::MatrixXd inner = root_a * cov_b * root_a;
  const double cross = psd_sqrt(inner).trace();
  const double dist = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross;
  return std::max(dist, 0.0);
}

double pairwise_kl(const Matrix& p, const Matrix& q) {
  require(p.same_shape(q), "pairwise_kl: clip lists differ (" + std::to_string(p.rows()) + "x" +
                               std::to_string(p.cols()) + " vs " + std::to_string(q.rows()) + "x" +
                               std::to_string(q.cols()) + ")");
  require(p.rows() > 0, "pairwise_kl: no clips");
  for (const Matrix* m : {&p, &q})
    for (std::size_t r = 0; r < m->rows(); ++r) {
      double s = 0.0;
      for (double v : m->row(r)) {
        require(v >= 0.0, "pairwise_kl: negative probability");
        s += v;
      }
      require(std::abs(s - 1.0) <= 1e-6, "pairwise_kl: probability vector does not sum to 1 (row " +
                                             std::to_string(r) + ")");
    }
  double total = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double kl = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) {
      const double pi = std::max(p(r, c), kKlFloor);
      const double qi = std::max(q(r, c), kKlFloor);
      kl += pi * std::log(pi / qi);
    }
    total += kl;
  }
  return total / static_cast<double>(p.rows());
}

}  // namespace cassforge::metrics
