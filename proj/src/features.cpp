// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "cassforge/features.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace cassforge::cond {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'E', 'Q'};
constexpr std::uint32_t kVersion = 1;

void put32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get32(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ValidationError(path.string() + ": truncated .fseq");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

}  // namespace

const char* to_string(StreamKind kind) {
  switch (kind) {
    case StreamKind::kFacial: return "facial";
    case StreamKind::kScene: return "scene";
    case StreamKind::kFused: return "fused";
  }
  return "unknown";
}

double FeatureSequence::time_of(std::size_t i) const {
  if (kind == StreamKind::kFused) return row_times.at(i);
  return (static_cast<double>(i) + 0.5) / frame_rate;
}

void FeatureSequence::validate() const {
  for (double v : frames.values()) require(std::isfinite(v), "feature sequence has a non-finite entry");
  if (kind == StreamKind::kFused)
    require(row_times.size() == frames.rows(), "fused feature sequence needs one timestamp per row");
  else
    require(frame_rate > 0.0, "feature sequence frame rate must be positive");
}

void write_fseq(const std::filesystem::path& path, const FeatureSequence& f) {
  f.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, 4);
  put32(out, kVersion);
  put32(out, static_cast<std::uint32_t>(f.length()));
  put32(out, static_cast<std::uint32_t>(f.dim()));
  put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(f.frame_rate)));
  const auto kind = static_cast<char>(f.kind);
  out.write(&kind, 1);
  for (double v : f.frames.values()) put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw IoError("write failed for " + path.string());
}

FeatureSequence read_fseq(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw ValidationError(path.string() + ": bad .fseq magic");
  const std::uint32_t version = get32(in, path);
  require(version == kVersion, path.string() + ": unsupported .fseq version " + std::to_string(version));
  const std::uint32_t t = get32(in, path);
  const std::uint32_t d = get32(in, path);
  FeatureSequence f;
  f.frame_rate = std::bit_cast<float>(get32(in, path));
  char kind = 0;
  if (!in.read(&kind, 1)) throw ValidationError(path.string() + ": truncated .fseq");
  require(kind >= 0 && kind <= 2, path.string() + ": unknown stream kind");
  f.kind = static_cast<StreamKind>(kind);
  require(f.kind != StreamKind::kFused, path.string() + ": fused streams are not stored in .fseq files");
  f.frames = Matrix(t, d);
  for (double& v : f.frames.values()) v = std::bit_cast<float>(get32(in, path));
  f.validate();
  return f;
}

FeatureSequence crop(const FeatureSequence& f, double start_s, double length_s) {
  require(f.kind != StreamKind::kFused, "crop: fused sequences have no uniform frame rate");
  require(start_s >= 0.0 && length_s >= 0.0, "crop: negative start or length");
  const auto first = static_cast<std::size_t>(std::floor(start_s * f.frame_rate));
  const auto last = std::min<std::size_t>(f.length(), static_cast<std::size_t>(std::ceil((start_s + length_s) * f.frame_rate)));
  FeatureSequence out;
  out.frame_rate = f.frame_rate;
  out.kind = f.kind;
  const std::size_t rows = last > first ? last - first : 0;
  out.frames = Matrix(rows, f.dim());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < f.dim(); ++c) out.frames(r, c) = f.frames(first + r, c);
  return out;
}

FeatureSequence assemble_track(const std::vector<PlacedFeatures>& placements, double duration_s, double fps,
                               std::size_t dim, StreamKind kind) {
  require(fps > 0.0, "assemble_track: fps must be positive");
  FeatureSequence out;
  out.frame_rate = fps;
  out.kind = kind;
  const auto rows = static_cast<std::size_t>(std::lround(duration_s * fps));
  out.frames = Matrix(rows, dim);
  for (const PlacedFeatures& p : placements) {
    require(p.source != nullptr && p.source->dim() == dim, "assemble_track: feature dimension mismatch");
    if (p.source->length() == 0) continue;
    for (std::size_t r = 0; r < rows; ++r) {
      const double t = (static_cast<double>(r) + 0.5) / fps;
      if (t < p.placed_start_s || t >= p.placed_start_s + p.length_s) continue;
      const double src_t = t - p.placed_start_s + p.source_start_s;
      const auto src = std::min<std::size_t>(p.source->length() - 1,
                                             static_cast<std::size_t>(std::max(0.0, std::floor(src_t * p.source->frame_rate))));
      for (std::size_t c = 0; c < dim; ++c) out.frames(r, c) = p.source->frames(src, c);
    }
  }
  return out;
}

}  // namespace cassforge::cond
