// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "cassforge/dsp.hpp"

namespace cassforge::dsp {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
std::uint16_t le16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
void put_tag(std::vector<unsigned char>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

void validate(const Waveform& w) {
  require(w.sample_rate > 0, "waveform sample rate must be positive");
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    if (!std::isfinite(w.samples[i]))
      throw ValidationError("waveform has a non-finite sample at index " + std::to_string(i));
}

Waveform mix_down(std::span<const float> interleaved, int channels, int sample_rate) {
  require(channels > 0, "channel count must be positive");
  require(interleaved.size() % static_cast<std::size_t>(channels) == 0,
          "interleaved buffer is not a whole number of frames");
  Waveform w;
  w.sample_rate = sample_rate;
  const std::size_t frames = interleaved.size() / channels;
  w.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double s = 0.0;
    for (int c = 0; c < channels; ++c) s += interleaved[f * channels + c];
    w.samples[f] = static_cast<float>(s / channels);
  }
  return w;
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw ValidationError(path.string() + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && std::memcmp(chunk, "data", 4) != 0)
      throw ValidationError(path.string() + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      require(size >= 16, path.string() + ": short fmt chunk");
      format = le16(bytes.data() + body);
      channels = le16(bytes.data() + body + 2);
      rate = le32(bytes.data() + body + 4);
      bits = le16(bytes.data() + body + 14);
      if (format == kFormatExtensible && size >= 26) format = le16(bytes.data() + body + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(size, bytes.size() - body);
    }
    pos = body + size + (size & 1u);
  }
  require(data != nullptr, path.string() + ": no data chunk");
  require(channels > 0 && rate > 0, path.string() + ": missing or invalid fmt chunk");

  std::vector<float> interleaved;
  if (format == kFormatPcm && bits == 16) {
    interleaved.resize(data_size / 2);
    for (std::size_t i = 0; i < interleaved.size(); ++i)
      interleaved[i] = static_cast<float>(static_cast<std::int16_t>(le16(data + 2 * i)) / 32768.0);
  } else if (format == kFormatFloat && bits == 32) {
    interleaved.resize(data_size / 4);
    for (std::size_t i = 0; i < interleaved.size(); ++i)
      interleaved[i] = std::bit_cast<float>(le32(data + 4 * i));
  } else {
    throw ValidationError(path.string() + ": unsupported WAV encoding (format " + std::to_string(format) +
                          ", " + std::to_string(bits) + " bits)");
  }
  interleaved.resize(interleaved.size() - interleaved.size() % channels);
  Waveform w = mix_down(interleaved, channels, static_cast<int>(rate));
  validate(w);
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w, WavEncoding encoding) {
  validate(w);
  const bool pcm = encoding == WavEncoding::kPcm16;
  const std::uint16_t bytes_per_sample = pcm ? 2 : 4;
  const std::uint32_t data_size = static_cast<std::uint32_t>(w.samples.size() * bytes_per_sample);

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, pcm ? kFormatPcm : kFormatFloat);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(w.sample_rate));
  put32(out, static_cast<std::uint32_t>(w.sample_rate) * bytes_per_sample);
  put16(out, bytes_per_sample);
  put16(out, static_cast<std::uint16_t>(bytes_per_sample * 8));
  put_tag(out, "data");
  put32(out, data_size);
  for (float s : w.samples) {
    if (pcm) {
      const double clipped = std::clamp(static_cast<double>(s), -1.0, 32767.0 / 32768.0);
      put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clipped * 32768.0))));
    } else {
      put32(out, std::bit_cast<std::uint32_t>(s));
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

}  // namespace cassforge::dsp
