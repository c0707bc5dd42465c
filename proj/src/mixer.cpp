// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "cassforge/mixer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "cassforge/errors.hpp"
#include "cassforge/loudness.hpp"

namespace cassforge::mix {

using nlohmann::json;

namespace {

constexpr int kSr = dsp::kModelSampleRate;

std::size_t to_samples(double seconds) { return static_cast<std::size_t>(std::llround(seconds * kSr)); }
double to_seconds(std::size_t samples) { return static_cast<double>(samples) / kSr; }

cond::StreamKind expected_feature_kind(StemKind s) {
  return s == StemKind::kDX ? cond::StreamKind::kFacial : cond::StreamKind::kScene;
}

std::string stem_file(StemKind s) {
  switch (s) {
    case StemKind::kDX: return "dx.wav";
    case StemKind::kFX: return "fx.wav";
    case StemKind::kMX: return "mx.wav";
  }
  return "";
}

}  // namespace

const char* to_string(StemKind s) {
  switch (s) {
    case StemKind::kDX: return "DX";
    case StemKind::kFX: return "FX";
    case StemKind::kMX: return "MX";
  }
  return "?";
}

StemKind stem_from_string(const std::string& s) {
  if (s == "DX") return StemKind::kDX;
  if (s == "FX") return StemKind::kFX;
  if (s == "MX") return StemKind::kMX;
  throw ValidationError("unknown stem '" + s + "' (expected DX, FX or MX)");
}

void ClipPool::validate() const {
  std::set<std::string> ids;
  for (const Clip& c : clips) {
    require(ids.insert(c.id).second, std::string(to_string(kind)) + " pool: duplicate clip id '" + c.id + "'");
    require(c.audio.sample_rate == kSr, std::string(to_string(kind)) + " pool: clip '" + c.id + "' is not 16 kHz");
    require(!c.audio.samples.empty(), std::string(to_string(kind)) + " pool: clip '" + c.id + "' is empty");
    if (c.features) {
      require(kind != StemKind::kMX, "MX pool: clip '" + c.id + "' carries features; music has no visual stream");
      require(c.features->kind == expected_feature_kind(kind),
              std::string(to_string(kind)) + " pool: clip '" + c.id + "' has " + cond::to_string(c.features->kind) +
                  " features");
      c.features->validate();
    }
  }
}

std::vector<const Clip*> ClipPool::accepted() const {
  std::vector<const Clip*> out;
  for (const Clip& c : clips)
    if (!reject.contains(c.id)) out.push_back(&c);
  return out;
}

const ClipPool& Pools::operator[](StemKind s) const {
  switch (s) {
    case StemKind::kDX: return dx;
    case StemKind::kFX: return fx;
    case StemKind::kMX: return mx;
  }
  return dx;
}

Pools load_pools(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pools file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  std::set<std::string> reject;
  if (j.contains("reject"))
    for (const auto& id : j.at("reject")) reject.insert(id.get<std::string>());

  Pools pools;
  for (StemKind s : kAllStems) {
    ClipPool& pool = s == StemKind::kDX ? pools.dx : s == StemKind::kFX ? pools.fx : pools.mx;
    pool.reject = reject;
    const std::string key = to_string(s);
    require(j.contains(key), path.string() + ": missing pool '" + key + "'");
    for (const auto& entry : j.at(key)) {
      Clip c;
      c.id = entry.at("id").get<std::string>();
      c.audio = dsp::resample_to_mono_16k(dsp::read_wav(base / entry.at("wav").get<std::string>()));
      if (entry.contains("features")) c.features = cond::read_fseq(base / entry.at("features").get<std::string>());
      pool.clips.push_back(std::move(c));
    }
    pool.validate();
  }
  return pools;
}

// --- Recipe ---------------------------------------------------------------

void MixRecipe::validate() const {
  require(std::isfinite(duration) && duration > 0.0, "recipe: duration must be > 0");
  require(segment_duration.min > 0.0 && segment_duration.min <= segment_duration.max,
          "recipe: segment_duration needs 0 < min <= max");
  require(segment_duration.sigma >= 0.0, "recipe: segment_duration.sigma must be >= 0");
  require(crossfade >= 0.0 && crossfade < segment_duration.min, "recipe: crossfade must be >= 0 and < min segment duration");
  require(crossfade_probability >= 0.0 && crossfade_probability <= 1.0, "recipe: crossfade_probability must lie in [0, 1]");
  for (const auto& c : segment_count)
    require(c.rate_per_minute >= 0.0 && c.min >= 1 && c.min <= c.max, "recipe: segment_count needs rate >= 0, 1 <= min <= max");
  require(std::isfinite(target_loudness) && std::isfinite(true_peak_ceiling), "recipe: loudness targets must be finite");
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    require(ok, "recipe: unknown field '" + k + "' in " + where);
  }
}

}  // namespace

MixRecipe recipe_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("recipe: ") + e.what());
  }
  require(j.is_object(), "recipe: expected a JSON object");
  check_keys(j,
             {"duration", "segment_count", "segment_duration", "crossfade", "crossfade_probability", "target_loudness",
              "true_peak_ceiling", "rng_seed", "stem_offsets"},
             "recipe");
  MixRecipe r;
  try {
    r.duration = j.value("duration", r.duration);
    if (j.contains("segment_count")) {
      for (StemKind s : kAllStems) {
        const std::string key = to_string(s);
        if (!j["segment_count"].contains(key)) continue;
        const json& c = j["segment_count"][key];
        check_keys(c, {"rate_per_minute", "min", "max"}, "segment_count." + key);
        auto& dst = r.segment_count[static_cast<std::size_t>(s)];
        dst.rate_per_minute = c.value("rate_per_minute", dst.rate_per_minute);
        dst.min = c.value("min", dst.min);
        dst.max = c.value("max", dst.max);
      }
    }
    if (j.contains("segment_duration")) {
      const json& d = j["segment_duration"];
      check_keys(d, {"mu", "sigma", "min", "max"}, "segment_duration");
      r.segment_duration.mu = d.value("mu", r.segment_duration.mu);
      r.segment_duration.sigma = d.value("sigma", r.segment_duration.sigma);
      r.segment_duration.min = d.value("min", r.segment_duration.min);
      r.segment_duration.max = d.value("max", r.segment_duration.max);
    }
    r.crossfade = j.value("crossfade", r.crossfade);
    r.crossfade_probability = j.value("crossfade_probability", r.crossfade_probability);
    r.target_loudness = j.value("target_loudness", r.target_loudness);
    r.true_peak_ceiling = j.value("true_peak_ceiling", r.true_peak_ceiling);
    r.rng_seed = j.value("rng_seed", r.rng_seed);
    if (j.contains("stem_offsets")) {
      for (StemKind s : kAllStems) {
        const std::string key = to_string(s);
        if (j["stem_offsets"].contains(key)) r.stem_offsets[static_cast<std::size_t>(s)] = j["stem_offsets"][key].get<double>();
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("recipe: ") + e.what());
  }
  r.validate();
  return r;
}

std::string recipe_to_json(const MixRecipe& r) {
  json j;
  j["duration"] = r.duration;
  for (StemKind s : kAllStems) {
    const auto& c = r.segment_count[static_cast<std::size_t>(s)];
    j["segment_count"][to_string(s)] = {{"rate_per_minute", c.rate_per_minute}, {"min", c.min}, {"max", c.max}};
    j["stem_offsets"][to_string(s)] = r.stem_offsets[static_cast<std::size_t>(s)];
  }
  j["segment_duration"] = {{"mu", r.segment_duration.mu},
                           {"sigma", r.segment_duration.sigma},
                           {"min", r.segment_duration.min},
                           {"max", r.segment_duration.max}};
  j["crossfade"] = r.crossfade;
  j["crossfade_probability"] = r.crossfade_probability;
  j["target_loudness"] = r.target_loudness;
  j["true_peak_ceiling"] = r.true_peak_ceiling;
  j["rng_seed"] = r.rng_seed;
  return j.dump(2);
}

MixRecipe load_recipe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open recipe " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return recipe_from_json(ss.str());
}

// --- Track assembly -------------------------------------------------------

std::pair<double, double> crossfade_gains(std::size_t k, std::size_t n) {
  const double x = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
  const double phase = 0.5 * std::numbers::pi * x;
  return {std::cos(phase), std::sin(phase)};
}

StemTrack build_stem_track(const ClipPool& pool, const MixRecipe& recipe, std::mt19937_64& rng) {
  recipe.validate();
  const std::vector<const Clip*> clips = pool.accepted();
  require(!clips.empty(), std::string(to_string(pool.kind)) + " pool has no accepted clips");

  const auto& count_dist = recipe.segment_count[static_cast<std::size_t>(pool.kind)];
  const double mean = count_dist.rate_per_minute * recipe.duration / 60.0;
  int count = mean > 0.0 ? static_cast<int>(std::poisson_distribution<long>(mean)(rng)) : 0;
  count = std::clamp(count, count_dist.min, count_dist.max);
  if (static_cast<std::size_t>(count) > clips.size())
    throw ValidationError(std::string(to_string(pool.kind)) + " pool exhausted: recipe drew " + std::to_string(count) +
                          " segments but only " + std::to_string(clips.size()) + " accepted clips exist (shortfall " +
                          std::to_string(count - static_cast<int>(clips.size())) + ")");

  // Distinct clips: partial Fisher-Yates over the accepted indices.
  std::vector<std::size_t> order(clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), order.size() - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[pick(rng)]);
  }

  const auto& dd = recipe.segment_duration;
  std::lognormal_distribution<double> dur_dist(dd.mu, dd.sigma);
  const std::size_t xfade = to_samples(recipe.crossfade);
  std::bernoulli_distribution do_xfade(recipe.crossfade_probability);

  std::vector<Segment> segs(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Segment& s = segs[static_cast<std::size_t>(i)];
    s.clip = clips[order[static_cast<std::size_t>(i)]];
    const double d = std::clamp(dur_dist(rng), dd.min, dd.max);
    s.length = std::min(to_samples(d), s.clip->audio.size());
    const std::size_t slack = s.clip->audio.size() - s.length;
    s.source_start = slack > 0 ? std::uniform_int_distribution<std::size_t>(0, slack)(rng) : 0;
  }

  // Transition i joins segment i and i + 1. A crossfade needs room for both
  // ramps inside each neighbour so no three segments ever overlap.
  std::vector<bool> xf(segs.empty() ? 0 : segs.size() - 1, false);
  for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
    const bool want = xfade > 0 && do_xfade(rng);
    if (want && segs[i].length >= segs[i].fade_in + xfade && segs[i + 1].length >= xfade) {
      xf[i] = true;
      segs[i].fade_out = xfade;
      segs[i + 1].fade_in = xfade;
    }
  }

  // Spare time goes to the lead, the gap transitions and the tail, split by a
  // flat Dirichlet draw.
  const std::size_t total = to_samples(recipe.duration);
  std::size_t occupied = 0;
  for (std::size_t i = 0; i < segs.size(); ++i) occupied += segs[i].length - (i > 0 && xf[i - 1] ? xfade : 0);
  std::vector<std::size_t> slots;  // lead, then each gap transition, then tail
  slots.push_back(0);
  for (bool x : xf)
    if (!x) slots.push_back(0);
  slots.push_back(0);
  if (occupied < total) {
    const std::size_t spare = total - occupied;
    std::exponential_distribution<double> e(1.0);
    std::vector<double> w(slots.size());
    double sum = 0.0;
    for (double& v : w) sum += (v = e(rng));
    std::size_t used = 0;
    for (std::size_t i = 0; i + 1 < slots.size(); ++i) {
      slots[i] = static_cast<std::size_t>(std::floor(static_cast<double>(spare) * w[i] / sum));
      used += slots[i];
    }
    slots.back() = spare - std::min(used, spare);
  }

  std::size_t cursor = slots[0];
  std::size_t gap_slot = 1;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (i > 0) {
      if (xf[i - 1]) {
        cursor -= xfade;
      } else {
        cursor += slots[gap_slot++];
      }
    }
    segs[i].placed_start = cursor;
    cursor += segs[i].length;
  }

  StemTrack track;
  track.audio.sample_rate = kSr;
  track.audio.samples.assign(total, 0.0f);
  for (const Segment& s : segs) {
    if (s.placed_start >= total) continue;
    Segment placed = s;
    placed.length = std::min(s.length, total - s.placed_start);
    const auto& src = s.clip->audio.samples;
    for (std::size_t k = 0; k < placed.length; ++k) {
      double g = 1.0;
      if (k < s.fade_in) g *= crossfade_gains(k, s.fade_in).second;
      if (s.fade_out > 0 && k + s.fade_out >= s.length) g *= crossfade_gains(k - (s.length - s.fade_out), s.fade_out).first;
      track.audio.samples[s.placed_start + k] += static_cast<float>(g * src[s.source_start + k]);
    }
    if (placed.length < s.length && placed.fade_out > 0) placed.fade_out = 0;
    track.segments.push_back(placed);
    track.manifest.push_back(ManifestEntry{pool.kind, s.clip->id, to_seconds(s.source_start), to_seconds(s.placed_start),
                                           to_seconds(placed.length)});
  }
  return track;
}

// --- Sample synthesis -----------------------------------------------------

const dsp::Waveform& StemSet::stem(StemKind s) const {
  switch (s) {
    case StemKind::kDX: return dx;
    case StemKind::kFX: return fx;
    case StemKind::kMX: return mx;
  }
  return dx;
}

std::uint64_t sample_seed(std::uint64_t base_seed, std::uint64_t k) {
  // splitmix64 finaliser
  std::uint64_t z = base_seed + k + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

void scale_in_place(dsp::Waveform& w, double g) {
  for (float& v : w.samples) v = static_cast<float>(v * g);
}

dsp::Waveform add3(const dsp::Waveform& a, const dsp::Waveform& b, const dsp::Waveform& c) {
  dsp::Waveform m;
  m.sample_rate = a.sample_rate;
  m.samples.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) m.samples[i] = (a.samples[i] + b.samples[i]) + c.samples[i];
  return m;
}

}  // namespace

StemSet synthesize_sample(const Pools& pools, const MixRecipe& recipe) {
  recipe.validate();
  std::mt19937_64 rng(recipe.rng_seed);
  std::array<StemTrack, 3> tracks;
  for (StemKind s : kAllStems) tracks[static_cast<std::size_t>(s)] = build_stem_track(pools[s], recipe, rng);

  StemSet out;
  std::array<dsp::Waveform*, 3> stems{&out.dx, &out.fx, &out.mx};
  for (std::size_t i = 0; i < 3; ++i) {
    *stems[i] = tracks[i].audio;
    const double lk = measure_loudness(*stems[i]);
    if (is_silent(lk)) continue;  // nothing audible to level; keep unity gain
    const double g = db_to_gain(recipe.target_loudness + recipe.stem_offsets[i] - lk);
    scale_in_place(*stems[i], g);
    out.stem_gains[i] = g;
  }

  const dsp::Waveform pre = add3(out.dx, out.fx, out.mx);
  const double lk = measure_loudness(pre);
  require(!is_silent(lk), "synthesize_sample: mixture is silent");
  const double tp = measure_true_peak(pre);
  double gain_db = recipe.target_loudness - lk;
  if (tp + gain_db > recipe.true_peak_ceiling) {
    gain_db = recipe.true_peak_ceiling - tp;
    out.peak_limited = true;
  }
  out.mix_gain = db_to_gain(gain_db);
  for (std::size_t i = 0; i < 3; ++i) {
    scale_in_place(*stems[i], out.mix_gain);
    out.stem_gains[i] *= out.mix_gain;
  }
  out.mixture = add3(out.dx, out.fx, out.mx);
  out.loudness = measure_loudness(out.mixture);
  out.true_peak = measure_true_peak(out.mixture);

  // Manifests and feature crops.
  for (std::size_t i = 0; i < 3; ++i) {
    const StemKind kind = kAllStems[i];
    std::vector<cond::PlacedFeatures> placements;
    std::size_t dim = 0;
    for (std::size_t k = 0; k < tracks[i].segments.size(); ++k) {
      const Segment& seg = tracks[i].segments[k];
      out.manifest.push_back(tracks[i].manifest[k]);
      if (!seg.clip->features) continue;
      const cond::FeatureSequence& f = *seg.clip->features;
      dim = f.dim();
      const double src_start = to_seconds(seg.source_start);
      SegmentFeatures sf;
      sf.stem = kind;
      sf.segment = k;
      sf.clip_id = seg.clip->id;
      sf.features = cond::crop(f, src_start, to_seconds(seg.length));
      // The crop starts at the row containing src_start; shift its placement to match.
      const double row0 = std::floor(src_start * f.frame_rate) / f.frame_rate;
      sf.placed_start_s = to_seconds(seg.placed_start) - (src_start - row0);
      out.segment_features.push_back(std::move(sf));
      placements.push_back({&f, src_start, to_seconds(seg.placed_start), to_seconds(seg.length)});
    }
    if (placements.empty()) continue;
    if (kind == StemKind::kDX)
      out.facial = cond::assemble_track(placements, recipe.duration, cond::kFacialFps, dim, cond::StreamKind::kFacial);
    else if (kind == StemKind::kFX)
      out.scene = cond::assemble_track(placements, recipe.duration, cond::kSceneFps, dim, cond::StreamKind::kScene);
  }
  return out;
}

// --- Files ----------------------------------------------------------------

void write_manifest_csv(const std::filesystem::path& path, const std::vector<ManifestEntry>& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "stem,clip_id,source_start_s,placed_start_s,length_s\n" << std::fixed << std::setprecision(6);
  for (const ManifestEntry& e : manifest)
    out << to_string(e.stem) << ',' << e.clip_id << ',' << e.source_start_s << ',' << e.placed_start_s << ','
        << e.length_s << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<ManifestEntry> read_manifest_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  require(line == "stem,clip_id,source_start_s,placed_start_s,length_s", path.string() + ": unexpected manifest header");
  std::vector<ManifestEntry> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string stem, id, a, b, c;
    std::getline(ss, stem, ',');
    std::getline(ss, id, ',');
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    try {
      out.push_back({stem_from_string(stem), id, std::stod(a), std::stod(b), std::stod(c)});
    } catch (const std::logic_error&) {
      throw ValidationError(path.string() + ": malformed manifest row '" + line + "'");
    }
  }
  return out;
}

void write_stem_set(const std::filesystem::path& dir, const StemSet& s) {
  std::filesystem::create_directories(dir / "features");
  dsp::write_wav(dir / "mix.wav", s.mixture);
  for (StemKind k : kAllStems) dsp::write_wav(dir / stem_file(k), s.stem(k));
  write_manifest_csv(dir / "manifest.csv", s.manifest);
  if (s.facial) cond::write_fseq(dir / "features" / "facial.fseq", *s.facial);
  if (s.scene) cond::write_fseq(dir / "features" / "scene.fseq", *s.scene);
  for (const SegmentFeatures& f : s.segment_features) {
    std::ostringstream name;
    name << "segment_" << to_string(f.stem) << '_' << std::setw(3) << std::setfill('0') << f.segment << ".fseq";
    cond::write_fseq(dir / "features" / name.str(), f.features);
  }
  json meta;
  meta["loudness"] = s.loudness;
  meta["true_peak"] = s.true_peak;
  meta["peak_limited"] = s.peak_limited;
  meta["mix_gain"] = s.mix_gain;
  for (StemKind k : kAllStems) meta["stem_gains"][to_string(k)] = s.stem_gains[static_cast<std::size_t>(k)];
  json segs = json::array();
  for (const SegmentFeatures& f : s.segment_features)
    segs.push_back({{"stem", to_string(f.stem)}, {"segment", f.segment}, {"clip_id", f.clip_id},
                    {"placed_start_s", f.placed_start_s}, {"rows", f.features.length()}});
  meta["segment_features"] = segs;
  std::ofstream out(dir / "meta.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';
}

LoadedSample read_stem_set(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("sample directory " + dir.string() + " does not exist");
  LoadedSample s;
  s.mixture = dsp::read_wav(dir / "mix.wav");
  for (StemKind k : kAllStems) s.stems[static_cast<std::size_t>(k)] = dsp::read_wav(dir / stem_file(k));
  for (const auto& w : s.stems)
    require(w.size() == s.mixture.size(), dir.string() + ": stem and mixture lengths differ");
  if (std::filesystem::exists(dir / "features" / "facial.fseq")) s.facial = cond::read_fseq(dir / "features" / "facial.fseq");
  if (std::filesystem::exists(dir / "features" / "scene.fseq")) s.scene = cond::read_fseq(dir / "features" / "scene.fseq");
  return s;
}

}  // namespace cassforge::mix
