// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>

#include "cassforge/features.hpp"
#include "test_util.hpp"

using namespace cassforge;
using namespace cassforge::cond;

namespace {

FeatureSequence ramp(std::size_t rows, std::size_t dim, double fps, StreamKind kind) {
  FeatureSequence f{Matrix(rows, dim), fps, kind, {}};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < dim; ++c) f.frames(r, c) = static_cast<double>(r) + 0.1 * static_cast<double>(c);
  return f;
}

}  // namespace

TEST_CASE("fseq round trip stores float32 rows") {
  cassforge::testing::TempDir dir("fseq");
  FeatureSequence f = ramp(37, 4, kFacialFps, StreamKind::kFacial);
  f.frames(3, 2) = 1.0 / 3.0;
  write_fseq(dir.path() / "a.fseq", f);
  const FeatureSequence g = read_fseq(dir.path() / "a.fseq");
  CHECK(g.kind == StreamKind::kFacial);
  CHECK(g.frame_rate == kFacialFps);
  REQUIRE(g.frames.rows() == 37);
  REQUIRE(g.frames.cols() == 4);
  for (std::size_t i = 0; i < f.frames.size(); ++i)
    CHECK(g.frames.values()[i] == static_cast<double>(static_cast<float>(f.frames.values()[i])));
}

TEST_CASE("fseq rejects bad input") {
  cassforge::testing::TempDir dir("fseq_bad");
  CHECK_THROWS_AS(read_fseq(dir.path() / "missing.fseq"), IoError);
  {
    std::ofstream(dir.path() / "junk.fseq") << "NOPE and more bytes";
  }
  CHECK_THROWS_AS(read_fseq(dir.path() / "junk.fseq"), ValidationError);

  const FeatureSequence f = ramp(5, 2, kSceneFps, StreamKind::kScene);
  write_fseq(dir.path() / "ok.fseq", f);
  std::filesystem::resize_file(dir.path() / "ok.fseq", std::filesystem::file_size(dir.path() / "ok.fseq") - 3);
  CHECK_THROWS_AS(read_fseq(dir.path() / "ok.fseq"), ValidationError);

  FeatureSequence nan = f;
  nan.frames(0, 0) = std::nan("");
  CHECK_THROWS_AS(write_fseq(dir.path() / "nan.fseq", nan), ValidationError);
}

TEST_CASE("row times") {
  const FeatureSequence f = ramp(10, 1, 4.0, StreamKind::kScene);
  CHECK(f.time_of(0) == doctest::Approx(0.125));
  CHECK(f.time_of(3) == doctest::Approx(0.875));
  FeatureSequence fused{Matrix(2, 1), 0.0, StreamKind::kFused, {0.3, 0.1}};
  CHECK(fused.time_of(1) == 0.1);
}

TEST_CASE("crop covers the requested span") {
  const FeatureSequence f = ramp(100, 2, 25.0, StreamKind::kFacial);
  const FeatureSequence c = crop(f, 1.0, 0.4);
  REQUIRE(c.length() == 10);
  CHECK(c.frames(0, 0) == 25.0);
  CHECK(c.frames(9, 1) == doctest::Approx(34.1));
  // Partial rows at both ends are included.
  CHECK(crop(f, 1.03, 0.02).length() == 2);
  // Past the end.
  CHECK(crop(f, 3.9, 1.0).length() == 3);
  CHECK(crop(f, 5.0, 1.0).length() == 0);
  CHECK_THROWS_AS(crop(f, -1.0, 1.0), ValidationError);
}

TEST_CASE("assemble_track places excerpts on the timeline") {
  const FeatureSequence a = ramp(50, 2, 25.0, StreamKind::kFacial);
  const FeatureSequence b = ramp(50, 2, 25.0, StreamKind::kFacial);
  std::vector<PlacedFeatures> placed{{&a, 0.4, 0.0, 0.5}, {&b, 1.0, 1.0, 0.4}};
  const FeatureSequence t = assemble_track(placed, 2.0, 25.0, 2, StreamKind::kFacial);
  REQUIRE(t.length() == 50);
  CHECK(t.frames(0, 0) == 10.0);   // source row at 0.4 s
  CHECK(t.frames(11, 0) == 21.0);
  CHECK(t.frames(12, 0) == 0.0);   // centre at 0.5 s is past the excerpt
  CHECK(t.frames(25, 0) == 25.0);  // second excerpt starts at source 1.0 s
  CHECK(t.frames(34, 1) == doctest::Approx(34.1));
  CHECK(t.frames(35, 0) == 0.0);
  CHECK(t.frames(49, 0) == 0.0);
}

TEST_CASE("assemble_track resamples across frame rates") {
  const FeatureSequence scene = ramp(8, 1, 4.0, StreamKind::kScene);
  const FeatureSequence t = assemble_track({{&scene, 0.0, 0.0, 2.0}}, 2.0, 25.0, 1, StreamKind::kScene);
  REQUIRE(t.length() == 50);
  for (std::size_t r = 0; r < 50; ++r) {
    const double time = (r + 0.5) / 25.0;
    CHECK(t.frames(r, 0) == std::floor(time * 4.0));
  }
  CHECK_THROWS_AS(assemble_track({{&scene, 0.0, 0.0, 1.0}}, 1.0, 25.0, 3, StreamKind::kScene), ValidationError);
}
