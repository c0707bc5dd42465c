// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// Brute-force WPR reference and random activation generators.

#pragma once

#include <optional>
#include <random>
#include <string>

#include "cassforge/metrics.hpp"

namespace cassforge::testing {

using metrics::ActivationMatrix;
using metrics::ClassGrouping;
using metrics::MainClass;

/// Literal reading of the WPR definition, one frame and one class at a time.
inline std::optional<double> wpr_oracle(const ActivationMatrix& a, const ClassGrouping& g, MainClass target, double thr,
                                 std::size_t min_run) {
  const std::size_t T = a.frames(), C = a.classes();
  auto bin = [&](std::size_t t, std::size_t c) { return a.p(t, c) >= thr; };
  auto kept = [&](std::size_t t, std::size_t c) {
    if (!bin(t, c)) return false;
    std::size_t lo = t, hi = t;
    while (lo > 0 && bin(lo - 1, c)) --lo;
    while (hi + 1 < T && bin(hi + 1, c)) ++hi;
    return hi - lo + 1 >= min_run;
  };
  std::size_t denom = 0, num = 0;
  for (std::size_t t = 0; t < T; ++t) {
    bool any = false, wrong = false;
    for (std::size_t c = 0; c < C; ++c) {
      any = any || bin(t, c);
      if (g.groups.at(a.class_names[c]) != target && kept(t, c)) wrong = true;
    }
    if (!any) continue;
    ++denom;
    if (wrong) ++num;
  }
  if (denom == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(denom);
}

inline ActivationMatrix random_activations(std::mt19937_64& rng, std::size_t T, std::size_t C) {
  ActivationMatrix a;
  a.p = Matrix(T, C);
  std::uniform_real_distribution<double> u;
  // Piecewise-constant rows give runs of every length.
  for (std::size_t c = 0; c < C; ++c) {
    double level = u(rng);
    for (std::size_t t = 0; t < T; ++t) {
      if (u(rng) < 0.03) level = u(rng);
      a.p(t, c) = level;
    }
  }
  for (std::size_t c = 0; c < C; ++c) a.class_names.push_back("class" + std::to_string(c));
  return a;
}

inline ClassGrouping random_grouping(std::mt19937_64& rng, const ActivationMatrix& a) {
  ClassGrouping g;
  for (const auto& name : a.class_names) g.groups[name] = static_cast<MainClass>(rng() % 3);
  return g;
}

}  // namespace cassforge::testing
