// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// Small building blocks shared by the fusion module and the vector-field net.

#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cassforge/matrix.hpp"

namespace cassforge::nn {

enum class Activation { kGelu, kIdentity };

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return cdf + x * pdf;
}

inline double activate(Activation a, double x) { return a == Activation::kGelu ? gelu(x) : x; }
inline double activate_grad(Activation a, double x) { return a == Activation::kGelu ? gelu_grad(x) : 1.0; }

Activation activation_from_string(std::string_view s);
const char* to_string(Activation a);

/// y = x W^T + b, W is out x in, b is 1 x out.
struct Affine {
  Matrix weight;
  Matrix bias;

  static Affine zeros(std::size_t in, std::size_t out) { return {Matrix(out, in), Matrix(1, out)}; }
  std::size_t in() const { return weight.cols(); }
  std::size_t out() const { return weight.rows(); }

  void forward(const Matrix& x, Matrix& y) const;
  /// Accumulates dW, db into grad and writes dx (if non-null).
  void backward(const Matrix& x, const Matrix& dy, Affine& grad, Matrix* dx) const;

  template <class F>
  void visit(std::string_view prefix, F&& f) {
    f(std::string(prefix) + ".weight", weight);
    f(std::string(prefix) + ".bias", bias);
  }
};

/// Uniform Glorot initialisation.
void init_glorot(Matrix& w, std::mt19937_64& rng);

/// Anything exposing visit(f) with f(name, Matrix&).
template <class P>
std::size_t parameter_count(P& p) {
  std::size_t n = 0;
  p.visit([&](const std::string&, Matrix& m) { n += m.size(); });
  return n;
}

template <class P>
std::vector<double> flatten(P& p) {
  std::vector<double> out;
  p.visit([&](const std::string&, Matrix& m) { out.insert(out.end(), m.values().begin(), m.values().end()); });
  return out;
}

template <class P>
void unflatten(P& p, const std::vector<double>& flat) {
  std::size_t pos = 0;
  p.visit([&](const std::string& name, Matrix& m) {
    require(pos + m.size() <= flat.size(), "unflatten: parameter blob too short at " + name);
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos), flat.begin() + static_cast<std::ptrdiff_t>(pos + m.size()),
              m.values().begin());
    pos += m.size();
  });
  require(pos == flat.size(), "unflatten: parameter blob has trailing values");
}

/// Same structure with every tensor zeroed; used as a gradient accumulator.
template <class P>
P zeros_like(const P& p) {
  P z = p;
  z.visit([](const std::string&, Matrix& m) { m.fill(0.0); });
  return z;
}

}  // namespace cassforge::nn
