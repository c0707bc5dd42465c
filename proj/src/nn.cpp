// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "cassforge/nn.hpp"

#include "cassforge/kernels.hpp"

namespace cassforge::nn {

Activation activation_from_string(std::string_view s) {
  if (s == "gelu") return Activation::kGelu;
  if (s == "identity") return Activation::kIdentity;
  throw ValidationError("unknown activation '" + std::string(s) + "'");
}

const char* to_string(Activation a) { return a == Activation::kGelu ? "gelu" : "identity"; }

void Affine::forward(const Matrix& x, Matrix& y) const {
  require(x.cols() == in(), "affine: input has " + std::to_string(x.cols()) + " columns, expected " +
                                std::to_string(in()));
  kernels::gemm_nt(x, weight, y);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias(0, c);
  }
}

void Affine::backward(const Matrix& x, const Matrix& dy, Affine& grad, Matrix* dx) const {
  Matrix dw;
  kernels::gemm_tn(dy, x, dw);
  for (std::size_t i = 0; i < dw.size(); ++i) grad.weight.values()[i] += dw.values()[i];
  std::vector<double> db;
  kernels::column_sums(dy, db);
  for (std::size_t c = 0; c < db.size(); ++c) grad.bias(0, c) += db[c];
  if (dx != nullptr) kernels::gemm_nn(dy, weight, *dx);
}

void init_glorot(Matrix& w, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : w.values()) v = dist(rng);
}

}  // namespace cassforge::nn
