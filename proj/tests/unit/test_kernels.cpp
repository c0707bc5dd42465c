// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "cassforge/kernels.hpp"

using namespace cassforge;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.values()) v = u(rng);
  return m;
}

}  // namespace

TEST_CASE("parallel kernels are bitwise equal to the serial reference") {
  std::mt19937_64 rng(99);
  const std::size_t shapes[][3] = {{1, 1, 1}, {7, 3, 5}, {129, 24, 44}, {513, 33, 17}, {64, 64, 64}};
  for (const auto& s : shapes) {
    const std::size_t m = s[0], n = s[1], k = s[2];
    CAPTURE(m);
    CAPTURE(n);
    CAPTURE(k);
    const Matrix a = random_matrix(m, k, rng), bt = random_matrix(n, k, rng);
    Matrix c1, c2;
    kernels::gemm_nt(a, bt, c1);
    kernels::reference::gemm_nt(a, bt, c2);
    CHECK(c1 == c2);

    const Matrix b = random_matrix(k, n, rng);
    kernels::gemm_nn(a, b, c1);
    kernels::reference::gemm_nn(a, b, c2);
    CHECK(c1 == c2);

    const Matrix at = random_matrix(k, m, rng);
    kernels::gemm_tn(at, b, c1);
    kernels::reference::gemm_tn(at, b, c2);
    CHECK(c1 == c2);

    std::vector<double> s1, s2;
    kernels::column_sums(a, s1);
    kernels::reference::column_sums(a, s2);
    CHECK(s1 == s2);
  }
}

TEST_CASE("reference gemm matches a hand computation") {
  Matrix a(2, 3), b(3, 2);
  double v = 1.0;
  for (double& x : a.values()) x = v++;
  for (double& x : b.values()) x = v++;
  Matrix c;
  kernels::reference::gemm_nn(a, b, c);
  // [1 2 3; 4 5 6] * [7 8; 9 10; 11 12]
  CHECK(c(0, 0) == 58.0);
  CHECK(c(0, 1) == 64.0);
  CHECK(c(1, 0) == 139.0);
  CHECK(c(1, 1) == 154.0);
}

TEST_CASE("kernels reject mismatched inner dimensions") {
  Matrix a(2, 3), b(4, 2), c;
  CHECK_THROWS_AS(kernels::gemm_nn(a, b, c), ValidationError);
  CHECK_THROWS_AS(kernels::gemm_nt(a, b, c), ValidationError);
  CHECK_THROWS_AS(kernels::gemm_tn(a, b, c), ValidationError);
}

TEST_CASE("thread limit from the environment") {
  setenv("CASSFORGE_THREADS", "1", 1);
  kernels::apply_thread_limit_from_env();
  CHECK(kernels::max_threads() == 1);
  unsetenv("CASSFORGE_THREADS");
}
