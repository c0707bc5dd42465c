// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "cassforge/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <string>
#include <vector>

namespace cassforge::kernels {

namespace {

void shape_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  require(a.cols() == b.cols(), "gemm_nt: inner dimension mismatch");
  if (c.rows() != a.rows() || c.cols() != b.rows()) c = Matrix(a.rows(), b.rows());
}

void shape_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  require(a.cols() == b.rows(), "gemm_nn: inner dimension mismatch");
  if (c.rows() != a.rows() || c.cols() != b.cols()) c = Matrix(a.rows(), b.cols());
}

void shape_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  require(a.rows() == b.rows(), "gemm_tn: inner dimension mismatch");
  if (c.rows() != a.cols() || c.cols() != b.cols()) c = Matrix(a.cols(), b.cols());
}

}  // namespace

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  shape_nt(a, b, c);
  const long m = static_cast<long>(a.rows());
  const std::size_t n = b.rows(), k = a.cols();
  // B^T is small (weights); streaming its rows vectorises over j while each
  // c(i, j) still sums in ascending p.
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b(j, p);
  const double* pa = a.data();
  const double* pb = bt.data();
  double* pc = c.data();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < m; ++i) {
    const double* ai = pa + i * k;
    double* ci = pc + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  shape_nn(a, b, c);
  const long m = static_cast<long>(a.rows());
  const std::size_t n = b.cols(), k = a.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < m; ++i) {
    double* ci = pc + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = pa + i * k;
    // i-p-j order streams rows of B; each c(i, j) still accumulates in p order.
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  shape_tn(a, b, c);
  const std::size_t k = a.rows(), n = b.cols();
  const long m = static_cast<long>(a.cols());
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const std::size_t lda = a.cols();
  std::fill(pc, pc + c.size(), 0.0);
  // Each thread owns a block of output rows and streams A and B once; B is
  // usually the tall activation matrix, too large to re-read per row.
#pragma omp parallel
  {
    const long threads = omp_get_num_threads(), id = omp_get_thread_num();
    const long lo = m * id / threads, hi = m * (id + 1) / threads;
    for (std::size_t p = 0; p < k; ++p) {
      const double* ap = pa + p * lda;
      const double* bp = pb + p * n;
      for (long i = lo; i < hi; ++i) {
        const double av = ap[i];
        double* ci = pc + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  }
}

void column_sums(const Matrix& a, std::vector<double>& out) {
  const std::size_t rows = a.rows();
  const long cols = static_cast<long>(a.cols());
  out.assign(a.cols(), 0.0);
  const double* pa = a.data();
#pragma omp parallel for schedule(static)
  for (long j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += pa[r * cols + j];
    out[j] = s;
  }
}

namespace reference {

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  shape_nt(a, b, c);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      c(i, j) = s;
    }
}

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  shape_nn(a, b, c);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  shape_tn(a, b, c);
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.rows(); ++p) s += a(p, i) * b(p, j);
      c(i, j) = s;
    }
}

void column_sums(const Matrix& a, std::vector<double>& out) {
  out.assign(a.cols(), 0.0);
  for (std::size_t j = 0; j < a.cols(); ++j)
    for (std::size_t r = 0; r < a.rows(); ++r) out[j] += a(r, j);
}

}  // namespace reference

void apply_thread_limit_from_env() {
  const char* env = std::getenv("CASSFORGE_THREADS");
  if (env == nullptr || *env == '\0') return;
  int cap = 0;
  try {
    cap = std::stoi(env);
  } catch (const std::exception&) {
    throw ValidationError("CASSFORGE_THREADS must be a positive integer, got '" + std::string(env) + "'");
  }
  require(cap > 0, "CASSFORGE_THREADS must be a positive integer");
  if (cap < omp_get_max_threads()) omp_set_num_threads(cap);
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace cassforge::kernels
