// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// Dense kernels behind the network layers. Each kernel has an OpenMP version
// used by the library and a plain serial version kept as the test reference.
// Every output element is reduced by one thread in ascending-k order, so the
// parallel result does not depend on the thread count.

#pragma once

#include "cassforge/matrix.hpp"

namespace cassforge::kernels {

/// C = A * B^T.  A is m x k, B is n x k.
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
/// C = A * B.  A is m x k, B is k x n.
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c);
/// C = A^T * B.  A is k x m, B is k x n.
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);

/// Column sums of A (length cols).
void column_sums(const Matrix& a, std::vector<double>& out);

namespace reference {
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
void column_sums(const Matrix& a, std::vector<double>& out);
}  // namespace reference

/// Applies the CASSFORGE_THREADS cap (if set) to the OpenMP runtime.
void apply_thread_limit_from_env();
int max_threads();

}  // namespace cassforge::kernels
