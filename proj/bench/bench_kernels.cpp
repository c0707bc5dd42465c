// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference vs OpenMP kernels at the shapes the vector-field net uses
// (cells x features against small weight matrices) and one square shape.
// Thread count follows OMP_NUM_THREADS / CASSFORGE_THREADS.

#include <benchmark/benchmark.h>

#include <random>

#include "cassforge/dsp.hpp"
#include "cassforge/kernels.hpp"

using cassforge::Matrix;
namespace k = cassforge::kernels;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Matrix m(r, c);
  for (double& v : m.values()) v = d(rng);
  return m;
}

template <void (*Gemm)(const Matrix&, const Matrix&, Matrix&)>
void bm_gemm_nt(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto kk = static_cast<std::size_t>(state.range(2));
  const Matrix a = random_matrix(m, kk, 1), b = random_matrix(n, kk, 2);
  Matrix c;
  for (auto _ : state) {
    Gemm(a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPS"] =
      benchmark::Counter(2.0 * static_cast<double>(m * n * kk), benchmark::Counter::kIsIterationInvariantRate,
                         benchmark::Counter::kIs1000);
}

template <void (*Gemm)(const Matrix&, const Matrix&, Matrix&)>
void bm_gemm_nn(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto kk = static_cast<std::size_t>(state.range(2));
  const Matrix a = random_matrix(m, kk, 3), b = random_matrix(kk, n, 4);
  Matrix c;
  for (auto _ : state) {
    Gemm(a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPS"] =
      benchmark::Counter(2.0 * static_cast<double>(m * n * kk), benchmark::Counter::kIsIterationInvariantRate,
                         benchmark::Counter::kIs1000);
}

template <void (*Gemm)(const Matrix&, const Matrix&, Matrix&)>
void bm_gemm_tn(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto kk = static_cast<std::size_t>(state.range(2));
  const Matrix a = random_matrix(kk, m, 5), b = random_matrix(kk, n, 6);
  Matrix c;
  for (auto _ : state) {
    Gemm(a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPS"] =
      benchmark::Counter(2.0 * static_cast<double>(m * n * kk), benchmark::Counter::kIsIterationInvariantRate,
                         benchmark::Counter::kIs1000);
}

void bm_stft(benchmark::State& state, bool reference) {
  cassforge::dsp::Waveform w;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> d(0.0, 0.1);
  w.samples.resize(reference ? 8192 : 131072);
  for (float& v : w.samples) v = static_cast<float>(d(rng));
  for (auto _ : state) {
    auto c = reference ? cassforge::dsp::stft_reference(w) : cassforge::dsp::stft(w);
    benchmark::DoNotOptimize(c.values.data());
  }
}

// {rows, cols, inner}: cells x hidden x features, hidden x hidden, and square.
void shapes(benchmark::internal::Benchmark* b) {
  b->Args({4128, 24, 44})->Args({4128, 24, 24})->Args({256, 256, 256});
}

}  // namespace

BENCHMARK(bm_gemm_nt<k::reference::gemm_nt>)->Name("gemm_nt/serial")->Apply(shapes);
BENCHMARK(bm_gemm_nt<k::gemm_nt>)->Name("gemm_nt/openmp")->Apply(shapes);
BENCHMARK(bm_gemm_nn<k::reference::gemm_nn>)->Name("gemm_nn/serial")->Apply(shapes);
BENCHMARK(bm_gemm_nn<k::gemm_nn>)->Name("gemm_nn/openmp")->Apply(shapes);
BENCHMARK(bm_gemm_tn<k::reference::gemm_tn>)->Name("gemm_tn/serial")->Apply(shapes);
BENCHMARK(bm_gemm_tn<k::gemm_tn>)->Name("gemm_tn/openmp")->Apply(shapes);
BENCHMARK_CAPTURE(bm_stft, direct_dft_serial, true);
BENCHMARK_CAPTURE(bm_stft, fftw_openmp, false);

BENCHMARK_MAIN();
