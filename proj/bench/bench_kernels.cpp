// Copyright (c) 2026 The xvanon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include "xvanon/kernels.hpp"
#include "xvanon/rng.hpp"

namespace {

using namespace xvanon;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// TDNN-sized affine layer: 200 frames, 1536 -> 512.
template <bool Parallel>
void BM_Affine(benchmark::State& state) {
  const Matrix x = random_matrix(200, 1536, 1);
  const auto w = random_vector(512 * 1536, 2);
  const auto b = random_vector(512, 3);
  Matrix y(200, 512);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::affine(x, w, b, y);
    else kernels::serial::affine(x, w, b, y);
    benchmark::DoNotOptimize(y.data().data());
  }
}

// One NSF layer on a 0.1 s segment: 1600 samples, 64 -> 128, dilation 8.
template <bool Parallel>
void BM_DilatedConv(benchmark::State& state) {
  const kernels::ConvShape shape{64, 128, 3, 8};
  const Matrix x = random_matrix(1600, 64, 4);
  const auto w = random_vector(128 * 3 * 64, 5);
  const auto b = random_vector(128, 6);
  Matrix y(1600, 128);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::dilated_conv(x, shape, w, b, y);
    else kernels::serial::dilated_conv(x, shape, w, b, y);
    benchmark::DoNotOptimize(y.data().data());
  }
}

// Query against a 5000-speaker pool of 512-d x-vectors.
template <bool Parallel>
void BM_CosineScores(benchmark::State& state) {
  std::vector<SpeakerEmbedding> refs(5000);
  for (std::size_t i = 0; i < refs.size(); ++i) refs[i].vector = random_vector(512, 100 + i);
  const auto q = random_vector(512, 7);
  for (auto _ : state) {
    auto s = Parallel ? kernels::parallel::cosine_scores(refs, q) : kernels::serial::cosine_scores(refs, q);
    benchmark::DoNotOptimize(s.data());
  }
}

BENCHMARK(BM_Affine<false>)->Name("affine/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Affine<true>)->Name("affine/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DilatedConv<false>)->Name("dilated_conv/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DilatedConv<true>)->Name("dilated_conv/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CosineScores<false>)->Name("cosine_scores/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CosineScores<true>)->Name("cosine_scores/parallel")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
