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

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xvanon/embedding.hpp"
#include "xvanon/matrix.hpp"

// Hot loops of the pipeline, each in two builds: `serial` is the reference
// kept for testing, `parallel` splits the outer loop across OpenMP threads.
// Both evaluate every output element with the same sequential inner loop, so
// their results are bitwise identical. The unqualified entry points dispatch
// to `parallel` above a work threshold.
namespace xvanon::kernels {

/// Weight layout for a dilated 1-D convolution over a [time x channels]
/// signal: w[(o * taps + k) * in + c], taps centered on the current sample at
/// offsets (k - taps/2) * dilation. Samples outside the signal read as zero.
struct ConvShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t taps = 3;
  std::size_t dilation = 1;
};

namespace serial {
// y = x * w^T + b, with w stored [out x in] row-major.
void affine(const Matrix& x, std::span<const double> w, std::span<const double> b, Matrix& y);
void dilated_conv(const Matrix& x, const ConvShape& shape, std::span<const double> w,
                  std::span<const double> b, Matrix& y);
std::vector<double> cosine_scores(std::span<const SpeakerEmbedding> refs,
                                  std::span<const double> query);
// Per-column mean and standard deviation (or variance) over rows.
void column_stats(const Matrix& x, bool use_variance, std::span<double> mean,
                  std::span<double> spread);
}  // namespace serial

namespace parallel {
void affine(const Matrix& x, std::span<const double> w, std::span<const double> b, Matrix& y);
void dilated_conv(const Matrix& x, const ConvShape& shape, std::span<const double> w,
                  std::span<const double> b, Matrix& y);
std::vector<double> cosine_scores(std::span<const SpeakerEmbedding> refs,
                                  std::span<const double> query);
void column_stats(const Matrix& x, bool use_variance, std::span<double> mean,
                  std::span<double> spread);
}  // namespace parallel

void affine(const Matrix& x, std::span<const double> w, std::span<const double> b, Matrix& y);
void dilated_conv(const Matrix& x, const ConvShape& shape, std::span<const double> w,
                  std::span<const double> b, Matrix& y);
std::vector<double> cosine_scores(std::span<const SpeakerEmbedding> refs,
                                  std::span<const double> query);
void column_stats(const Matrix& x, bool use_variance, std::span<double> mean,
                  std::span<double> spread);

/// Number of OpenMP threads available (1 when built without OpenMP).
int max_threads();

}  // namespace xvanon::kernels
