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

#include "xvanon/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "xvanon/error.hpp"

namespace xvanon::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 16;

void check_affine(const Matrix& x, std::span<const double> w, std::span<const double> b,
                  Matrix& y) {
  const std::size_t out = b.size();
  if (out == 0 || w.size() != out * x.cols())
    throw InvariantError("affine: weight shape does not match input width");
  if (y.rows() != x.rows() || y.cols() != out) y = Matrix(x.rows(), out);
}

inline void affine_row(const Matrix& x, std::span<const double> w, std::span<const double> b,
                       Matrix& y, std::size_t r) {
  const std::size_t in = x.cols();
  const double* xr = x.row(r).data();
  double* yr = y.row(r).data();
  for (std::size_t o = 0; o < b.size(); ++o) {
    const double* wo = w.data() + o * in;
    double acc = 0.0;
    for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wo[i];
    yr[o] = acc + b[o];
  }
}

void check_conv(const Matrix& x, const ConvShape& s, std::span<const double> w,
                std::span<const double> b, Matrix& y) {
  if (x.cols() != s.in || b.size() != s.out || w.size() != s.out * s.taps * s.in)
    throw InvariantError("dilated_conv: weight shape does not match configuration");
  if (y.rows() != x.rows() || y.cols() != s.out) y = Matrix(x.rows(), s.out);
}

inline void conv_sample(const Matrix& x, const ConvShape& s, std::span<const double> w,
                        std::span<const double> b, Matrix& y, std::size_t n) {
  const auto len = static_cast<std::ptrdiff_t>(x.rows());
  const auto half = static_cast<std::ptrdiff_t>(s.taps / 2);
  double* yn = y.row(n).data();
  for (std::size_t o = 0; o < s.out; ++o) yn[o] = b[o];
  for (std::size_t k = 0; k < s.taps; ++k) {
    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(n) +
                               (static_cast<std::ptrdiff_t>(k) - half) *
                                   static_cast<std::ptrdiff_t>(s.dilation);
    if (src < 0 || src >= len) continue;
    const double* xs = x.row(static_cast<std::size_t>(src)).data();
    for (std::size_t o = 0; o < s.out; ++o) {
      const double* wk = w.data() + (o * s.taps + k) * s.in;
      double acc = 0.0;
      for (std::size_t c = 0; c < s.in; ++c) acc += xs[c] * wk[c];
      yn[o] += acc;
    }
  }
}

inline double cosine_one(const SpeakerEmbedding& ref, std::span<const double> q, double qnorm) {
  if (ref.vector.size() != q.size())
    throw DataError("cosine_scores: dimension mismatch for '" + ref.id + "'");
  double dot = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    dot += ref.vector[i] * q[i];
    rr += ref.vector[i] * ref.vector[i];
  }
  return dot / (std::sqrt(rr) * qnorm);
}

double query_norm(std::span<const double> q) {
  double s = 0.0;
  for (double v : q) s += v * v;
  const double n = std::sqrt(s);
  if (!(n > 0.0)) throw DataError("cosine_scores: zero-norm query");
  return n;
}

inline void stats_column(const Matrix& x, bool use_variance, std::span<double> mean,
                         std::span<double> spread, std::size_t c) {
  const std::size_t rows = x.rows();
  double sum = 0.0;
  for (std::size_t r = 0; r < rows; ++r) sum += x(r, c);
  const double m = sum / static_cast<double>(rows);
  double ss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double d = x(r, c) - m;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(rows);
  mean[c] = m;
  spread[c] = use_variance ? var : std::sqrt(var);
}

void check_stats(const Matrix& x, std::span<double> mean, std::span<double> spread) {
  if (x.rows() == 0 || mean.size() != x.cols() || spread.size() != x.cols())
    throw InvariantError("column_stats: shape mismatch");
}

}  // namespace

namespace serial {

void affine(const Matrix& x, std::span<const double> w, std::span<const double> b, Matrix& y) {
  check_affine(x, w, b, y);
  for (std::size_t r = 0; r < x.rows(); ++r) affine_row(x, w, b, y, r);
}

void dilated_conv(const Matrix& x, const ConvShape& shape, std::span<const double> w,
                  std::span<const double> b, Matrix& y) {
  check_conv(x, shape, w, b, y);
  for (std::size_t n = 0; n < x.rows(); ++n) conv_sample(x, shape, w, b, y, n);
}

std::vector<double> cosine_scores(std::span<const SpeakerEmbedding> refs,
                                  std::span<const double> query) {
  const double qn = query_norm(query);
  std::vector<double> out(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) out[i] = cosine_one(refs[i], query, qn);
  return out;
}

void column_stats(const Matrix& x, bool use_variance, std::span<double> mean,
                  std::span<double> spread) {
  check_stats(x, mean, spread);
  for (std::size_t c = 0; c < x.cols(); ++c) stats_column(x, use_variance, mean, spread, c);
}

}  // namespace serial

namespace parallel {

void affine(const Matrix& x, std::span<const double> w, std::span<const double> b, Matrix& y) {
  check_affine(x, w, b, y);
  const auto rows = static_cast<std::ptrdiff_t>(x.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) affine_row(x, w, b, y, static_cast<std::size_t>(r));
}

void dilated_conv(const Matrix& x, const ConvShape& shape, std::span<const double> w,
                  std::span<const double> b, Matrix& y) {
  check_conv(x, shape, w, b, y);
  const auto len = static_cast<std::ptrdiff_t>(x.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < len; ++n)
    conv_sample(x, shape, w, b, y, static_cast<std::size_t>(n));
}

std::vector<double> cosine_scores(std::span<const SpeakerEmbedding> refs,
                                  std::span<const double> query) {
  const double qn = query_norm(query);
  std::vector<double> out(refs.size());
  const auto n = static_cast<std::ptrdiff_t>(refs.size());
  // Exceptions must not escape the parallel region; validate dims up front.
  for (const auto& r : refs)
    if (r.vector.size() != query.size())
      throw DataError("cosine_scores: dimension mismatch for '" + r.id + "'");
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = cosine_one(refs[k], query, qn);
  }
  return out;
}

void column_stats(const Matrix& x, bool use_variance, std::span<double> mean,
                  std::span<double> spread) {
  check_stats(x, mean, spread);
  const auto cols = static_cast<std::ptrdiff_t>(x.cols());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < cols; ++c)
    stats_column(x, use_variance, mean, spread, static_cast<std::size_t>(c));
}

}  // namespace parallel

void affine(const Matrix& x, std::span<const double> w, std::span<const double> b, Matrix& y) {
  if (x.rows() > 1 && x.rows() * w.size() >= kParallelWork)
    parallel::affine(x, w, b, y);
  else
    serial::affine(x, w, b, y);
}

void dilated_conv(const Matrix& x, const ConvShape& shape, std::span<const double> w,
                  std::span<const double> b, Matrix& y) {
  if (x.rows() * w.size() >= kParallelWork)
    parallel::dilated_conv(x, shape, w, b, y);
  else
    serial::dilated_conv(x, shape, w, b, y);
}

std::vector<double> cosine_scores(std::span<const SpeakerEmbedding> refs,
                                  std::span<const double> query) {
  if (refs.size() * query.size() >= kParallelWork) return parallel::cosine_scores(refs, query);
  return serial::cosine_scores(refs, query);
}

void column_stats(const Matrix& x, bool use_variance, std::span<double> mean,
                  std::span<double> spread) {
  if (x.rows() * x.cols() >= kParallelWork)
    parallel::column_stats(x, use_variance, mean, spread);
  else
    serial::column_stats(x, use_variance, mean, spread);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace xvanon::kernels
