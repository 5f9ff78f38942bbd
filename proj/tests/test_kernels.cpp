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

#include <doctest.h>

#include <cmath>
#include <cstring>

#include "xvanon/kernels.hpp"
#include "xvanon/rng.hpp"

using namespace xvanon;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(-1, 1);
  return m;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1, 1);
  return v;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("affine matches a naive triple loop and the parallel build") {
  for (auto [rows, in, out] : {std::tuple{1, 1, 1}, {7, 13, 5}, {200, 64, 96}}) {
    const Matrix x = random_matrix(rows, in, 1);
    const auto w = random_vector(out * in, 2);
    const auto b = random_vector(out, 3);
    Matrix ys(rows, out), yp(rows, out);
    kernels::serial::affine(x, w, b, ys);
    kernels::parallel::affine(x, w, b, yp);
    CHECK(bitwise_equal(ys, yp));
    for (int t = 0; t < rows; ++t)
      for (int o = 0; o < out; ++o) {
        long double acc = b[o];
        for (int i = 0; i < in; ++i) acc += static_cast<long double>(x(t, i)) * w[o * in + i];
        CHECK(ys(t, o) == doctest::Approx(static_cast<double>(acc)).epsilon(1e-12));
      }
  }
}

TEST_CASE("dilated_conv reads centered taps with zero padding") {
  const kernels::ConvShape shape{3, 4, 3, 4};
  const Matrix x = random_matrix(37, 3, 4);
  const auto w = random_vector(4 * 3 * 3, 5);
  const auto b = random_vector(4, 6);
  Matrix ys(37, 4), yp(37, 4);
  kernels::serial::dilated_conv(x, shape, w, b, ys);
  kernels::parallel::dilated_conv(x, shape, w, b, yp);
  CHECK(bitwise_equal(ys, yp));
  for (int t = 0; t < 37; ++t)
    for (int o = 0; o < 4; ++o) {
      double acc = b[o];
      for (int k = 0; k < 3; ++k) {
        const int src = t + (k - 1) * 4;
        if (src < 0 || src >= 37) continue;
        for (int c = 0; c < 3; ++c) acc += w[(o * 3 + k) * 3 + c] * x(src, c);
      }
      CHECK(ys(t, o) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("cosine_scores agree between builds and with the formula") {
  std::vector<SpeakerEmbedding> refs(300);
  for (std::size_t i = 0; i < refs.size(); ++i) refs[i].vector = random_vector(16, 100 + i);
  const auto q = random_vector(16, 7);
  const auto s = kernels::serial::cosine_scores(refs, q);
  const auto p = kernels::parallel::cosine_scores(refs, q);
  REQUIRE(s.size() == refs.size());
  CHECK(std::memcmp(s.data(), p.data(), s.size() * sizeof(double)) == 0);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t k = 0; k < 16; ++k) {
      d += refs[i].vector[k] * q[k];
      na += refs[i].vector[k] * refs[i].vector[k];
      nb += q[k] * q[k];
    }
    CHECK(s[i] == doctest::Approx(d / std::sqrt(na * nb)).epsilon(1e-12));
  }
}

TEST_CASE("column_stats gives mean and std or variance") {
  const Matrix x = random_matrix(50, 6, 8);
  for (bool var : {false, true}) {
    std::vector<double> ms(6), ss(6), mp(6), sp(6);
    kernels::serial::column_stats(x, var, ms, ss);
    kernels::parallel::column_stats(x, var, mp, sp);
    CHECK(ms == mp);
    CHECK(ss == sp);
    for (int c = 0; c < 6; ++c) {
      double m = 0;
      for (int t = 0; t < 50; ++t) m += x(t, c);
      m /= 50;
      double v = 0;
      for (int t = 0; t < 50; ++t) v += (x(t, c) - m) * (x(t, c) - m);
      v /= 50;
      CHECK(ms[c] == doctest::Approx(m).epsilon(1e-12));
      CHECK(ss[c] == doctest::Approx(var ? v : std::sqrt(v)).epsilon(1e-12));
    }
  }
}

TEST_CASE("dispatcher output equals the serial reference") {
  const Matrix x = random_matrix(300, 512, 9);
  const auto w = random_vector(256 * 512, 10);
  const auto b = random_vector(256, 11);
  Matrix yd(300, 256), ys(300, 256);
  kernels::affine(x, w, b, yd);
  kernels::serial::affine(x, w, b, ys);
  CHECK(bitwise_equal(yd, ys));
  CHECK(kernels::max_threads() >= 1);
}
