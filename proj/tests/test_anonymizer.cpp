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

#include <algorithm>
#include <cmath>
#include <numbers>

#include "xvanon/anonymizer.hpp"
#include "xvanon/error.hpp"
#include "xvanon/rng.hpp"

using namespace xvanon;

namespace {

EmbeddingPool random_pool(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng r(seed);
  EmbeddingPool p(dim);
  char id[16];
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    for (double& x : v) x = r.normal();
    std::snprintf(id, sizeof id, "p%03zu", i);
    p.add({id, v, {}});
  }
  return p;
}

SpeakerEmbedding at_angle(std::string id, double degrees) {
  const double r = degrees * std::numbers::pi / 180.0;
  return {std::move(id), {std::cos(r), std::sin(r)}, {}};
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol = 1e-12) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol);
}

}  // namespace

TEST_CASE("random selection with M = pool size gives the pool mean") {
  const auto pool = random_pool(30, 6, 1);
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const auto ps = anonymize_random(pool, 30, seed);
    check_close(ps.embedding.vector, pool.mean().vector);
    CHECK(ps.selected_ids.size() == 30);
  }
}

TEST_CASE("random selection with M = 1 returns one member") {
  const auto pool = random_pool(30, 6, 2);
  const auto ps = anonymize_random(pool, 1, 5);
  REQUIRE(ps.selected_ids.size() == 1);
  CHECK(ps.embedding.vector == pool[pool.index_of(ps.selected_ids[0])].vector);
}

TEST_CASE("random selection is deterministic and recomposable") {
  const auto pool = random_pool(40, 5, 3);
  const auto a = anonymize_random(pool, 7, 1234);
  const auto b = anonymize_random(pool, 7, 1234);
  CHECK(a.selected_ids == b.selected_ids);
  CHECK(a.embedding.vector == b.embedding.vector);
  CHECK(recompose(pool, a.selected_ids).vector == a.embedding.vector);
  CHECK_THROWS_AS(anonymize_random(pool, 41, 1), Error);
  CHECK_THROWS_AS(anonymize_random(pool, 0, 1), Error);
}

TEST_CASE("random selection is uniform over the pool") {
  // Pearson chi-square over 20 entries, 19 degrees of freedom; 43.82 is the
  // 0.999 quantile.
  const auto pool = random_pool(20, 3, 4);
  std::vector<double> counts(20, 0.0);
  const int draws = 2000, m = 3;
  for (int s = 0; s < draws; ++s)
    for (const auto& id : anonymize_random(pool, m, derive_seed(17, std::to_string(s))).selected_ids)
      counts[pool.index_of(id)] += 1;
  const double expected = static_cast<double>(draws * m) / 20.0;
  double chi2 = 0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 43.82);
}

TEST_CASE("range selection picks only the 60 degree vector") {
  EmbeddingPool pool(2);
  for (double deg : {0.0, 60.0, 90.0, 180.0}) pool.add(at_angle("d" + std::to_string(int(deg)), deg));
  const SpeakerEmbedding original{"orig", {1, 0}, {}};
  const auto ps = anonymize_range(pool, original, 0.5, 0.01);
  REQUIRE(ps.selected_ids == std::vector<std::string>{"d60"});
  CHECK(ps.embedding.vector == pool[1].vector);
  REQUIRE(ps.measured_dissimilarity);
  CHECK(std::abs(*ps.measured_dissimilarity - 0.5) < 1e-12);
}

TEST_CASE("range selection with a window covering everything gives the pool mean") {
  const auto pool = random_pool(25, 4, 6);
  const SpeakerEmbedding original{"o", {1, 2, 3, 4}, {}};
  const auto ps = anonymize_range(pool, original, 0.0, 1.5);
  CHECK(ps.selected_ids.size() == 25);
  check_close(ps.embedding.vector, pool.mean().vector);
}

TEST_CASE("range selection reports the closest reachable similarity") {
  EmbeddingPool pool(2);
  pool.add({"a", {0.8, 0.6}, {}});
  pool.add({"b", {0.0, 1.0}, {}});
  const SpeakerEmbedding original{"o", {1, 0}, {}};
  try {
    anonymize_range(pool, original, 0.99, 0.001);
    FAIL("expected EmptyWindowError");
  } catch (const EmptyWindowError& e) {
    CHECK(std::abs(e.closest() - 0.8) < 1e-12);
    CHECK(std::string(e.what()).find("0.8") != std::string::npos);
    CHECK(e.exit_code() == 3);
  }
}

TEST_CASE("range subsampling is seeded and stays inside the window") {
  const auto pool = random_pool(200, 3, 7);
  const SpeakerEmbedding original{"o", {1, 0, 0}, {}};
  const auto a = anonymize_range(pool, original, 0.0, 0.3, 5, 42);
  const auto b = anonymize_range(pool, original, 0.0, 0.3, 5, 42);
  CHECK(a.selected_ids.size() == 5);
  CHECK(a.selected_ids == b.selected_ids);
  for (const auto& id : a.selected_ids) {
    const double s = cosine_similarity(pool[pool.index_of(id)], original);
    CHECK(s >= -0.3);
    CHECK(s <= 0.3);
  }
}

TEST_CASE("nearest selection matches a brute-force ranking") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto pool = random_pool(50, 8, 100 + seed);
    const SpeakerEmbedding original = random_pool(1, 8, 900 + seed)[0];
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const auto& v = pool[i].vector;
      double d = 0, n1 = 0, n2 = 0;
      for (std::size_t k = 0; k < 8; ++k) {
        d += v[k] * original.vector[k];
        n1 += v[k] * v[k];
        n2 += original.vector[k] * original.vector[k];
      }
      ranked.push_back({-d / std::sqrt(n1 * n2), i});
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<double> mean(8, 0.0);
    for (int j = 0; j < 10; ++j)
      for (std::size_t k = 0; k < 8; ++k) mean[k] += pool[ranked[j].second].vector[k] / 10.0;
    const auto ps = anonymize_nearest(pool, original, 10);
    check_close(ps.embedding.vector, mean, 1e-12);

    const auto one = anonymize_nearest(pool, original, 1);
    CHECK(one.embedding.vector == pool[ranked[0].second].vector);
    check_close(anonymize_nearest(pool, original, 50).embedding.vector, pool.mean().vector);
  }
}

TEST_CASE("dispatch and spec validation") {
  const auto pool = random_pool(10, 3, 8);
  const SpeakerEmbedding original{"o", {1, 0, 0}, {}};
  AnonymizationSpec none{Strategy::kNone, 0, 0, 0, 0, std::nullopt};
  const auto same = anonymize(pool, none, &original);
  CHECK(same.embedding.vector == original.vector);
  REQUIRE(same.measured_dissimilarity);
  CHECK(*same.measured_dissimilarity == 0.0);

  AnonymizationSpec range{Strategy::kRange, 0, 0.5, 0.0, 0, std::nullopt};
  CHECK_THROWS_AS(range.validate(), ConfigError);
  range.eps = 0.1;
  range.sim = 1.5;
  CHECK_THROWS_AS(range.validate(), ConfigError);
  AnonymizationSpec random{Strategy::kRandom, 0, 0, 0, 0, std::nullopt};
  CHECK_THROWS_AS(random.validate(), ConfigError);
  AnonymizationSpec nearest{Strategy::kNearest, 3, 0, 0, 0, std::nullopt};
  CHECK_THROWS(anonymize(pool, nearest, nullptr));
  CHECK(parse_strategy("range") == Strategy::kRange);
  CHECK_THROWS_AS(parse_strategy("median"), ConfigError);
}
