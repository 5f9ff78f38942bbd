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
#include <set>

#include "xvanon/rng.hpp"

using namespace xvanon;

namespace {

// Written out from the published constants rather than shared with the library.
std::uint64_t oracle_seed(std::uint64_t master, std::string_view id) {
  std::uint64_t h = 14695981039346656037ull;
  auto eat = [&](unsigned char b) {
    h ^= b;
    h *= 1099511628211ull;
  };
  for (int i = 0; i < 8; ++i) eat(static_cast<unsigned char>(master >> (8 * i)));
  for (char c : id) eat(static_cast<unsigned char>(c));
  h += 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

}  // namespace

TEST_CASE("derive_seed follows FNV-1a then the SplitMix64 finalizer") {
  for (std::uint64_t master : {0ull, 1ull, 42ull, 0xdeadbeefcafef00dull})
    for (const char* id : {"", "spk001", "utt/0007", "random-M10/rep3"})
      CHECK(derive_seed(master, id) == oracle_seed(master, id));
}

TEST_CASE("derive_seed separates ids and masters") {
  std::set<std::uint64_t> seen;
  for (int m = 0; m < 20; ++m)
    for (int i = 0; i < 50; ++i) seen.insert(derive_seed(m, "item" + std::to_string(i)));
  CHECK(seen.size() == 1000);
}

TEST_CASE("engine is the standard mt19937_64") {
  Rng a(5489);
  std::mt19937_64 ref(5489);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == ref());
}

TEST_CASE("uniform and below stay in range") {
  Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(7) < 7);
  }
  CHECK(r.below(1) == 0);
}

TEST_CASE("normal has unit moments") {
  Rng r(11);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(s2 / n - mean * mean - 1.0) < 0.02);
}

TEST_CASE("sample_without_replacement draws distinct indices") {
  Rng r(9);
  const auto s = r.sample_without_replacement(100, 100);
  CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 100);
  const auto t = r.sample_without_replacement(10, 3);
  CHECK(t.size() == 3);
  CHECK(std::set<std::size_t>(t.begin(), t.end()).size() == 3);
  for (auto i : t) CHECK(i < 10);

  Rng a(77), b(77);
  CHECK(a.sample_without_replacement(50, 10) == b.sample_without_replacement(50, 10));
}
