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

#include "xvanon/config.hpp"
#include "xvanon/error.hpp"

using namespace xvanon;

TEST_CASE("empty text gives the defaults") {
  const RunConfig c = parse_config("");
  CHECK_FALSE(c.seed.has_value());
  CHECK(c.jobs == 1);
  CHECK(c.anon.strategy == Strategy::kRandom);
  CHECK(c.anon.m == 100);
  CHECK(c.shared);
  CHECK(c.k_values.size() == 1);
  CHECK_FALSE(c.k_values[0].has_value());
  CHECK(c.simulation.n_speakers == 30);
  CHECK(c.simulation.m_grid == std::vector<std::size_t>{10, 50, 100, 200});
}

TEST_CASE("sections and lists are read") {
  const RunConfig c = parse_config(
      "[run]\nseed = 42\njobs = 3\n"
      "[anonymization]\nstrategy = range\nsim = 0.6\neps = 0.05\nshared = false\n"
      "[evaluation]\nk = 1, 5, all\nrepetitions = 2\ngender_partition = true\n"
      "[simulation]\nstrategies = none,nearest\nm_grid = 3,7\nspread = 0\n");
  CHECK(c.seed == 42u);
  CHECK(c.jobs == 3);
  CHECK(c.anon.strategy == Strategy::kRange);
  CHECK(c.anon.sim == 0.6);
  CHECK_FALSE(c.shared);
  REQUIRE(c.k_values.size() == 3);
  CHECK(c.k_values[0] == 1u);
  CHECK(c.k_values[1] == 5u);
  CHECK_FALSE(c.k_values[2].has_value());
  CHECK(c.gender_partition);
  CHECK(c.simulation.strategies == std::vector<Strategy>{Strategy::kNone, Strategy::kNearest});
  CHECK(c.simulation.spread == 0.0);
}

TEST_CASE("unknown keys and sections are rejected") {
  CHECK_THROWS_AS(parse_config("[run]\nsed = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[runn]\nseed = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("seed = 1\n"), ConfigError);
  try {
    parse_config("[anonymization]\nstrategyy = random\n", "my.ini");
    FAIL("typo accepted");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("my.ini") != std::string::npos);
    CHECK(msg.find("strategyy") != std::string::npos);
  }
}

TEST_CASE("bad values are config errors") {
  CHECK_THROWS_AS(parse_config("[run]\nseed = -3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[run]\njobs = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[anonymization]\nstrategy = median\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[anonymization]\nstrategy = range\nsim = 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[anonymization]\nrng = pcg64\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[features]\nsample_rate = 22050\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[features]\nmask_unvoiced = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[evaluation]\nk = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[simulation]\nm_grid = 10,600\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[run\nseed = 1\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/xvanon.ini"), ConfigError);
}

TEST_CASE("the echo parses back to the same settings") {
  const RunConfig c = parse_config(
      "[run]\nseed = 18446744073709551615\n[paths]\npool = /data/pool.jsonl\n"
      "[anonymization]\nstrategy = range\nsim = 0.1\neps = 0.025\nrange_subsample = 4\n"
      "[evaluation]\nk = all,3\n[simulation]\ns_grid = 0.9,0.33333333333333331\n");
  const std::string e = c.echo();
  CHECK(parse_config(e).echo() == e);
  CHECK(parse_config(e).simulation.s_grid == c.simulation.s_grid);
  CHECK(parse_config(RunConfig{}.echo()).echo() == RunConfig{}.echo());
}

TEST_CASE("seed requirement and derived model configs") {
  RunConfig c;
  CHECK_THROWS_AS(c.require_seed("random"), ConfigError);
  c.seed = 9;
  CHECK(c.require_seed("random") == 9);
  CHECK(c.acoustic_config().input_dim == 1944 + 2 + 512);
  c.ppg_tap = PpgTap::kSigmoid6;
  CHECK(c.acoustic_config().input_dim == 1024 + 2 + 512);
  CHECK(c.nsf_config().cond_input_dim == 80 + 2 + 512);
  CHECK(parse_k("all") == std::nullopt);
  CHECK(parse_k("4") == 4u);
}
