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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xvanon/anonymizer.hpp"
#include "xvanon/neural.hpp"

namespace xvanon {

/// Synthetic speaker/pool generation for `simulate`.
struct SimulationConfig {
  std::size_t n_speakers = 30;
  std::size_t utterances = 20;  // per speaker; first half enrolls, second half is test
  double spread = 0.05;         // per-dimension utterance noise std
  std::size_t pool_size = 500;
  std::size_t dim = 64;
  std::vector<Strategy> strategies = {Strategy::kNone, Strategy::kRandom};
  std::vector<std::size_t> m_grid = {10, 50, 100, 200};
  std::vector<double> s_grid = {0.9, 0.8, 0.6, 0.4};
  double eps = 0.05;
};

struct ModelSettings {
  std::size_t xvector_speakers = 1000;
  bool pool_variance = false;
  std::size_t nsf_channels = 64;
};

// Plain-text key/value configuration with [sections]:
//
//   [run]            seed, jobs
//   [paths]          pool, weights_dir, input_dir, output_dir
//   [features]       sample_rate, f0_threshold, ppg_tap, mask_unvoiced
//   [models]         xvector_speakers, pool_variance, nsf_channels
//   [anonymization]  strategy, m, sim, eps, shared, rng, range_subsample
//   [evaluation]     k, repetitions, gender_partition
//   [simulation]     n_speakers, utterances, spread, pool_size, dim,
//                    strategies, m_grid, s_grid, eps
//
// Lists are comma-separated. Unknown sections or keys are rejected.
struct RunConfig {
  std::optional<std::uint64_t> seed;
  int jobs = 1;

  std::filesystem::path pool;
  std::filesystem::path weights_dir;
  std::filesystem::path input_dir;
  std::filesystem::path output_dir = ".";

  int sample_rate = kSampleRate;
  double f0_threshold = 0.45;
  PpgTap ppg_tap = PpgTap::kSoftmax;
  bool mask_unvoiced = true;

  ModelSettings models;

  AnonymizationSpec anon{Strategy::kRandom, 100, 0.0, 0.0, 0, std::nullopt};
  bool shared = true;
  std::string rng = "mt19937_64";

  std::vector<std::optional<std::size_t>> k_values = {std::nullopt};
  std::size_t repetitions = 5;
  bool gender_partition = false;

  SimulationConfig simulation;

  /// Structural checks that do not touch the filesystem.
  void validate() const;

  /// Canonical text form of every effective setting; parse(echo()) == *this.
  std::string echo() const;

  /// The master seed, or ConfigError when a random strategy needs one.
  std::uint64_t require_seed(std::string_view why) const;

  XVectorConfig xvector_config() const;
  PpgConfig ppg_config() const;
  AcousticConfig acoustic_config() const;
  NsfConfig nsf_config() const;
};

RunConfig parse_config(std::string_view text, std::string_view source = "<memory>");
RunConfig load_config(const std::filesystem::path& path);

/// "all" or a positive integer.
std::optional<std::size_t> parse_k(const std::string& text);

}  // namespace xvanon
