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
#include <optional>
#include <string>
#include <vector>

#include "xvanon/embedding.hpp"
#include "xvanon/error.hpp"

namespace xvanon {

enum class Strategy { kNone, kRandom, kRange, kNearest };

std::string to_string(Strategy s);
/// Accepts "none", "random", "range", "nearest"; throws ConfigError otherwise.
Strategy parse_strategy(const std::string& name);

/// How a pseudo speaker is composed. `m` applies to random/nearest, `sim` and
/// `eps` to range. `range_subsample`, when set, averages a seeded random
/// subset of that many window candidates instead of all of them.
struct AnonymizationSpec {
  Strategy strategy = Strategy::kRandom;
  std::size_t m = 0;
  double sim = 0.0;
  double eps = 0.0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> range_subsample;

  /// Throws ConfigError when strategy-specific fields are missing or invalid.
  void validate() const;
};

struct PseudoSpeaker {
  SpeakerEmbedding embedding;
  std::vector<std::string> selected_ids;
  std::optional<double> measured_dissimilarity;
  AnonymizationSpec spec;
};

/// Thrown by range selection when no pool entry falls in the window. Carries
/// the closest similarity that the pool can offer, so callers can widen eps.
class EmptyWindowError : public DataError {
 public:
  EmptyWindowError(double sim, double eps, double closest);
  double sim() const { return sim_; }
  double eps() const { return eps_; }
  double closest() const { return closest_; }

 private:
  double sim_, eps_, closest_;
};

PseudoSpeaker anonymize_random(const EmbeddingPool& pool, std::size_t m, std::uint64_t seed);

PseudoSpeaker anonymize_range(const EmbeddingPool& pool, const SpeakerEmbedding& original,
                              double sim, double eps,
                              std::optional<std::size_t> subsample = std::nullopt,
                              std::uint64_t seed = 0);

PseudoSpeaker anonymize_nearest(const EmbeddingPool& pool, const SpeakerEmbedding& original,
                                std::size_t m);

/// Dispatch on spec.strategy. `original` is required by range and nearest;
/// when given it also fills measured_dissimilarity for every strategy.
/// Strategy::kNone returns the original unchanged.
PseudoSpeaker anonymize(const EmbeddingPool& pool, const AnonymizationSpec& spec,
                        const SpeakerEmbedding* original);

/// Mean of the pool entries named by ids, in the given order.
SpeakerEmbedding recompose(const EmbeddingPool& pool, const std::vector<std::string>& ids);

}  // namespace xvanon
