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

#include "xvanon/anonymizer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xvanon/error.hpp"
#include "xvanon/rng.hpp"

namespace xvanon {
namespace {

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

PseudoSpeaker compose(const EmbeddingPool& pool, const std::vector<std::size_t>& indices,
                      const std::string& tag) {
  std::vector<SpeakerEmbedding> chosen;
  chosen.reserve(indices.size());
  PseudoSpeaker out;
  for (std::size_t i : indices) {
    chosen.push_back(pool[i]);
    out.selected_ids.push_back(pool[i].id);
  }
  out.embedding = mean_embedding(chosen, "pseudo-" + tag);
  return out;
}

void check_m(const EmbeddingPool& pool, std::size_t m) {
  if (pool.empty()) throw DataError("anonymize: empty pool");
  if (m == 0) throw ConfigError("anonymize: M must be positive");
  if (m > pool.size())
    throw DataError("anonymize: M=" + std::to_string(m) + " exceeds pool size " +
                    std::to_string(pool.size()));
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kNone: return "none";
    case Strategy::kRandom: return "random";
    case Strategy::kRange: return "range";
    case Strategy::kNearest: return "nearest";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "none") return Strategy::kNone;
  if (name == "random") return Strategy::kRandom;
  if (name == "range") return Strategy::kRange;
  if (name == "nearest") return Strategy::kNearest;
  throw ConfigError("unknown strategy '" + name + "' (expected none|random|range|nearest)");
}

void AnonymizationSpec::validate() const {
  switch (strategy) {
    case Strategy::kNone: break;
    case Strategy::kRandom:
    case Strategy::kNearest:
      if (m == 0) throw ConfigError(to_string(strategy) + " strategy requires M >= 1");
      break;
    case Strategy::kRange:
      if (!(sim >= -1.0 && sim <= 1.0)) throw ConfigError("range strategy requires sim in [-1, 1]");
      if (!(eps > 0.0)) throw ConfigError("range strategy requires eps > 0");
      if (range_subsample && *range_subsample == 0)
        throw ConfigError("range subsample must be positive");
      break;
  }
}

EmptyWindowError::EmptyWindowError(double sim, double eps, double closest)
    : DataError("range selection: no pool entry with similarity in [" + fmt(sim - eps) + ", " +
                fmt(sim + eps) + "] (s=" + fmt(sim) + ", eps=" + fmt(eps) +
                "); closest achievable similarity is " + fmt(closest)),
      sim_(sim),
      eps_(eps),
      closest_(closest) {}

PseudoSpeaker anonymize_random(const EmbeddingPool& pool, std::size_t m, std::uint64_t seed) {
  check_m(pool, m);
  Rng rng(seed);
  auto out = compose(pool, rng.sample_without_replacement(pool.size(), m),
                     "random-m" + std::to_string(m) + "-seed" + std::to_string(seed));
  out.spec = {Strategy::kRandom, m, 0.0, 0.0, seed, std::nullopt};
  return out;
}

PseudoSpeaker anonymize_range(const EmbeddingPool& pool, const SpeakerEmbedding& original,
                              double sim, double eps, std::optional<std::size_t> subsample,
                              std::uint64_t seed) {
  AnonymizationSpec spec{Strategy::kRange, 0, sim, eps, seed, subsample};
  spec.validate();
  if (pool.empty()) throw DataError("anonymize: empty pool");
  validate_embedding(original);
  const auto sims = similarities(pool, original);
  const double lo = sim - eps, hi = sim + eps;
  std::vector<std::size_t> window;
  std::size_t closest = 0;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    if (sims[i] >= lo && sims[i] <= hi) window.push_back(i);
    if (std::abs(sims[i] - sim) < std::abs(sims[closest] - sim)) closest = i;
  }
  if (window.empty()) throw EmptyWindowError(sim, eps, sims[closest]);
  if (subsample && *subsample < window.size()) {
    Rng rng(seed);
    auto pick = rng.sample_without_replacement(window.size(), *subsample);
    std::vector<std::size_t> sub;
    for (std::size_t p : pick) sub.push_back(window[p]);
    window = std::move(sub);
  }
  auto out = compose(pool, window, "range-s" + fmt(sim) + "-eps" + fmt(eps));
  out.measured_dissimilarity = dissimilarity(original, out.embedding);
  out.spec = spec;
  return out;
}

PseudoSpeaker anonymize_nearest(const EmbeddingPool& pool, const SpeakerEmbedding& original,
                                std::size_t m) {
  check_m(pool, m);
  std::vector<std::size_t> idx;
  for (const auto& n : nearest_neighbors(pool, original, m, NeighborOrder::kMostSimilar))
    idx.push_back(n.index);
  auto out = compose(pool, idx, "nearest-m" + std::to_string(m));
  out.measured_dissimilarity = dissimilarity(original, out.embedding);
  out.spec = {Strategy::kNearest, m, 0.0, 0.0, 0, std::nullopt};
  return out;
}

PseudoSpeaker anonymize(const EmbeddingPool& pool, const AnonymizationSpec& spec,
                        const SpeakerEmbedding* original) {
  spec.validate();
  PseudoSpeaker out;
  switch (spec.strategy) {
    case Strategy::kNone:
      if (!original) throw ConfigError("strategy 'none' needs an original embedding");
      out.embedding = *original;
      out.measured_dissimilarity = 0.0;
      break;
    case Strategy::kRandom:
      out = anonymize_random(pool, spec.m, spec.seed);
      if (original) out.measured_dissimilarity = dissimilarity(*original, out.embedding);
      break;
    case Strategy::kRange:
      if (!original) throw ConfigError("range strategy needs the original embedding");
      out = anonymize_range(pool, *original, spec.sim, spec.eps, spec.range_subsample, spec.seed);
      break;
    case Strategy::kNearest:
      if (!original) throw ConfigError("nearest strategy needs the original embedding");
      out = anonymize_nearest(pool, *original, spec.m);
      break;
  }
  out.spec = spec;
  return out;
}

SpeakerEmbedding recompose(const EmbeddingPool& pool, const std::vector<std::string>& ids) {
  std::vector<SpeakerEmbedding> chosen;
  chosen.reserve(ids.size());
  for (const auto& id : ids) chosen.push_back(pool[pool.index_of(id)]);
  return mean_embedding(chosen);
}

}  // namespace xvanon
