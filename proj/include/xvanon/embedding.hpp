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
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace xvanon {

inline constexpr std::size_t kDefaultEmbeddingDim = 512;

/// One speaker (or utterance) embedding. `metadata` carries free-form string
/// attributes such as "gender" or "source".
struct SpeakerEmbedding {
  std::string id;
  std::vector<double> vector;
  std::map<std::string, std::string> metadata;

  std::size_t dim() const { return vector.size(); }
  std::string gender() const;

  bool operator==(const SpeakerEmbedding&) const = default;
};

/// Throws DataError unless every component is finite and the norm is positive.
void validate_embedding(const SpeakerEmbedding& e);

double norm(std::span<const double> v);

double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b);

/// 1 - cosine similarity, in [0, 2].
double dissimilarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b);

/// Componentwise arithmetic mean, not renormalized. The id defaults to
/// "mean(<first>,...,<last>)[n]" so the provenance of the vector is visible.
SpeakerEmbedding mean_embedding(std::span<const SpeakerEmbedding> set, std::string id = {});

enum class NeighborOrder { kMostSimilar, kLeastSimilar };

struct Neighbor {
  std::string id;
  double similarity;
  std::size_t index;  // position in the pool
};

/// Immutable-after-construction collection of equal-dimension embeddings
/// with unique ids. Entry order is significant and preserved by pool files.
class EmbeddingPool {
 public:
  explicit EmbeddingPool(std::size_t dim = kDefaultEmbeddingDim) : dim_(dim) {}
  EmbeddingPool(std::size_t dim, std::vector<SpeakerEmbedding> entries);

  /// Validates the embedding and its dim, and rejects duplicate ids.
  void add(SpeakerEmbedding e);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<SpeakerEmbedding>& entries() const { return entries_; }
  const SpeakerEmbedding& operator[](std::size_t i) const { return entries_[i]; }

  /// Index of the entry with this id; throws DataError if absent.
  std::size_t index_of(std::string_view id) const;
  bool contains(std::string_view id) const;

  /// Mean of every entry.
  SpeakerEmbedding mean() const;

  /// Entries whose metadata key equals value (e.g. gender pre-filtering).
  EmbeddingPool filter(const std::string& key, const std::string& value) const;

  bool operator==(const EmbeddingPool& o) const {
    return dim_ == o.dim_ && entries_ == o.entries_;
  }

 private:
  std::size_t dim_;
  std::vector<SpeakerEmbedding> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// Cosine similarity of `query` against every pool entry, in pool order.
std::vector<double> similarities(const EmbeddingPool& pool, const SpeakerEmbedding& query);

/// The M entries ranked by similarity to `query`. Ties go to the smaller id.
std::vector<Neighbor> nearest_neighbors(const EmbeddingPool& pool, const SpeakerEmbedding& query,
                                        std::size_t m,
                                        NeighborOrder order = NeighborOrder::kMostSimilar);

// Pool files are UTF-8 JSON lines. The first line is the header
// {"dim":D,"count":N}; each following line is one record
// {"id":"...","gender":"...","meta":{...},"vec":[...]}, where gender and meta
// are optional and vec holds D shortest-round-trip decimals.
EmbeddingPool load_pool(const std::filesystem::path& path);
void save_pool(const EmbeddingPool& pool, const std::filesystem::path& path);

EmbeddingPool parse_pool(std::string_view text, std::string_view source = "<memory>");
std::string format_pool(const EmbeddingPool& pool);

}  // namespace xvanon
