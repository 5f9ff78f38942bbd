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

#include "xvanon/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xvanon/error.hpp"
#include "xvanon/kernels.hpp"

namespace xvanon {

using json = nlohmann::json;

std::string SpeakerEmbedding::gender() const {
  auto it = metadata.find("gender");
  return it == metadata.end() ? std::string("unknown") : it->second;
}

void validate_embedding(const SpeakerEmbedding& e) {
  if (e.vector.empty()) throw DataError("embedding '" + e.id + "' is empty");
  for (double v : e.vector)
    if (!std::isfinite(v)) throw DataError("embedding '" + e.id + "' has a non-finite component");
  if (!(norm(e.vector) > 0.0)) throw DataError("embedding '" + e.id + "' has zero norm");
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DataError("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) +
                    " vs " + std::to_string(b.size()) + ")");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  const double na = norm(a), nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw DataError("cosine_similarity: zero-norm vector");
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  return cosine_similarity(std::span<const double>(a.vector), std::span<const double>(b.vector));
}

double dissimilarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  return 1.0 - cosine_similarity(a, b);
}

SpeakerEmbedding mean_embedding(std::span<const SpeakerEmbedding> set, std::string id) {
  if (set.empty()) throw DataError("mean_embedding: empty set");
  const std::size_t dim = set.front().dim();
  SpeakerEmbedding out;
  out.vector.assign(dim, 0.0);
  for (const auto& e : set) {
    if (e.dim() != dim)
      throw DataError("mean_embedding: dimension mismatch at '" + e.id + "'");
    for (std::size_t i = 0; i < dim; ++i) out.vector[i] += e.vector[i];
  }
  const double n = static_cast<double>(set.size());
  for (double& v : out.vector) v /= n;
  // Equal inputs must come back exactly; the running sum can round away.
  if (std::all_of(set.begin(), set.end(),
                  [&](const SpeakerEmbedding& e) { return e.vector == set.front().vector; }))
    out.vector = set.front().vector;
  if (!(norm(out.vector) > 0.0)) throw DataError("mean_embedding: mean has zero norm");
  if (id.empty()) {
    id = "mean(" + set.front().id;
    if (set.size() > 1) id += "," + (set.size() > 2 ? std::string("...,") : "") + set.back().id;
    id += ")[" + std::to_string(set.size()) + "]";
  }
  out.id = std::move(id);
  return out;
}

EmbeddingPool::EmbeddingPool(std::size_t dim, std::vector<SpeakerEmbedding> entries)
    : dim_(dim) {
  entries_.reserve(entries.size());
  for (auto& e : entries) add(std::move(e));
}

void EmbeddingPool::add(SpeakerEmbedding e) {
  if (e.dim() != dim_)
    throw DataError("pool: entry '" + e.id + "' has dim " + std::to_string(e.dim()) +
                    ", pool dim is " + std::to_string(dim_));
  validate_embedding(e);
  if (by_id_.count(e.id)) throw DataError("pool: duplicate id '" + e.id + "'");
  by_id_.emplace(e.id, entries_.size());
  entries_.push_back(std::move(e));
}

std::size_t EmbeddingPool::index_of(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) throw DataError("pool: unknown id '" + std::string(id) + "'");
  return it->second;
}

bool EmbeddingPool::contains(std::string_view id) const {
  return by_id_.count(std::string(id)) != 0;
}

SpeakerEmbedding EmbeddingPool::mean() const { return mean_embedding(entries_, "pool_mean"); }

EmbeddingPool EmbeddingPool::filter(const std::string& key, const std::string& value) const {
  EmbeddingPool out(dim_);
  for (const auto& e : entries_) {
    auto it = e.metadata.find(key);
    if (it != e.metadata.end() && it->second == value) out.add(e);
  }
  return out;
}

std::vector<double> similarities(const EmbeddingPool& pool, const SpeakerEmbedding& query) {
  if (query.dim() != pool.dim())
    throw DataError("query '" + query.id + "' dim " + std::to_string(query.dim()) +
                    " does not match pool dim " + std::to_string(pool.dim()));
  auto s = kernels::cosine_scores(pool.entries(), query.vector);
  for (double& v : s) v = std::clamp(v, -1.0, 1.0);
  return s;
}

std::vector<Neighbor> nearest_neighbors(const EmbeddingPool& pool, const SpeakerEmbedding& query,
                                        std::size_t m, NeighborOrder order) {
  if (pool.empty()) throw DataError("nearest_neighbors: empty pool");
  if (m == 0 || m > pool.size())
    throw DataError("nearest_neighbors: M=" + std::to_string(m) + " but pool has " +
                    std::to_string(pool.size()) + " entries");
  const auto sims = similarities(pool, query);
  std::vector<Neighbor> all;
  all.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) all.push_back({pool[i].id, sims[i], i});
  const bool most = order == NeighborOrder::kMostSimilar;
  auto better = [most](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity)
      return most ? a.similarity > b.similarity : a.similarity < b.similarity;
    return a.id < b.id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m), all.end(), better);
  all.resize(m);
  return all;
}

EmbeddingPool parse_pool(std::string_view text, std::string_view source) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw DataError(std::string(source) + ":" + std::to_string(line_no) + ": " + what);
  };
  auto parse_line = [&](const std::string& l) {
    try {
      return json::parse(l);
    } catch (const json::exception& e) {
      fail(std::string("malformed record: ") + e.what());
    }
    return json();
  };

  if (!std::getline(in, line)) {
    line_no = 1;
    fail("missing header record");
  }
  ++line_no;
  const json header = parse_line(line);
  if (!header.is_object() || !header.contains("dim") || !header["dim"].is_number_unsigned() ||
      !header.contains("count") || !header["count"].is_number_unsigned())
    fail("header must be {\"dim\":<positive int>,\"count\":<int>}");
  const auto dim = header["dim"].get<std::size_t>();
  const auto count = header["count"].get<std::size_t>();
  if (dim == 0) fail("header dim must be positive");

  EmbeddingPool pool(dim);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json rec = parse_line(line);
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string() ||
        !rec.contains("vec") || !rec["vec"].is_array())
      fail("record needs string 'id' and array 'vec'");
    SpeakerEmbedding e;
    e.id = rec["id"].get<std::string>();
    for (const auto& v : rec["vec"]) {
      if (!v.is_number()) fail("record '" + e.id + "': non-numeric vector component");
      e.vector.push_back(v.get<double>());
    }
    if (e.vector.size() != dim)
      fail("record '" + e.id + "' has dim " + std::to_string(e.vector.size()) +
           ", header says " + std::to_string(dim));
    if (rec.contains("gender")) {
      if (!rec["gender"].is_string()) fail("record '" + e.id + "': gender must be a string");
      e.metadata["gender"] = rec["gender"].get<std::string>();
    }
    if (rec.contains("meta")) {
      if (!rec["meta"].is_object()) fail("record '" + e.id + "': meta must be an object");
      for (const auto& [k, v] : rec["meta"].items()) {
        if (!v.is_string()) fail("record '" + e.id + "': meta values must be strings");
        e.metadata[k] = v.get<std::string>();
      }
    }
    if (pool.contains(e.id)) fail("duplicate id '" + e.id + "'");
    try {
      pool.add(std::move(e));
    } catch (const DataError& err) {
      fail(err.what());
    }
  }
  if (pool.size() != count)
    throw DataError(std::string(source) + ": header count " + std::to_string(count) +
                    " but file holds " + std::to_string(pool.size()) + " records");
  return pool;
}

std::string format_pool(const EmbeddingPool& pool) {
  std::string out = json{{"dim", pool.dim()}, {"count", pool.size()}}.dump();
  out += '\n';
  for (const auto& e : pool.entries()) {
    json rec = json::object();
    rec["id"] = e.id;
    json meta = json::object();
    for (const auto& [k, v] : e.metadata) {
      if (k == "gender")
        rec["gender"] = v;
      else
        meta[k] = v;
    }
    if (!meta.empty()) rec["meta"] = meta;
    rec["vec"] = e.vector;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

EmbeddingPool load_pool(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open pool file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_pool(ss.str(), path.string());
}

void save_pool(const EmbeddingPool& pool, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write pool file " + path.string());
  out << format_pool(pool);
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace xvanon
