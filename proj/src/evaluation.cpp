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

#include "xvanon/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xvanon/error.hpp"
#include "xvanon/rng.hpp"

namespace xvanon {

using json = nlohmann::json;

EmbeddingMap to_map(const EmbeddingPool& pool) {
  EmbeddingMap m;
  for (const auto& e : pool.entries()) m.emplace(e.id, e);
  return m;
}

std::vector<Trial> parse_trials(std::string_view text, std::string_view source) {
  std::vector<Trial> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    Trial t;
    std::string label, extra;
    if (!(ls >> t.enroll_id)) continue;
    if (!(ls >> t.test_id >> label) || (ls >> extra))
      throw DataError(std::string(source) + ":" + std::to_string(line_no) +
                      ": expected 'enroll_id test_id tar|non'");
    if (label == "tar" || label == "target")
      t.label = TrialLabel::kTarget;
    else if (label == "non" || label == "nontarget")
      t.label = TrialLabel::kNonTarget;
    else
      throw DataError(std::string(source) + ":" + std::to_string(line_no) +
                      ": trial label must be 'tar' or 'non', got '" + label + "'");
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Trial> load_trials(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trial list " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_trials(ss.str(), path.string());
}

std::vector<ScoredTrial> score_trials(const EmbeddingMap& enroll, const EmbeddingMap& test,
                                      std::span<const Trial> trials) {
  std::vector<const SpeakerEmbedding*> ep(trials.size()), tp(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    auto e = enroll.find(trials[i].enroll_id);
    if (e == enroll.end())
      throw DataError("trial " + std::to_string(i + 1) + ": unknown enrollment id '" +
                      trials[i].enroll_id + "'");
    auto t = test.find(trials[i].test_id);
    if (t == test.end())
      throw DataError("trial " + std::to_string(i + 1) + ": unknown test id '" +
                      trials[i].test_id + "'");
    if (e->second.dim() != t->second.dim())
      throw DataError("trial " + std::to_string(i + 1) + ": embedding dims differ");
    validate_embedding(e->second);
    validate_embedding(t->second);
    ep[i] = &e->second;
    tp[i] = &t->second;
  }
  std::vector<ScoredTrial> out(trials.size());
  const auto n = static_cast<std::ptrdiff_t>(trials.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = {trials[k], cosine_similarity(*ep[k], *tp[k])};
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<OperatingPoint> operating_points(std::span<const double> target,
                                             std::span<const double> nontarget) {
  if (target.empty() || nontarget.empty())
    throw DataError("EER needs at least one target and one non-target score");
  for (auto s : {target, nontarget})
    for (double v : s)
      if (!std::isfinite(v)) throw DataError("EER: non-finite score");
  std::vector<double> tar(target.begin(), target.end()), non(nontarget.begin(), nontarget.end());
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());
  std::vector<double> uniq;
  uniq.reserve(tar.size() + non.size());
  std::merge(tar.begin(), tar.end(), non.begin(), non.end(), std::back_inserter(uniq));
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

  const double nt = static_cast<double>(tar.size()), nn = static_cast<double>(non.size());
  std::vector<OperatingPoint> pts;
  pts.reserve(uniq.size() + 1);
  pts.push_back({-std::numeric_limits<double>::infinity(), 1.0, 0.0});
  std::size_t ti = 0, ni = 0;
  for (std::size_t j = 0; j < uniq.size(); ++j) {
    while (ti < tar.size() && tar[ti] <= uniq[j]) ++ti;
    while (ni < non.size() && non[ni] <= uniq[j]) ++ni;
    const double thr = j + 1 < uniq.size() ? 0.5 * (uniq[j] + uniq[j + 1])
                                           : std::numeric_limits<double>::infinity();
    pts.push_back({thr, static_cast<double>(non.size() - ni) / nn, static_cast<double>(ti) / nt});
  }
  return pts;
}

EerResult compute_eer(std::span<const double> target, std::span<const double> nontarget) {
  const auto pts = operating_points(target, nontarget);
  EerResult r;
  r.n_target = target.size();
  r.n_nontarget = nontarget.size();
  // Moving from point j-1 to point j crosses the j-th smallest distinct score.
  std::vector<double> all(target.begin(), target.end());
  all.insert(all.end(), nontarget.begin(), nontarget.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  for (std::size_t j = 1; j < pts.size(); ++j) {
    const double d = pts[j].frr - pts[j].far;
    if (d < 0.0) continue;
    if (d == 0.0) {
      r.eer = pts[j].frr;
      r.threshold = pts[j].threshold;
    } else {
      const double d0 = pts[j - 1].frr - pts[j - 1].far;
      const double lambda = -d0 / (d - d0);
      r.eer = pts[j - 1].frr + lambda * (pts[j].frr - pts[j - 1].frr);
      r.threshold = all[j - 1];
    }
    return r;
  }
  throw InvariantError("compute_eer: FRR never reached FAR");
}

std::vector<std::string> nearest_nontarget_subset(const SpeakerEmbedding& target,
                                                  std::span<const SpeakerEmbedding> nontargets,
                                                  std::optional<std::size_t> k) {
  if (nontargets.empty()) throw DataError("nearest_nontarget_subset: no non-target speakers");
  const std::size_t want = k.value_or(nontargets.size());
  if (want == 0 || want > nontargets.size())
    throw DataError("nearest_nontarget_subset: K=" + std::to_string(want) + " but only " +
                    std::to_string(nontargets.size()) + " non-target speakers are available");
  EmbeddingPool pool(target.dim(), {nontargets.begin(), nontargets.end()});
  std::vector<std::string> ids;
  for (const auto& n : nearest_neighbors(pool, target, want)) ids.push_back(n.id);
  return ids;
}

// ---------------------------------------------------------------------------

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

WerResult wer(std::span<const std::string> ref, std::span<const std::string> hyp) {
  if (ref.empty()) throw DataError("wer: empty reference");
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1), at(i - 1, j) + 1,
                           at(i, j - 1) + 1});

  WerResult r;
  r.n_ref_words = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++r.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++r.deletions;
      --i;
    } else {
      ++r.insertions;
      --j;
    }
  }
  r.rate = static_cast<double>(r.substitutions + r.deletions + r.insertions) /
           static_cast<double>(n);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

struct TrialScores {
  std::vector<double> tar, non;
};

// Target-trial scores for one target speaker given its (possibly anonymized)
// test utterances.
void add_target_scores(const SpeakerEmbedding& enroll, std::span<const SpeakerEmbedding> tests,
                       std::vector<double>& out) {
  for (const auto& u : tests) out.push_back(cosine_similarity(enroll, u));
}

}  // namespace

std::string condition_label(const AnonymizationSpec& spec) {
  switch (spec.strategy) {
    case Strategy::kNone: return "none";
    case Strategy::kRandom: return "random-M" + std::to_string(spec.m);
    case Strategy::kNearest: return "nearest-M" + std::to_string(spec.m);
    case Strategy::kRange: return "range-s" + num(spec.sim) + "-eps" + num(spec.eps);
  }
  return "?";
}

std::uint64_t repetition_seed(std::uint64_t master, const std::string& condition, std::size_t rep) {
  return derive_seed(master, condition + "/rep" + std::to_string(rep));
}

SpeakerEmbedding resynthesize(const SpeakerEmbedding& utterance, const SpeakerEmbedding& original,
                              const SpeakerEmbedding& pseudo) {
  if (utterance.dim() != original.dim() || pseudo.dim() != original.dim())
    throw DataError("resynthesize: dimension mismatch");
  const double scale = norm(original.vector) / norm(pseudo.vector);
  SpeakerEmbedding out = utterance;
  out.id = utterance.id + "@anon";
  for (std::size_t i = 0; i < out.vector.size(); ++i)
    out.vector[i] = utterance.vector[i] - original.vector[i] + scale * pseudo.vector[i];
  return out;
}

BenchmarkReport run_anonymization_benchmark(const std::vector<SpeakerData>& targets,
                                            const std::vector<SpeakerData>& nontargets,
                                            const EmbeddingPool& pool,
                                            const std::vector<AnonymizationSpec>& conditions,
                                            const BenchmarkProtocol& protocol) {
  if (targets.empty()) throw DataError("benchmark: no target speakers");
  if (protocol.repetitions == 0) throw ConfigError("benchmark: repetitions must be >= 1");
  if (protocol.k_values.empty()) throw ConfigError("benchmark: no K values");

  struct Prepared {
    SpeakerEmbedding enroll, original;
  };
  auto prepare = [](const SpeakerData& s) {
    if (s.enroll.empty() || s.test.empty())
      throw DataError("benchmark: speaker '" + s.id + "' needs enroll and test utterances");
    return Prepared{mean_embedding(s.enroll, s.id + "/enroll"), mean_embedding(s.test, s.id)};
  };
  std::vector<Prepared> tp;
  for (const auto& s : targets) tp.push_back(prepare(s));
  std::vector<Prepared> np;
  for (const auto& s : nontargets) np.push_back(prepare(s));

  std::set<std::string> genders = {"all"};
  if (protocol.gender_partition)
    for (const auto& s : targets) genders.insert(s.gender);

  // Non-target test utterances per (target, K), fixed across conditions.
  const std::size_t n_k = protocol.k_values.size();
  std::vector<std::vector<std::vector<double>>> non_scores(n_k,
                                                           std::vector<std::vector<double>>(targets.size()));
  std::vector<std::vector<double>> before_tar(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto& spk = targets[t];
    add_target_scores(tp[t].enroll, spk.test, before_tar[t]);
    std::vector<SpeakerEmbedding> cands;
    std::vector<std::size_t> cand_index;
    for (std::size_t u = 0; u < nontargets.size(); ++u) {
      if (nontargets[u].id == spk.id) continue;
      if (protocol.gender_partition && nontargets[u].gender != spk.gender) continue;
      SpeakerEmbedding c = np[u].original;
      c.id = nontargets[u].id;
      cands.push_back(std::move(c));
      cand_index.push_back(u);
    }
    for (std::size_t ki = 0; ki < n_k; ++ki) {
      const auto ids = nearest_nontarget_subset(tp[t].original, cands, protocol.k_values[ki]);
      for (const auto& id : ids) {
        std::size_t u = 0;
        for (std::size_t c = 0; c < cands.size(); ++c)
          if (cands[c].id == id) u = cand_index[c];
        for (const auto& utt : nontargets[u].test)
          non_scores[ki][t].push_back(cosine_similarity(tp[t].enroll, utt));
      }
    }
  }

  auto eer_for = [&](const std::vector<std::vector<double>>& tar_by_spk, std::size_t ki,
                     const std::string& gender) {
    std::vector<double> tar, non;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (gender != "all" && targets[t].gender != gender) continue;
      tar.insert(tar.end(), tar_by_spk[t].begin(), tar_by_spk[t].end());
      non.insert(non.end(), non_scores[ki][t].begin(), non_scores[ki][t].end());
    }
    return compute_eer(tar, non).eer;
  };

  BenchmarkReport report;
  for (const auto& spec0 : conditions) {
    spec0.validate();
    const std::string label = condition_label(spec0);
    const std::size_t reps = spec0.strategy == Strategy::kRandom ? protocol.repetitions : 1;
    std::vector<std::vector<std::vector<double>>> after_tar(reps);
    std::vector<std::uint64_t> seeds(reps);
    double dis_min = std::numeric_limits<double>::infinity();
    double dis_max = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < reps; ++r) {
      seeds[r] = repetition_seed(protocol.seed, label, r);
      after_tar[r].resize(targets.size());
      for (std::size_t t = 0; t < targets.size(); ++t) {
        const auto& spk = targets[t];
        if (spec0.strategy == Strategy::kNone) {
          after_tar[r][t] = before_tar[t];
          report.provenance.push_back({label, r, spk.id, 0, {}, 0.0});
          dis_min = std::min(dis_min, 0.0);
          dis_max = std::max(dis_max, 0.0);
          continue;
        }
        AnonymizationSpec spec = spec0;
        spec.seed = derive_seed(seeds[r], spk.id);
        const PseudoSpeaker ps = anonymize(pool, spec, &tp[t].original);
        const double dis = ps.measured_dissimilarity.value();
        dis_min = std::min(dis_min, dis);
        dis_max = std::max(dis_max, dis);
        report.provenance.push_back({label, r, spk.id, spec.seed, ps.selected_ids, dis});
        std::vector<SpeakerEmbedding> anon;
        for (const auto& u : spk.test) anon.push_back(resynthesize(u, tp[t].original, ps.embedding));
        add_target_scores(tp[t].enroll, anon, after_tar[r][t]);
      }
    }
    for (std::size_t ki = 0; ki < n_k; ++ki) {
      for (const auto& g : genders) {
        ReportRow row;
        row.condition = label;
        row.spec = spec0;
        row.k = protocol.k_values[ki];
        row.gender = g;
        row.eer_before = eer_for(before_tar, ki, g);
        double sum = 0.0;
        for (std::size_t r = 0; r < reps; ++r) {
          row.eer_after_reps.push_back(eer_for(after_tar[r], ki, g));
          sum += row.eer_after_reps.back();
        }
        row.eer_after = sum / static_cast<double>(reps);
        row.dis_min = dis_min;
        row.dis_max = dis_max;
        row.seeds = seeds;
        report.rows.push_back(std::move(row));
      }
    }
  }
  return report;
}

std::string format_report_table(const BenchmarkReport& report) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %5s %7s %11s %11s %15s\n", "condition", "K", "gender",
                "EER before", "EER after", "dissimilarity");
  out << line;
  for (const auto& r : report.rows) {
    const std::string k = r.k ? std::to_string(*r.k) : "all";
    std::snprintf(line, sizeof line, "%-24s %5s %7s %10.2f%% %10.2f%% %7.2f-%-7.2f\n",
                  r.condition.c_str(), k.c_str(), r.gender.c_str(), 100.0 * r.eer_before,
                  100.0 * r.eer_after, r.dis_min, r.dis_max);
    out << line;
  }
  return out.str();
}

std::string format_report_records(const BenchmarkReport& report, const std::string& config_echo) {
  std::string out = json{{"record", "header"}, {"config", config_echo}}.dump() + "\n";
  for (const auto& r : report.rows) {
    json j = {{"record", "row"},
              {"condition", r.condition},
              {"strategy", to_string(r.spec.strategy)},
              {"K", r.k ? json(*r.k) : json("all")},
              {"M", r.spec.m},
              {"s", r.spec.sim},
              {"eps", r.spec.eps},
              {"gender", r.gender},
              {"eer_before", r.eer_before},
              {"eer_after", r.eer_after},
              {"eer_after_reps", r.eer_after_reps},
              {"dis_min", r.dis_min},
              {"dis_max", r.dis_max},
              {"seeds", r.seeds}};
    out += j.dump() + "\n";
  }
  for (const auto& p : report.provenance) {
    json j = {{"record", "provenance"},
              {"condition", p.condition},
              {"rep", p.repetition},
              {"speaker", p.speaker_id},
              {"seed", p.seed},
              {"selected", p.selected_ids},
              {"dissimilarity", p.dissimilarity}};
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace xvanon
