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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xvanon/anonymizer.hpp"
#include "xvanon/embedding.hpp"

namespace xvanon {

// ---------------------------------------------------------------------------
// Trials and scoring

enum class TrialLabel { kTarget, kNonTarget };

struct Trial {
  std::string enroll_id;
  std::string test_id;
  TrialLabel label = TrialLabel::kTarget;

  bool operator==(const Trial&) const = default;
};

struct ScoredTrial {
  Trial trial;
  double score = 0.0;
};

using EmbeddingMap = std::map<std::string, SpeakerEmbedding>;

EmbeddingMap to_map(const EmbeddingPool& pool);

/// Trial list text: one "enroll_id test_id tar|non" per line; blank lines
/// and '#' comments are skipped.
std::vector<Trial> parse_trials(std::string_view text, std::string_view source = "<memory>");
std::vector<Trial> load_trials(const std::filesystem::path& path);

/// Cosine score per trial, in trial order. Throws DataError naming any
/// unresolvable id.
std::vector<ScoredTrial> score_trials(const EmbeddingMap& enroll, const EmbeddingMap& test,
                                      std::span<const Trial> trials);

// ---------------------------------------------------------------------------
// EER

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
};

/// Operating points between consecutive distinct scores: the first sits
/// below every score (FRR 0, FAR 1), the last above (FRR 1, FAR 0). FRR
/// counts targets below the threshold, FAR non-targets above it.
struct OperatingPoint {
  double threshold;
  double far;
  double frr;
};
std::vector<OperatingPoint> operating_points(std::span<const double> target,
                                             std::span<const double> nontarget);

/// EER at the first operating point where FRR >= FAR, interpolating
/// linearly from the previous point when they are not exactly equal. The
/// reported threshold is the score at which the crossing happens.
EerResult compute_eer(std::span<const double> target, std::span<const double> nontarget);

/// Ids of the K non-target speakers most similar to the target (ties to the
/// smaller id); all of them, ranked, when K is empty.
std::vector<std::string> nearest_nontarget_subset(const SpeakerEmbedding& target,
                                                  std::span<const SpeakerEmbedding> nontargets,
                                                  std::optional<std::size_t> k);

// ---------------------------------------------------------------------------
// WER

struct WerResult {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t n_ref_words = 0;
  double rate = 0.0;
};

std::vector<std::string> split_words(std::string_view text);

/// Unit-cost Levenshtein alignment over words; on ties the backtrace prefers
/// substitution, then deletion, then insertion.
WerResult wer(std::span<const std::string> ref, std::span<const std::string> hyp);

// ---------------------------------------------------------------------------
// Anonymization benchmark

/// A speaker's utterance-level embeddings. Enrollment is the mean of
/// `enroll`; the speaker-level vector that gets anonymized is the mean of
/// `test`.
struct SpeakerData {
  std::string id;
  std::string gender = "unknown";
  std::vector<SpeakerEmbedding> enroll;
  std::vector<SpeakerEmbedding> test;
};

struct BenchmarkProtocol {
  std::vector<std::optional<std::size_t>> k_values = {std::nullopt};  // empty = all
  std::size_t repetitions = 5;
  bool gender_partition = false;
  std::uint64_t seed = 0;
};

struct ReportRow {
  std::string condition;
  AnonymizationSpec spec;
  std::optional<std::size_t> k;
  std::string gender = "all";
  double eer_before = 0.0;
  double eer_after = 0.0;  // mean over repetitions
  std::vector<double> eer_after_reps;
  double dis_min = 0.0;
  double dis_max = 0.0;
  std::vector<std::uint64_t> seeds;  // per repetition
};

/// Which pool entries built the pseudo speaker of one (condition, rep, speaker).
struct ProvenanceRecord {
  std::string condition;
  std::size_t repetition = 0;
  std::string speaker_id;
  std::uint64_t seed = 0;
  std::vector<std::string> selected_ids;
  double dissimilarity = 0.0;
};

struct BenchmarkReport {
  std::vector<ReportRow> rows;
  std::vector<ProvenanceRecord> provenance;
};

/// Short label for a condition, e.g. "random-M10", "range-s0.8", "none".
std::string condition_label(const AnonymizationSpec& spec);

/// Seed used for one repetition of a condition; speakers then derive their
/// own seed from it with their id.
std::uint64_t repetition_seed(std::uint64_t master, const std::string& condition, std::size_t rep);

/// Replaces the speaker identity of an utterance embedding: the utterance's
/// offset from the original speaker-level vector is kept and added to the
/// pseudo speaker, rescaled to the original's norm.
SpeakerEmbedding resynthesize(const SpeakerEmbedding& utterance, const SpeakerEmbedding& original,
                              const SpeakerEmbedding& pseudo);

/// For every condition, repetition and target speaker: anonymize the
/// speaker's test utterances, score target trials against the original
/// enrollment and non-target trials against the (original) test utterances
/// of the K nearest non-target speakers, and compare EER before and after.
BenchmarkReport run_anonymization_benchmark(const std::vector<SpeakerData>& targets,
                                            const std::vector<SpeakerData>& nontargets,
                                            const EmbeddingPool& pool,
                                            const std::vector<AnonymizationSpec>& conditions,
                                            const BenchmarkProtocol& protocol);

std::string format_report_table(const BenchmarkReport& report);

/// JSON lines: a header carrying `config_echo`, one record per row, then one
/// per provenance entry.
std::string format_report_records(const BenchmarkReport& report, const std::string& config_echo);

}  // namespace xvanon
