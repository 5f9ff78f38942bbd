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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xvanon/config.hpp"
#include "xvanon/evaluation.hpp"
#include "xvanon/neural.hpp"

// Batch commands behind the CLI. Every command reads its inputs from disk
// and writes its artifacts under config.output_dir; outputs are a pure
// function of (inputs, config, seed). Failures surface as ConfigError
// (exit 2), DataError (exit 3) or InvariantError (exit 4).
namespace xvanon::pipeline {

/// File name of a component's weights inside config.weights_dir.
std::filesystem::path weights_path(const RunConfig& config, Component c);

/// Loads a component's weights; a missing file is a ConfigError naming it.
ModelWeights load_component(const RunConfig& config, Component c);

/// Writes seeded random weights for the given components.
void cmd_init_weights(const RunConfig& config, const std::vector<Component>& components);

struct ExtractSummary {
  std::size_t utterances = 0;
  std::size_t speakers = 0;
};

/// Per utterance (id = file stem, speaker = parent directory name): x-vector,
/// PPG, F0 and mel files. Writes utt_xvectors.jsonl and the speaker-level
/// means in spk_xvectors.jsonl. Every file is attempted; failures are
/// collected into one DataError.
ExtractSummary cmd_extract(const RunConfig& config, const std::vector<std::filesystem::path>& wavs);

/// One pseudo speaker per input record, or per speaker group ("speaker"
/// metadata, else the id) when config.shared. Writes pseudo_xvectors.jsonl
/// and provenance.jsonl.
std::vector<PseudoSpeaker> cmd_anonymize(const RunConfig& config,
                                         const std::vector<std::filesystem::path>& embedding_files);

/// Synthesizes one WAV per input. An input is either an aligned feature file
/// or a PPG file with a sibling F0 file (<utt>.f0.jsonl) plus a pseudo
/// speaker from `pseudo_file` (matched by utterance id, speaker metadata,
/// or the only entry).
std::vector<std::filesystem::path> cmd_synthesize(
    const RunConfig& config, const std::vector<std::filesystem::path>& inputs,
    const std::optional<std::filesystem::path>& pseudo_file);

struct EvaluateInputs {
  std::filesystem::path enroll;
  std::filesystem::path test;
  std::filesystem::path trials;
  std::optional<std::filesystem::path> ref_transcripts;
  std::optional<std::filesystem::path> hyp_transcripts;
};

/// Scores trials, writes scores.txt and eval_report.{txt,jsonl} with pooled
/// and per-gender EERs for every configured K, and WER when transcripts are
/// given.
std::string cmd_evaluate(const RunConfig& config, const EvaluateInputs& in);

struct SyntheticData {
  std::vector<SpeakerData> speakers;
  EmbeddingPool pool;
};

/// Gaussian speaker clusters around unit-norm means and a pool of unit-norm
/// external speakers, all derived from the master seed.
SyntheticData make_synthetic(const SimulationConfig& sim, std::uint64_t seed);

std::vector<AnonymizationSpec> simulation_conditions(const SimulationConfig& sim);

/// Runs the benchmark on synthetic data; writes simulate_report.txt and
/// simulate_report.jsonl.
BenchmarkReport cmd_simulate(const RunConfig& config);

}  // namespace xvanon::pipeline
