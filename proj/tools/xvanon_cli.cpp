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

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "xvanon/config.hpp"
#include "xvanon/error.hpp"
#include "xvanon/pipeline.hpp"

namespace fs = std::filesystem;
using namespace xvanon;

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out_dir;
  std::optional<std::string> weights_dir;
  std::optional<std::string> pool;
};

struct AnonFlags {
  std::optional<std::string> strategy;
  std::optional<std::size_t> m;
  std::optional<double> sim;
  std::optional<double> eps;
  std::optional<bool> shared;
};

RunConfig resolve(const GlobalFlags& g) {
  RunConfig c = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (g.jobs) c.jobs = *g.jobs;
  if (g.out_dir) c.output_dir = *g.out_dir;
  if (g.weights_dir) c.weights_dir = *g.weights_dir;
  if (g.pool) c.pool = *g.pool;
  c.validate();
#ifdef _OPENMP
  omp_set_num_threads(c.jobs);
#endif
  return c;
}

std::vector<fs::path> to_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xvanon: x-vector speaker anonymization pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config, "INI configuration file");
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--weights-dir", g.weights_dir, "Directory holding <component>.weights");
  app.add_option("--pool", g.pool, "External speaker pool (JSONL)");

  std::vector<std::string> inputs;

  auto* extract = app.add_subcommand("extract", "WAVs to x-vectors, PPG, F0 and mel features");
  extract->add_option("wavs", inputs, "16 kHz mono 16-bit WAV files")->required();

  AnonFlags a;
  auto* anonymize = app.add_subcommand("anonymize", "Compose pseudo speakers from the pool");
  anonymize->add_option("embeddings", inputs, "Embedding files (JSONL)")->required();
  anonymize->add_option("--strategy", a.strategy, "none | random | range | nearest");
  anonymize->add_option("--m", a.m, "Number of pool speakers to average");
  anonymize->add_option("--sim", a.sim, "Target cosine similarity (range)");
  anonymize->add_option("--eps", a.eps, "Similarity window half-width (range)");
  anonymize->add_flag("--shared,!--no-shared", a.shared, "One pseudo speaker per speaker group");

  std::optional<std::string> pseudo;
  auto* synthesize = app.add_subcommand("synthesize", "Aligned features (or PPG + F0 + pseudo) to WAV");
  synthesize->add_option("inputs", inputs, "<utt>.aligned.jsonl or <utt>.ppg.jsonl files")->required();
  synthesize->add_option("--pseudo", pseudo, "Pseudo speaker file for PPG inputs");

  pipeline::EvaluateInputs ev;
  std::optional<std::string> ref, hyp;
  auto* evaluate = app.add_subcommand("evaluate", "EER and WER reports");
  evaluate->add_option("--enroll", ev.enroll, "Enrollment embeddings")->required();
  evaluate->add_option("--test", ev.test, "Test embeddings")->required();
  evaluate->add_option("--trials", ev.trials, "Trial list")->required();
  evaluate->add_option("--ref", ref, "Reference transcripts");
  evaluate->add_option("--hyp", hyp, "Hypothesis transcripts");

  auto* simulate = app.add_subcommand("simulate", "Synthetic anonymization benchmark");

  std::vector<std::string> components = {"xvector", "ppg", "acoustic", "nsf"};
  auto* init = app.add_subcommand("init-weights", "Write seeded random weights");
  init->add_option("--components", components, "Components to initialize");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "xvanon: " << e.what() << "\n";
    return 2;
  }

  try {
    RunConfig config = resolve(g);
    if (*extract) {
      const auto s = pipeline::cmd_extract(config, to_paths(inputs));
      std::printf("extracted %zu utterances from %zu speakers\n", s.utterances, s.speakers);
    } else if (*anonymize) {
      if (a.strategy) config.anon.strategy = parse_strategy(*a.strategy);
      if (a.m) config.anon.m = *a.m;
      if (a.sim) config.anon.sim = *a.sim;
      if (a.eps) config.anon.eps = *a.eps;
      if (a.shared) config.shared = *a.shared;
      config.validate();
      const auto p = pipeline::cmd_anonymize(config, to_paths(inputs));
      std::printf("wrote %zu pseudo speakers\n", p.size());
    } else if (*synthesize) {
      std::optional<fs::path> pf;
      if (pseudo) pf = *pseudo;
      const auto out = pipeline::cmd_synthesize(config, to_paths(inputs), pf);
      for (const auto& p : out) std::printf("%s\n", p.string().c_str());
    } else if (*evaluate) {
      if (ref) ev.ref_transcripts = *ref;
      if (hyp) ev.hyp_transcripts = *hyp;
      if (ev.ref_transcripts.has_value() != ev.hyp_transcripts.has_value())
        throw ConfigError("--ref and --hyp must be given together");
      std::fputs(pipeline::cmd_evaluate(config, ev).c_str(), stdout);
    } else if (*simulate) {
      std::fputs(format_report_table(pipeline::cmd_simulate(config)).c_str(), stdout);
    } else if (*init) {
      std::vector<Component> cs;
      for (const auto& c : components) cs.push_back(parse_component(c));
      pipeline::cmd_init_weights(config, cs);
    }
  } catch (const Error& e) {
    std::cerr << "xvanon: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "xvanon: internal error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
