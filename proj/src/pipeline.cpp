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

#include "xvanon/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xvanon/error.hpp"
#include "xvanon/rng.hpp"
#include "xvanon/signal.hpp"

namespace xvanon::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Errors are captured per
// item and returned in input order (empty string = success).
template <class Fn>
std::vector<std::string> for_each_item(std::size_t n, [[maybe_unused]] int jobs, Fn&& fn) {
  std::vector<std::string> errors(n);
  const auto total = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for num_threads(jobs) schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < total; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      fn(k);
    } catch (const std::exception& e) {
      errors[k] = e.what();
      if (errors[k].empty()) errors[k] = "unknown error";
    }
  }
  return errors;
}

std::string strip_suffix(const std::string& name, const std::string& suffix) {
  if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
    return name.substr(0, name.size() - suffix.size());
  return {};
}

std::string speaker_of(const SpeakerEmbedding& e) {
  auto it = e.metadata.find("speaker");
  return it == e.metadata.end() ? e.id : it->second;
}

}  // namespace

fs::path weights_path(const RunConfig& config, Component c) {
  return config.weights_dir / (to_string(c) + ".weights");
}

ModelWeights load_component(const RunConfig& config, Component c) {
  const fs::path p = weights_path(config, c);
  if (!fs::exists(p))
    throw ConfigError("missing " + to_string(c) + " weights: " + p.string() +
                      " (run 'xvanon init-weights' or point [paths] weights_dir at them)");
  return load_weights(p);
}

void cmd_init_weights(const RunConfig& config, const std::vector<Component>& components) {
  const std::uint64_t seed = config.require_seed("init-weights");
  if (config.weights_dir.empty()) throw ConfigError("init-weights needs [paths] weights_dir");
  ensure_dir(config.weights_dir);
  for (Component c : components) {
    ModelConfig mc;
    switch (c) {
      case Component::kXVector: mc = config.xvector_config(); break;
      case Component::kPpg: mc = config.ppg_config(); break;
      case Component::kAcoustic: mc = config.acoustic_config(); break;
      case Component::kNsf: mc = config.nsf_config(); break;
    }
    save_weights(init_weights(mc, derive_seed(seed, to_string(c))), weights_path(config, c));
  }
}

// ---------------------------------------------------------------------------

ExtractSummary cmd_extract(const RunConfig& config, const std::vector<fs::path>& wavs) {
  if (wavs.empty()) throw ConfigError("extract: no inputs");
  const ModelWeights xw = load_component(config, Component::kXVector);
  const ModelWeights pw = load_component(config, Component::kPpg);
  ensure_dir(config.output_dir);

  std::vector<std::string> utt_ids(wavs.size()), spk_ids(wavs.size());
  std::set<std::string> seen;
  for (std::size_t i = 0; i < wavs.size(); ++i) {
    utt_ids[i] = wavs[i].stem().string();
    spk_ids[i] = wavs[i].parent_path().filename().string();
    if (spk_ids[i].empty()) spk_ids[i] = utt_ids[i];
    if (!seen.insert(utt_ids[i]).second)
      throw DataError("extract: duplicate utterance id '" + utt_ids[i] + "'");
  }

  F0Options f0_opts;
  f0_opts.threshold = config.f0_threshold;
  std::vector<SpeakerEmbedding> xvecs(wavs.size());
  const auto errors = for_each_item(wavs.size(), config.jobs, [&](std::size_t i) {
    const Waveform w = read_wav(wavs[i], config.sample_rate);
    const fs::path base = config.output_dir / utt_ids[i];
    SpeakerEmbedding x = xvector_forward(mel_features(w, 24, 0.01), xw, utt_ids[i]);
    validate_embedding(x);
    x.metadata["speaker"] = spk_ids[i];
    const FeatureMatrix ppg = ppg_forward(mel_features(w, 40, 0.01), pw, config.ppg_tap);
    save_features(ppg, fs::path(base.string() + ".ppg.jsonl"));
    save_features(f0_to_features(extract_f0(w, f0_opts)), fs::path(base.string() + ".f0.jsonl"));
    save_features(mel_features(w, 80, kF0Hop), fs::path(base.string() + ".mel.jsonl"));
    xvecs[i] = std::move(x);
  });

  std::string failures;
  for (std::size_t i = 0; i < wavs.size(); ++i)
    if (!errors[i].empty()) failures += "\n  " + wavs[i].string() + ": " + errors[i];
  if (!failures.empty()) throw DataError("extract failed for some inputs:" + failures);

  const std::size_t dim = xvecs.front().dim();
  EmbeddingPool utt_pool(dim);
  std::vector<std::string> spk_order;
  std::map<std::string, std::vector<SpeakerEmbedding>> by_spk;
  for (std::size_t i = 0; i < wavs.size(); ++i) {
    if (!by_spk.count(spk_ids[i])) spk_order.push_back(spk_ids[i]);
    by_spk[spk_ids[i]].push_back(xvecs[i]);
    utt_pool.add(xvecs[i]);
  }
  EmbeddingPool spk_pool(dim);
  for (const auto& s : spk_order) {
    SpeakerEmbedding m = mean_embedding(by_spk[s], s);
    m.metadata["utterances"] = std::to_string(by_spk[s].size());
    spk_pool.add(std::move(m));
  }
  save_pool(utt_pool, config.output_dir / "utt_xvectors.jsonl");
  save_pool(spk_pool, config.output_dir / "spk_xvectors.jsonl");
  return {wavs.size(), spk_order.size()};
}

// ---------------------------------------------------------------------------

std::vector<PseudoSpeaker> cmd_anonymize(const RunConfig& config,
                                         const std::vector<fs::path>& embedding_files) {
  if (embedding_files.empty()) throw ConfigError("anonymize: no inputs");
  config.anon.validate();
  const bool needs_seed = config.anon.strategy == Strategy::kRandom ||
                          (config.anon.strategy == Strategy::kRange && config.anon.range_subsample);
  const std::uint64_t master = needs_seed ? config.require_seed("strategy " + to_string(config.anon.strategy))
                                          : config.seed.value_or(0);
  if (config.pool.empty()) throw ConfigError("anonymize needs [paths] pool");
  if (!fs::exists(config.pool)) throw ConfigError("pool file not found: " + config.pool.string());
  const EmbeddingPool pool = load_pool(config.pool);

  std::vector<SpeakerEmbedding> inputs;
  for (const auto& f : embedding_files) {
    const EmbeddingPool p = load_pool(f);
    inputs.insert(inputs.end(), p.entries().begin(), p.entries().end());
  }
  std::vector<std::string> group_of(inputs.size());
  std::vector<std::string> group_order;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    group_of[i] = config.shared ? speaker_of(inputs[i]) : inputs[i].id;
    if (!members.count(group_of[i])) group_order.push_back(group_of[i]);
    members[group_of[i]].push_back(i);
  }

  std::vector<PseudoSpeaker> pseudo(group_order.size());
  std::map<std::string, std::size_t> group_index;
  for (std::size_t g = 0; g < group_order.size(); ++g) group_index[group_order[g]] = g;
  const auto errors = for_each_item(group_order.size(), config.jobs, [&](std::size_t g) {
    std::vector<SpeakerEmbedding> mem;
    for (std::size_t i : members.at(group_order[g])) mem.push_back(inputs[i]);
    const SpeakerEmbedding original =
        mem.size() == 1 ? mem.front() : mean_embedding(mem, group_order[g]);
    AnonymizationSpec spec = config.anon;
    spec.seed = derive_seed(master, group_order[g]);
    pseudo[g] = anonymize(pool, spec, &original);
  });
  for (std::size_t g = 0; g < group_order.size(); ++g)
    if (!errors[g].empty()) throw DataError("anonymize '" + group_order[g] + "': " + errors[g]);

  ensure_dir(config.output_dir);
  EmbeddingPool out(pool.dim());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    SpeakerEmbedding e = pseudo[group_index[group_of[i]]].embedding;
    e.id = inputs[i].id;
    e.metadata = inputs[i].metadata;
    e.metadata["pseudo_group"] = group_of[i];
    out.add(std::move(e));
  }
  save_pool(out, config.output_dir / "pseudo_xvectors.jsonl");

  std::string prov;
  for (std::size_t g = 0; g < group_order.size(); ++g) {
    const auto& p = pseudo[g];
    std::vector<std::string> ids;
    for (std::size_t i : members[group_order[g]]) ids.push_back(inputs[i].id);
    json j = {{"group", group_order[g]},
              {"inputs", ids},
              {"strategy", to_string(p.spec.strategy)},
              {"M", p.spec.m},
              {"s", p.spec.sim},
              {"eps", p.spec.eps},
              {"seed", p.spec.seed},
              {"rng", config.rng},
              {"selected", p.selected_ids},
              {"dissimilarity", p.measured_dissimilarity ? json(*p.measured_dissimilarity) : json()}};
    prov += j.dump() + "\n";
  }
  write_text(config.output_dir / "provenance.jsonl", prov);
  return pseudo;
}

// ---------------------------------------------------------------------------

std::vector<fs::path> cmd_synthesize(const RunConfig& config, const std::vector<fs::path>& inputs,
                                     const std::optional<fs::path>& pseudo_file) {
  if (inputs.empty()) throw ConfigError("synthesize: no inputs");
  const ModelWeights aw = load_component(config, Component::kAcoustic);
  const ModelWeights nw = load_component(config, Component::kNsf);
  const auto& ncfg = nw.config_as<NsfConfig>();
  const auto& acfg = aw.config_as<AcousticConfig>();
  if (ncfg.cond_input_dim < acfg.mel_dim + 2)
    throw DataError("synthesize: NSF condition width too small for the acoustic mel size");
  const std::size_t xdim = ncfg.cond_input_dim - acfg.mel_dim - 2;
  std::optional<EmbeddingPool> pseudo;
  if (pseudo_file) pseudo = load_pool(*pseudo_file);
  const std::uint64_t master = config.seed.value_or(0);
  ensure_dir(config.output_dir);

  std::vector<fs::path> outputs(inputs.size());
  const auto errors = for_each_item(inputs.size(), config.jobs, [&](std::size_t i) {
    const std::string name = inputs[i].filename().string();
    FeatureMatrix feats = load_features(inputs[i]);
    std::string utt;
    FeatureMatrix aligned;
    if (feats.kind == FeatureKind::kAligned) {
      utt = strip_suffix(name, ".aligned.jsonl");
      aligned = std::move(feats);
    } else if (feats.kind == FeatureKind::kPpg) {
      utt = strip_suffix(name, ".ppg.jsonl");
      if (utt.empty()) throw DataError("PPG input must be named <utt>.ppg.jsonl");
      const F0Contour f0 = features_to_f0(load_features(inputs[i].parent_path() / (utt + ".f0.jsonl")));
      if (!pseudo) throw ConfigError("synthesizing from PPG needs --pseudo <pool file>");
      const SpeakerEmbedding* x = nullptr;
      if (pseudo->contains(utt)) {
        x = &(*pseudo)[pseudo->index_of(utt)];
      } else if (pseudo->size() == 1) {
        x = &(*pseudo)[0];
      } else {
        const std::string spk = inputs[i].parent_path().filename().string();
        for (const auto& e : pseudo->entries())
          if (speaker_of(e) == spk || e.id == spk) x = &e;
      }
      if (!x) throw DataError("no pseudo speaker for utterance '" + utt + "'");
      aligned = align_streams(feats, f0, *x, config.mask_unvoiced);
      save_features(aligned, config.output_dir / (utt + ".aligned.jsonl"));
    } else {
      throw DataError("synthesize expects aligned or ppg features, got " + to_string(feats.kind));
    }
    if (utt.empty()) utt = inputs[i].stem().string();
    if (aligned.dim() != acfg.input_dim)
      throw DataError("aligned width " + std::to_string(aligned.dim()) + " but acoustic model expects " +
                      std::to_string(acfg.input_dim) + " (frames: " +
                      std::to_string(aligned.num_frames()) + ")");
    const std::size_t ppg_dim = aligned.dim() - 2 - xdim;
    SpeakerEmbedding xvec;
    xvec.id = utt;
    const auto row0 = aligned.frames.row(0);
    xvec.vector.assign(row0.begin() + static_cast<std::ptrdiff_t>(ppg_dim + 2), row0.end());
    const FeatureMatrix mel = acoustic_forward(aligned, aw, FeedbackMode::kFree);
    const F0Contour f0 = f0_from_aligned(aligned, ppg_dim);
    const Waveform wav = nsf_forward(mel, f0, xvec, nw, derive_seed(master, utt));
    outputs[i] = config.output_dir / (utt + ".wav");
    write_wav(outputs[i], wav);
  });
  std::string failures;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (!errors[i].empty()) failures += "\n  " + inputs[i].string() + ": " + errors[i];
  if (!failures.empty()) throw DataError("synthesize failed for some inputs:" + failures);
  return outputs;
}

// ---------------------------------------------------------------------------

namespace {

std::map<std::string, std::vector<std::string>> load_transcripts(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open transcripts " + path.string());
  std::map<std::string, std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    auto words = split_words(line);
    if (words.empty()) continue;
    const std::string id = words.front();
    words.erase(words.begin());
    out[id] = std::move(words);
  }
  return out;
}

}  // namespace

std::string cmd_evaluate(const RunConfig& config, const EvaluateInputs& in) {
  const EmbeddingMap enroll = to_map(load_pool(in.enroll));
  const EmbeddingMap test = to_map(load_pool(in.test));
  const auto trials = load_trials(in.trials);
  const auto scored = score_trials(enroll, test, trials);
  ensure_dir(config.output_dir);

  std::string scores;
  for (const auto& s : scored) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", s.score);
    scores += s.trial.enroll_id + " " + s.trial.test_id + " " +
              (s.trial.label == TrialLabel::kTarget ? "tar" : "non") + " " + buf + "\n";
  }
  write_text(config.output_dir / "scores.txt", scores);

  // Speaker-level test vectors for the nearest-K filter.
  std::map<std::string, std::vector<SpeakerEmbedding>> test_by_spk;
  for (const auto& [id, e] : test) test_by_spk[speaker_of(e)].push_back(e);
  std::map<std::string, SpeakerEmbedding> spk_level;
  for (const auto& [spk, v] : test_by_spk) spk_level[spk] = mean_embedding(v, spk);

  std::set<std::string> genders;
  for (const auto& s : scored) {
    const std::string g = enroll.at(s.trial.enroll_id).gender();
    if (g != "unknown") genders.insert(g);
  }

  std::ostringstream table;
  std::string records = json{{"record", "header"}, {"config", config.echo()}}.dump() + "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %5s %10s %12s %8s %8s\n", "gender", "K", "EER", "threshold",
                "#tar", "#non");
  table << line;
  for (const auto& k : config.k_values) {
    std::vector<bool> keep(scored.size(), true);
    if (k) {
      std::map<std::string, std::set<std::string>> non_spk;
      for (const auto& s : scored)
        if (s.trial.label == TrialLabel::kNonTarget)
          non_spk[s.trial.enroll_id].insert(speaker_of(test.at(s.trial.test_id)));
      std::map<std::string, std::set<std::string>> allowed;
      for (const auto& [e, spks] : non_spk) {
        std::vector<SpeakerEmbedding> cands;
        for (const auto& s : spks) cands.push_back(spk_level.at(s));
        const auto ids = nearest_nontarget_subset(enroll.at(e), cands, k);
        allowed[e] = {ids.begin(), ids.end()};
      }
      for (std::size_t i = 0; i < scored.size(); ++i)
        if (scored[i].trial.label == TrialLabel::kNonTarget)
          keep[i] = allowed[scored[i].trial.enroll_id].count(
                        speaker_of(test.at(scored[i].trial.test_id))) != 0;
    }
    std::vector<std::string> groups = {"all"};
    groups.insert(groups.end(), genders.begin(), genders.end());
    for (const auto& g : groups) {
      std::vector<double> tar, non;
      for (std::size_t i = 0; i < scored.size(); ++i) {
        if (!keep[i]) continue;
        if (g != "all" && enroll.at(scored[i].trial.enroll_id).gender() != g) continue;
        (scored[i].trial.label == TrialLabel::kTarget ? tar : non).push_back(scored[i].score);
      }
      if (tar.empty() || non.empty()) {
        if (g == "all") throw DataError("evaluate: need both target and non-target trials");
        continue;
      }
      const EerResult r = compute_eer(tar, non);
      const std::string ks = k ? std::to_string(*k) : "all";
      std::snprintf(line, sizeof line, "%-8s %5s %9.2f%% %12.6f %8zu %8zu\n", g.c_str(), ks.c_str(),
                    100.0 * r.eer, r.threshold, r.n_target, r.n_nontarget);
      table << line;
      records += json{{"record", "eer"},     {"gender", g},           {"K", ks},
                      {"eer", r.eer},        {"threshold", r.threshold}, {"n_target", r.n_target},
                      {"n_nontarget", r.n_nontarget}}
                     .dump() +
                 "\n";
    }
  }

  if (in.ref_transcripts && in.hyp_transcripts) {
    const auto ref = load_transcripts(*in.ref_transcripts);
    const auto hyp = load_transcripts(*in.hyp_transcripts);
    WerResult total;
    for (const auto& [id, words] : ref) {
      if (words.empty()) continue;
      auto it = hyp.find(id);
      const std::vector<std::string> empty;
      const WerResult r = wer(words, it == hyp.end() ? empty : it->second);
      total.substitutions += r.substitutions;
      total.deletions += r.deletions;
      total.insertions += r.insertions;
      total.n_ref_words += r.n_ref_words;
    }
    if (total.n_ref_words == 0) throw DataError("evaluate: reference transcripts are empty");
    total.rate = static_cast<double>(total.substitutions + total.deletions + total.insertions) /
                 static_cast<double>(total.n_ref_words);
    std::snprintf(line, sizeof line, "WER %.2f%% (S=%zu D=%zu I=%zu N=%zu)\n", 100.0 * total.rate,
                  total.substitutions, total.deletions, total.insertions, total.n_ref_words);
    table << line;
    records += json{{"record", "wer"},          {"rate", total.rate},
                    {"substitutions", total.substitutions}, {"deletions", total.deletions},
                    {"insertions", total.insertions},       {"n_ref_words", total.n_ref_words}}
                   .dump() +
               "\n";
  }
  write_text(config.output_dir / "eval_report.txt", table.str());
  write_text(config.output_dir / "eval_report.jsonl", records);
  return table.str();
}

// ---------------------------------------------------------------------------

SyntheticData make_synthetic(const SimulationConfig& sim, std::uint64_t seed) {
  auto unit_gaussian = [&](Rng& rng) {
    std::vector<double> v(sim.dim);
    for (double& x : v) x = rng.normal();
    const double n = norm(v);
    for (double& x : v) x /= n;
    return v;
  };
  char buf[64];
  SyntheticData out{{}, EmbeddingPool(sim.dim)};
  Rng spk_rng(derive_seed(seed, "simulate/speakers"));
  const std::size_t n_enroll = sim.utterances / 2;
  for (std::size_t s = 0; s < sim.n_speakers; ++s) {
    SpeakerData spk;
    std::snprintf(buf, sizeof buf, "spk%03zu", s);
    spk.id = buf;
    spk.gender = s % 2 == 0 ? "f" : "m";
    const auto mean = unit_gaussian(spk_rng);
    for (std::size_t u = 0; u < sim.utterances; ++u) {
      SpeakerEmbedding e;
      std::snprintf(buf, sizeof buf, "%s-u%02zu", spk.id.c_str(), u);
      e.id = buf;
      e.metadata = {{"speaker", spk.id}, {"gender", spk.gender}};
      e.vector = mean;
      for (double& x : e.vector) x += sim.spread * spk_rng.normal();
      (u < n_enroll ? spk.enroll : spk.test).push_back(std::move(e));
    }
    out.speakers.push_back(std::move(spk));
  }
  Rng pool_rng(derive_seed(seed, "simulate/pool"));
  for (std::size_t p = 0; p < sim.pool_size; ++p) {
    SpeakerEmbedding e;
    std::snprintf(buf, sizeof buf, "pool%04zu", p);
    e.id = buf;
    e.metadata = {{"gender", p % 2 == 0 ? "f" : "m"}};
    e.vector = unit_gaussian(pool_rng);
    out.pool.add(std::move(e));
  }
  return out;
}

std::vector<AnonymizationSpec> simulation_conditions(const SimulationConfig& sim) {
  std::vector<AnonymizationSpec> out;
  for (Strategy st : sim.strategies) {
    switch (st) {
      case Strategy::kNone: out.push_back({Strategy::kNone, 0, 0.0, 0.0, 0, std::nullopt}); break;
      case Strategy::kRandom:
      case Strategy::kNearest:
        for (std::size_t m : sim.m_grid) out.push_back({st, m, 0.0, 0.0, 0, std::nullopt});
        break;
      case Strategy::kRange:
        for (double s : sim.s_grid) out.push_back({st, 0, s, sim.eps, 0, std::nullopt});
        break;
    }
  }
  return out;
}

BenchmarkReport cmd_simulate(const RunConfig& config) {
  config.validate();
  const std::uint64_t seed = config.require_seed("simulate");
  const SyntheticData data = make_synthetic(config.simulation, seed);
  BenchmarkProtocol protocol;
  protocol.k_values = config.k_values;
  protocol.repetitions = config.repetitions;
  protocol.gender_partition = config.gender_partition;
  protocol.seed = seed;
  const BenchmarkReport report = run_anonymization_benchmark(
      data.speakers, data.speakers, data.pool, simulation_conditions(config.simulation), protocol);

  ensure_dir(config.output_dir);
  std::string text;
  std::istringstream echo(config.echo());
  for (std::string l; std::getline(echo, l);) text += "# " + l + "\n";
  text += format_report_table(report);
  write_text(config.output_dir / "simulate_report.txt", text);
  write_text(config.output_dir / "simulate_report.jsonl", format_report_records(report, config.echo()));
  return report;
}

}  // namespace xvanon::pipeline
