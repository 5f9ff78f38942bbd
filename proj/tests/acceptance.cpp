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

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "xvanon/evaluation.hpp"
#include "xvanon/neural.hpp"
#include "xvanon/pipeline.hpp"
#include "xvanon/rng.hpp"
#include "xvanon/signal.hpp"

using namespace xvanon;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void report(int index, const char* name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++g_failures;
  std::printf("[%s] %d %-28s %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(XVANON_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---------------------------------------------------------------------------

Outcome eer_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng r(20260101);
  double worst = 0;
  bool thresholds_agree = true;
  for (int set = 0; set < 1000; ++set) {
    const std::size_t nt = 1 + r.below(200), nn = 1 + r.below(200);
    const double shift = r.uniform(-1, 3);
    const bool coarse = set % 4 == 0;  // quantized scores force ties
    std::vector<double> tar(nt), non(nn);
    for (double& x : tar) x = shift + r.normal();
    for (double& x : non) x = r.normal();
    if (coarse) {
      for (double& x : tar) x = std::round(x * 5) / 5;
      for (double& x : non) x = std::round(x * 5) / 5;
    }
    const auto got = compute_eer(tar, non);
    const auto want = oracle::brute_force_eer(tar, non);
    worst = std::max(worst, std::abs(got.eer - want.eer));
    thresholds_agree &= got.threshold == want.threshold;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 10.0 && thresholds_agree,
          fmt("1000 sets, max |EER - oracle| = %.3g (tol 1e-9), thresholds %s, %.2f s (< 10 s)", worst,
              thresholds_agree ? "identical" : "DIFFER", secs)};
}

struct DirectionRun {
  BenchmarkReport report;
  pipeline::SyntheticData data;
  double seconds = 0;
};

const DirectionRun& direction_run() {
  static const DirectionRun run = [] {
    const auto t0 = std::chrono::steady_clock::now();
    SimulationConfig sim;  // 30 speakers, 20 utts, spread 0.05, pool 500, 64-d
    sim.strategies = {Strategy::kNone, Strategy::kRandom};
    sim.m_grid = {10, 50, 100, 200};
    DirectionRun out{{}, pipeline::make_synthetic(sim, 2026), 0};
    BenchmarkProtocol p;
    p.repetitions = 5;
    p.seed = 2026;
    out.report = run_anonymization_benchmark(out.data.speakers, out.data.speakers, out.data.pool,
                                             pipeline::simulation_conditions(sim), p);
    out.seconds = seconds_since(t0);
    return out;
  }();
  return run;
}

Outcome anonymization_direction() {
  const auto& run = direction_run();
  bool ok = run.seconds < 60.0;
  std::string detail;
  double baseline = 0;
  for (const auto& row : run.report.rows) {
    baseline = row.eer_before;
    ok &= row.eer_before <= 0.05;
    if (row.condition == "none") continue;
    ok &= row.eer_after >= 0.25 && row.eer_after_reps.size() == 5;
    detail += fmt(" %s=%.2f%%", row.condition.c_str(), 100 * row.eer_after);
  }
  return {ok, fmt("baseline %.2f%% (<= 5%%); after:", 100 * baseline) + detail +
                  fmt(" (each >= 25%%); %.2f s (< 60 s)", run.seconds)};
}

Outcome range_monotonicity() {
  // Target along e0; pool entries at similarities 0.000, 0.001, ..., 0.950
  // with random directions in the orthogonal complement.
  const std::size_t dim = 32;
  Rng r(7);
  SpeakerEmbedding target{"target", std::vector<double>(dim, 0.0), {}};
  target.vector[0] = 1.0;
  EmbeddingPool pool(dim);
  for (int k = 0; k <= 950; ++k) {
    const double s = k / 1000.0;
    std::vector<double> u(dim, 0.0);
    for (std::size_t i = 1; i < dim; ++i) u[i] = r.normal();
    const double n = norm(u);
    std::vector<double> v(dim);
    v[0] = s;
    for (std::size_t i = 1; i < dim; ++i) v[i] = std::sqrt(1 - s * s) * u[i] / n;
    pool.add({fmt("c%04d", k), v, {}});
  }
  const double eps = 0.05;
  double prev = -1;
  bool monotone = true, inside = true;
  std::string detail;
  for (double d : {0.1, 0.2, 0.4, 0.6}) {
    const double s = 1.0 - d;
    const auto ps = anonymize_range(pool, target, s, eps);
    for (const auto& id : ps.selected_ids) {
      const double c = cosine_similarity(pool[pool.index_of(id)], target);
      inside &= c >= s - eps && c <= s + eps;
    }
    const double measured = *ps.measured_dissimilarity;
    monotone &= measured >= prev;
    prev = measured;
    detail += fmt(" d=%.1f->%.4f(%zu)", d, measured, ps.selected_ids.size());
  }
  return {monotone && inside, std::string("measured dissimilarity") + detail +
                                  (monotone ? ", non-decreasing" : ", NOT monotone") +
                                  (inside ? ", all candidates in window" : ", candidate outside window")};
}

Outcome dissimilarity_range() {
  const auto& run = direction_run();
  std::map<std::string, const SpeakerData*> by_id;
  for (const auto& s : run.data.speakers) by_id[s.id] = &s;
  bool ok = true;
  std::size_t checked = 0;
  std::string detail;
  for (const auto& row : run.report.rows) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t records = 0;
    for (const auto& pr : run.report.provenance) {
      if (pr.condition != row.condition) continue;
      ++records;
      double dis = 0.0;
      if (!pr.selected_ids.empty()) {
        const SpeakerData& s = *by_id.at(pr.speaker_id);
        dis = dissimilarity(mean_embedding(s.test, s.id), recompose(run.data.pool, pr.selected_ids));
      }
      ok &= dis == pr.dissimilarity;
      lo = std::min(lo, dis);
      hi = std::max(hi, dis);
    }
    const std::size_t reps = row.spec.strategy == Strategy::kRandom ? 5 : 1;
    ok &= records == reps * run.data.speakers.size();
    ok &= row.dis_min == lo && row.dis_max == hi;
    checked += records;
    if (row.condition != "none") detail += fmt(" %s:%.3f-%.3f", row.condition.c_str(), lo, hi);
  }
  return {ok, fmt("%zu provenance records recomposed;", checked) + detail +
                  (ok ? " (exact match)" : " (MISMATCH)")};
}

Outcome architecture_shapes() {
  std::string bad;
  const auto xw = init_weights(XVectorConfig{}, 1);
  const std::pair<const char*, std::vector<std::size_t>> layer_shapes[] = {
      {"tdnn1.w", {512, 120}}, {"tdnn2.w", {512, 1536}}, {"tdnn3.w", {512, 1536}},
      {"tdnn4.w", {512, 512}}, {"tdnn5.w", {1500, 512}}, {"seg6.w", {512, 3000}},
      {"seg7.w", {512, 512}}};
  for (const auto& [name, shape] : layer_shapes)
    if (xw.at(name).shape != shape) bad += std::string(" ") + name;
  Rng r(2);
  auto feats = [&](std::size_t t, std::size_t d) {
    FeatureMatrix m;
    m.frames = Matrix(t, d);
    for (double& v : m.frames.data()) v = r.normal();
    return m;
  };
  for (std::size_t t : {15u, 16u, 37u, 300u})
    if (xvector_forward(feats(t, 24), xw).dim() != 512) bad += fmt(" xvec(T=%zu)", t);

  const auto pw = init_weights(PpgConfig{}, 3);
  const auto ppg = ppg_forward(feats(40, 40), pw, PpgTap::kSoftmax);
  double worst_sum = 0;
  for (std::size_t t = 0; t < ppg.num_frames(); ++t) {
    const auto row = ppg.frames.row(t);
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0));
  }
  if (ppg.dim() != 1944 || ppg.num_frames() != 40 || worst_sum > 1e-9) bad += " ppg";

  const auto aw = init_weights(AcousticConfig{}, 4);
  const auto mel = acoustic_forward(feats(30, 1944 + 2 + 512), aw, FeedbackMode::kFree);
  if (mel.num_frames() != 30 || mel.dim() != 80) bad += " acoustic";

  const NsfConfig ncfg;
  const auto nw = init_weights(ncfg, 5);
  F0Contour f0;
  for (int t = 0; t < 20; ++t) f0.values.push_back(t < 5 ? 0.0 : 180.0);
  SpeakerEmbedding x{"x", std::vector<double>(512, 0.05), {}};
  const auto wav = nsf_forward(feats(20, 80), f0, x, nw, 6);
  if (wav.samples.size() != 20 * 80) bad += " nsf-length";
  if (ncfg.dilations() != std::vector<std::size_t>{1, 2, 4, 8, 16, 32, 64, 128, 256, 512})
    bad += " dilations";

  const std::size_t n = 4200, centre = 2100;
  Matrix cond(n, ncfg.channels);
  for (double& v : cond.data()) v = r.normal();
  std::vector<double> zero(n, 0.0), impulse(n, 0.0);
  impulse[centre] = 1.0;
  const auto y0 = nsf_filter_block(zero, cond, nw, 2);
  const auto y1 = nsf_filter_block(impulse, cond, nw, 2);
  std::size_t first = n, last = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (y0[i] != y1[i]) first = std::min(first, i), last = std::max(last, i);
  const std::size_t support = first <= last ? last - first + 1 : 0;
  if (support == 0 || support > 2047) bad += " impulse-support";

  return {bad.empty(), fmt("TDNN layer dims, x-vector 512-d for T in {15,16,37,300}, PPG width 1944 "
                           "(max |rowsum-1| = %.2g), mel 30x80, NSF 1600 samples, impulse support %zu "
                           "(<= 2047)",
                           worst_sum, support) +
                           (bad.empty() ? "" : "; failed:" + bad)};
}

Outcome dsp_suite() {
  std::string bad;
  Waveform w;
  for (int i = 0; i < 16000; ++i) w.samples.push_back(0.5 * std::sin(2 * std::numbers::pi * 220 * i / 16000.0));
  const auto f0 = extract_f0(w);
  std::size_t good = 0, interior = 0;
  for (std::size_t t = 2; t + 2 < f0.values.size(); ++t) {
    ++interior;
    const double ref = oracle::dft_peak_hz(std::span(w.samples).subspan(t * 80, 400), 16000, 50, 600);
    good += f0.values[t] > 0 && std::abs(f0.values[t] - ref) <= 2.0 && std::abs(ref - 220) <= 2.0;
  }
  const double frac = static_cast<double>(good) / static_cast<double>(interior);
  if (frac < 0.95) bad += " f0";

  FeatureMatrix ppg;
  ppg.kind = FeatureKind::kPpg;
  ppg.frames = Matrix(100, 6);
  Rng r(9);
  for (double& v : ppg.frames.data()) v = r.uniform();
  F0Contour contour;
  for (int t = 0; t < 200; ++t) contour.values.push_back(t % 5 ? 120.0 + t : 0.0);
  SpeakerEmbedding x{"x", std::vector<double>(16), {}};
  for (double& v : x.vector) v = r.normal();
  const auto a = align_streams(ppg, contour, x);
  bool aligned_ok = a.num_frames() == 200 && a.dim() == 6 + 2 + 16;
  for (std::size_t t = 0; aligned_ok && t < 200; ++t) {
    aligned_ok &= std::memcmp(a.frames.row(t).data(), ppg.frames.row(t / 2).data(), 6 * sizeof(double)) == 0;
    aligned_ok &= std::memcmp(a.frames.row(t).data() + 8, x.vector.data(), 16 * sizeof(double)) == 0;
  }
  contour.values.pop_back();
  aligned_ok &= align_streams(ppg, contour, x).num_frames() == 199;
  if (!aligned_ok) bad += " align";

  bool frames_ok = num_frames(16000, 400, 80) == 196;
  for (std::size_t n = 400; n < 2400; n += 37) {
    Waveform s;
    s.samples.assign(n, 0.01);
    frames_ok &= mel_features(s, 80, 0.005).num_frames() == (n - 400) / 80 + 1;
    frames_ok &= mel_features(s, 24, 0.01).num_frames() == (n - 400) / 160 + 1;
  }
  if (!frames_ok) bad += " mel-frames";

  return {bad.empty(), fmt("220 Hz: %.1f%% of %zu interior frames within 2 Hz of the DFT peak (>= 95%%); "
                           "2x PPG replication and bitwise x-vector broadcast %s; mel frame counts %s",
                           100 * frac, interior, aligned_ok ? "ok" : "BROKEN", frames_ok ? "exact" : "WRONG") +
                           (bad.empty() ? "" : "; failed:" + bad)};
}

Outcome wer_oracle() {
  static const char* kWords[] = {"a", "b", "c", "d"};
  Rng r(12);
  std::size_t mismatches = 0;
  for (int t = 0; t < 10000; ++t) {
    std::vector<std::string> ref(1 + r.below(12)), hyp(r.below(13));
    for (auto& s : ref) s = kWords[r.below(4)];
    for (auto& s : hyp) s = kWords[r.below(4)];
    const auto got = wer(ref, hyp);
    const auto want = oracle::wer_counts(ref, hyp);
    const std::size_t total = got.substitutions + got.deletions + got.insertions;
    const bool same = got.substitutions == want.s && got.deletions == want.d && got.insertions == want.i &&
                      total == oracle::edit_distance(ref, hyp) &&
                      got.rate == static_cast<double>(total) / static_cast<double>(ref.size());
    mismatches += !same;
  }
  return {mismatches == 0, fmt("10000 random pairs (length <= 12), %zu disagreements with the DP oracle",
                               mismatches)};
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("xvanon_accept_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::string bad;

  const std::string sim = "simulate --seed 99 --out-dir " + (dir / "sim").string();
  if (run_cli(sim) != 0) bad += " simulate-exit";
  const std::string txt1 = slurp(dir / "sim" / "simulate_report.txt");
  const std::string rec1 = slurp(dir / "sim" / "simulate_report.jsonl");
  if (run_cli(sim) != 0) bad += " simulate-exit";
  if (txt1.empty() || txt1 != slurp(dir / "sim" / "simulate_report.txt") ||
      rec1 != slurp(dir / "sim" / "simulate_report.jsonl"))
    bad += " simulate-bytes";

  std::ofstream(dir / "small.ini") << "[models]\nnsf_channels = 8\n";
  const std::string common = " --config " + (dir / "small.ini").string() + " --weights-dir " +
                             (dir / "w").string() + " --seed 5";
  if (run_cli("init-weights --components acoustic nsf" + common) != 0) bad += " init-exit";

  FeatureMatrix aligned;
  aligned.kind = FeatureKind::kAligned;
  aligned.hop = kF0Hop;
  aligned.frames = Matrix(60, 1944 + 2 + 512);
  Rng r(3);
  for (std::size_t t = 0; t < 60; ++t) {
    auto row = aligned.frames.row(t);
    row[(7 * t) % 1944] = 1.0;
    row[1944] = t > 10 ? std::log(130.0) : 0.0;
    row[1945] = t > 10 ? 1.0 : 0.0;
  }
  std::vector<double> x(512);
  for (double& v : x) v = r.normal();
  for (std::size_t t = 0; t < 60; ++t) std::copy(x.begin(), x.end(), aligned.frames.row(t).begin() + 1946);
  save_features(aligned, dir / "utt.aligned.jsonl");
  const std::string synth = "synthesize" + common + " --out-dir " + (dir / "syn").string() + " " +
                            (dir / "utt.aligned.jsonl").string();
  if (run_cli(synth) != 0) bad += " synth-exit";
  const std::string wav1 = slurp(dir / "syn" / "utt.wav");
  if (run_cli(synth) != 0) bad += " synth-exit";
  const std::string wav2 = slurp(dir / "syn" / "utt.wav");
  if (wav1.empty() || wav1 != wav2) bad += " synth-bytes";

  fs::remove_all(dir);
  return {bad.empty(), fmt("simulate reports %zu + %zu bytes identical across runs; synthesized WAV %zu bytes "
                           "identical across runs",
                           txt1.size(), rec1.size(), wav1.size()) +
                           (bad.empty() ? "" : "; failed:" + bad)};
}

Outcome spectral_loss_suite() {
  Rng r(4242);
  Waveform a, b;
  for (int i = 0; i < 16000; ++i) {
    a.samples.push_back(0.2 * r.normal());
    b.samples.push_back(0.2 * r.normal());
  }
  Waveform a2 = a;
  for (double& v : a2.samples) v *= 2;
  const double self = spectral_loss(a, a);
  const double scaled = spectral_loss(a, a2);
  const double target = std::log(2.0) * std::log(2.0);
  const double ab = spectral_loss(a, b), ba = spectral_loss(b, a);
  const bool ok = self == 0.0 && std::abs(scaled - target) <= 1e-6 && ab == ba;
  return {ok, fmt("L(a,a) = %g; L(a,2a) = %.9f vs (ln 2)^2 = %.9f (tol 1e-6); L(a,b) = L(b,a) = %.6f", self,
                  scaled, target, ab)};
}

}  // namespace

int main() {
  report(1, "eer-oracle-equivalence", eer_oracle);
  report(2, "anonymization-direction", anonymization_direction);
  report(3, "range-monotonicity", range_monotonicity);
  report(4, "dissimilarity-range", dissimilarity_range);
  report(5, "architecture-shapes", architecture_shapes);
  report(6, "dsp-suite", dsp_suite);
  report(7, "wer-oracle-equivalence", wer_oracle);
  report(8, "determinism", determinism);
  report(9, "spectral-loss", spectral_loss_suite);
  std::printf("%d of 9 criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
