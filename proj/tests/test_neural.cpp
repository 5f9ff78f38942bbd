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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>

#include "oracles.hpp"
#include "xvanon/error.hpp"
#include "xvanon/neural.hpp"
#include "xvanon/rng.hpp"

using namespace xvanon;

namespace {

FeatureMatrix random_features(std::size_t t, std::size_t d, std::uint64_t seed,
                              FeatureKind kind = FeatureKind::kFbank24) {
  Rng r(seed);
  FeatureMatrix m;
  m.kind = kind;
  m.frames = Matrix(t, d);
  for (double& v : m.frames.data()) v = r.normal();
  return m;
}

const ModelWeights& xvector_weights() {
  static const ModelWeights w = init_weights(XVectorConfig{}, 7);
  return w;
}

NsfConfig small_nsf() {
  NsfConfig c;
  c.cond_input_dim = 80 + 2 + 8;
  c.channels = 4;
  return c;
}

std::vector<std::size_t> shape_of(const ModelWeights& w, const std::string& name) { return w.at(name).shape; }

}  // namespace

TEST_CASE("x-vector layer sizes") {
  const auto& w = xvector_weights();
  CHECK(XVectorConfig{}.total_context() == 15);
  CHECK(shape_of(w, "tdnn1.w") == std::vector<std::size_t>{512, 5 * 24});
  CHECK(shape_of(w, "tdnn2.w") == std::vector<std::size_t>{512, 3 * 512});
  CHECK(shape_of(w, "tdnn3.w") == std::vector<std::size_t>{512, 3 * 512});
  CHECK(shape_of(w, "tdnn4.w") == std::vector<std::size_t>{512, 512});
  CHECK(shape_of(w, "tdnn5.w") == std::vector<std::size_t>{1500, 512});
  CHECK(shape_of(w, "seg6.w") == std::vector<std::size_t>{512, 3000});
  CHECK(shape_of(w, "seg7.w") == std::vector<std::size_t>{512, 512});
  CHECK(shape_of(w, "softmax.w") == std::vector<std::size_t>{1000, 512});
}

TEST_CASE("x-vector is 512-d for any usable length") {
  const auto& w = xvector_weights();
  for (std::size_t t : {15u, 16u, 31u, 120u}) CHECK(xvector_forward(random_features(t, 24, t), w).dim() == 512);
  CHECK_THROWS_AS(xvector_forward(random_features(14, 24, 1), w), DataError);
  CHECK_THROWS_AS(xvector_forward(random_features(40, 23, 1), w), DataError);
}

TEST_CASE("constant input: pooling makes the embedding length-invariant") {
  const auto& w = xvector_weights();
  auto make = [](std::size_t t) {
    FeatureMatrix m;
    m.frames = Matrix(t, 24);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t d = 0; d < 24; ++d) m.frames(i, d) = 0.1 * static_cast<double>(d) - 1.0;
    return m;
  };
  const auto a = xvector_forward(make(20), w), b = xvector_forward(make(200), w);
  for (std::size_t i = 0; i < 512; ++i) CHECK(a.vector[i] == doctest::Approx(b.vector[i]).epsilon(1e-10));
}

TEST_CASE("zero weights give a zero embedding") {
  const auto w = zero_weights(XVectorConfig{});
  for (double v : xvector_forward(random_features(30, 24, 2), w).vector) CHECK(v == 0.0);
}

TEST_CASE("speaker posteriors are a distribution over training speakers") {
  const auto& w = xvector_weights();
  const auto p = xvector_speaker_posteriors(xvector_forward(random_features(50, 24, 3), w), w);
  CHECK(p.size() == 1000);
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("PPG rows: one per frame, softmax normalized") {
  const auto w = init_weights(PpgConfig{}, 3);
  const auto ppg = ppg_forward(random_features(50, 40, 4, FeatureKind::kFbank40), w, PpgTap::kSoftmax);
  REQUIRE(ppg.num_frames() == 50);
  REQUIRE(ppg.dim() == 1944);
  CHECK(ppg.kind == FeatureKind::kPpg);
  for (std::size_t t = 0; t < 50; ++t) {
    const auto row = ppg.frames.row(t);
    CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) <= 1e-9);
  }
  const auto hidden = ppg_forward(random_features(7, 40, 5, FeatureKind::kFbank40), w, PpgTap::kSigmoid6);
  CHECK(hidden.dim() == 1024);

  const auto z = zero_weights(PpgConfig{});
  const auto u = ppg_forward(random_features(3, 40, 6, FeatureKind::kFbank40), z, PpgTap::kSoftmax);
  for (double v : u.frames.data()) CHECK(v == doctest::Approx(1.0 / 1944).epsilon(1e-12));
}

TEST_CASE("acoustic model shapes and feedback") {
  AcousticConfig cfg;
  cfg.input_dim = 30;
  const auto w = init_weights(cfg, 8);
  const auto x = random_features(25, 30, 9, FeatureKind::kAligned);
  const auto free = acoustic_forward(x, w, FeedbackMode::kFree);
  REQUIRE(free.num_frames() == 25);
  REQUIRE(free.dim() == 80);
  const auto teacher_mel = random_features(25, 80, 10, FeatureKind::kMelspec80);
  const auto forced = acoustic_forward(x, w, FeedbackMode::kTeacher, &teacher_mel);
  for (std::size_t d = 0; d < 80; ++d) CHECK(free.frames(0, d) == forced.frames(0, d));
  bool differs = false;
  for (std::size_t d = 0; d < 80; ++d) differs |= free.frames(5, d) != forced.frames(5, d);
  CHECK(differs);
  CHECK_THROWS_AS(acoustic_forward(x, w, FeedbackMode::kTeacher), DataError);
  const auto short_mel = random_features(24, 80, 11, FeatureKind::kMelspec80);
  CHECK_THROWS_AS(acoustic_forward(x, w, FeedbackMode::kTeacher, &short_mel), DataError);

  auto z = zero_weights(cfg);
  for (std::size_t d = 0; d < 80; ++d) z.at("out.b").data[d] = 0.25 * static_cast<double>(d) - 3.0;
  const auto y = acoustic_forward(x, z, FeedbackMode::kFree);
  for (std::size_t t = 0; t < 25; ++t)
    for (std::size_t d = 0; d < 80; ++d) CHECK(y.frames(t, d) == 0.25 * static_cast<double>(d) - 3.0);
}

TEST_CASE("default acoustic input width matches the aligned layout") {
  CHECK(AcousticConfig{}.input_dim == 1944 + 2 + 512);
}

TEST_CASE("NSF dilations and receptive field") {
  const NsfConfig cfg;
  CHECK(cfg.dilations() == std::vector<std::size_t>{1, 2, 4, 8, 16, 32, 64, 128, 256, 512});
  CHECK(cfg.block_receptive_field() == 2047);
}

TEST_CASE("filter block impulse response fits the receptive field") {
  const NsfConfig cfg = small_nsf();
  const auto w = init_weights(cfg, 21);
  const std::size_t n = 6000, centre = 3000;
  Rng r(5);
  Matrix cond(n, cfg.channels);
  for (double& v : cond.data()) v = r.normal();
  std::vector<double> zero(n, 0.0), impulse(n, 0.0);
  impulse[centre] = 1.0;
  const auto y0 = nsf_filter_block(zero, cond, w, 0);
  const auto y1 = nsf_filter_block(impulse, cond, w, 0);
  std::size_t first = n, last = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (y0[i] != y1[i]) first = std::min(first, i), last = std::max(last, i);
  REQUIRE(first <= last);
  CHECK(last - first + 1 <= 2047);
  CHECK(last - first + 1 > 1000);
  CHECK(first >= centre - 1023);
  CHECK(last <= centre + 1023);
}

TEST_CASE("NSF output length and the degenerate filter") {
  const NsfConfig cfg = small_nsf();
  const auto mel = random_features(100, 80, 12, FeatureKind::kMelspec80);
  F0Contour f0;
  for (int t = 0; t < 100; ++t) f0.values.push_back(t < 30 || t > 70 ? 0.0 : 150.0);
  const SpeakerEmbedding x{"x", std::vector<double>(8, 0.5), {}};

  const auto w = init_weights(cfg, 13);
  const auto y = nsf_forward(mel, f0, x, w, 99);
  CHECK(y.samples.size() == 8000);
  CHECK(nsf_forward(mel, f0, x, w, 99) == y);
  for (double v : y.samples) CHECK(std::abs(v) <= 1.0);

  const auto z = zero_weights(cfg);
  const auto src = nsf_source(upsample_f0(f0, 80), 99);
  CHECK(nsf_forward(mel, f0, x, z, 99).samples == src);

  F0Contour bad = f0;
  bad.values.pop_back();
  CHECK_THROWS_AS(nsf_forward(mel, bad, x, w, 1), DataError);
  CHECK_THROWS_AS(nsf_forward(mel, f0, {"x", {1.0}, {}}, w, 1), DataError);
}

TEST_CASE("sine source: spectral peak at the requested frequency") {
  const std::vector<double> f0(16000, 100.0);
  const auto s = nsf_source(f0, 1);
  CHECK(std::abs(oracle::dft_peak_hz(s, 16000, 20, 1000) - 100.0) <= 1.0);
  CHECK(*std::max_element(s.begin(), s.end()) <= 0.1);
}

TEST_CASE("noise source: standard deviation near 0.003") {
  const std::vector<double> f0(32000, 0.0);
  const auto s = nsf_source(f0, 77);
  double m = 0, v = 0;
  for (double x : s) m += x;
  m /= static_cast<double>(s.size());
  for (double x : s) v += (x - m) * (x - m);
  const double sd = std::sqrt(v / static_cast<double>(s.size()));
  CHECK(std::abs(sd - 0.003) <= 0.2 * 0.003);
  CHECK(nsf_source(f0, 77) == s);
  CHECK(nsf_source(f0, 78) != s);
}

TEST_CASE("sine source is phase continuous across an F0 change") {
  std::vector<double> f0(8000, 100.0);
  f0.insert(f0.end(), 8000, 120.0);
  const auto s = nsf_source(f0, 1);
  const double bound = 2 * std::numbers::pi * 120.0 / 16000 * 0.1;
  double worst = 0;
  for (std::size_t i = 1; i < s.size(); ++i) worst = std::max(worst, std::abs(s[i] - s[i - 1]));
  CHECK(worst <= bound * (1 + 1e-9));
  CHECK_THROWS_AS(nsf_source(std::vector<double>{100.0, -1.0}, 1), DataError);
}

TEST_CASE("spectral loss properties") {
  Rng r(31);
  Waveform a, b;
  for (int i = 0; i < 8000; ++i) {
    a.samples.push_back(0.1 * r.normal());
    b.samples.push_back(0.1 * r.normal());
  }
  CHECK(spectral_loss(a, a) == 0.0);
  Waveform a2 = a;
  for (double& v : a2.samples) v *= 2.0;
  CHECK(std::abs(spectral_loss(a, a2) - std::log(2.0) * std::log(2.0)) <= 1e-6);
  CHECK(spectral_loss(a, b) == spectral_loss(b, a));
  CHECK(spectral_loss(a, b) > 0.0);
  b.samples.pop_back();
  CHECK_THROWS_AS(spectral_loss(a, b), DataError);
}

TEST_CASE("weights: seeded init, round trip, validation") {
  const NsfConfig cfg = small_nsf();
  CHECK(init_weights(cfg, 5) == init_weights(cfg, 5));
  CHECK_FALSE(init_weights(cfg, 5) == init_weights(cfg, 6));

  const auto w = init_weights(cfg, 5);
  CHECK(decode_weights(encode_weights(w)) == w);
  const auto path = std::filesystem::temp_directory_path() / "xvanon_nsf.weights";
  save_weights(w, path);
  const auto back = load_weights(path);
  std::filesystem::remove(path);
  const auto mel = random_features(10, 80, 1, FeatureKind::kMelspec80);
  F0Contour f0;
  f0.values.assign(10, 200.0);
  const SpeakerEmbedding x{"x", std::vector<double>(8, 1.0), {}};
  CHECK(nsf_forward(mel, f0, x, back, 3) == nsf_forward(mel, f0, x, w, 3));

  XVectorConfig none;
  none.frame_layers.clear();
  CHECK_THROWS_AS(init_weights(none, 1), ConfigError);
  NsfConfig zero_layers = cfg;
  zero_layers.layers_per_block = 0;
  CHECK_THROWS_AS(init_weights(zero_layers, 1), ConfigError);

  std::string bytes = encode_weights(w);
  CHECK_THROWS_AS(decode_weights(bytes.substr(0, bytes.size() - 8)), DataError);
  CHECK_THROWS_AS(decode_weights("not-weights\n"), DataError);
  CHECK_THROWS_AS(w.config_as<XVectorConfig>(), DataError);
}
