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

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "xvanon/embedding.hpp"
#include "xvanon/matrix.hpp"

namespace xvanon {

inline constexpr int kSampleRate = 16000;
inline constexpr double kF0Hop = 0.005;
inline constexpr std::size_t kFrameLength = 400;  // 25 ms at 16 kHz
inline constexpr std::size_t kFftSize = 512;
inline constexpr double kMelLow = 20.0;
inline constexpr double kMelHigh = 7600.0;
inline const double kLogFloor = std::log(1e-10);

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  bool operator==(const Waveform&) const = default;
};

/// Per-5 ms F0 in Hz; 0.0 marks an unvoiced frame.
struct F0Contour {
  std::vector<double> values;
  double hop = kF0Hop;
};

enum class FeatureKind { kFbank24, kFbank40, kMelspec80, kPpg, kAligned, kF0 };

std::string to_string(FeatureKind k);
FeatureKind parse_feature_kind(std::string_view name);

struct FeatureMatrix {
  Matrix frames;
  double hop = 0.01;
  FeatureKind kind = FeatureKind::kFbank24;

  std::size_t num_frames() const { return frames.rows(); }
  std::size_t dim() const { return frames.cols(); }
};

// --- WAV I/O: RIFF, PCM16, mono. ------------------------------------------

Waveform read_wav(const std::filesystem::path& path, int expected_rate = kSampleRate);
Waveform parse_wav(std::string_view bytes, int expected_rate = kSampleRate);
void write_wav(const std::filesystem::path& path, const Waveform& w);
std::string encode_wav(const Waveform& w);

// --- Framing and mel features. --------------------------------------------

/// floor((len - frame_len) / hop_len) + 1, or 0 if the signal is shorter than a frame.
std::size_t num_frames(std::size_t num_samples, std::size_t frame_len, std::size_t hop_len);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular HTK-scale filters, one row per mel channel, columns are the
/// fft/2 + 1 power-spectrum bins. Peaks are 1 (no area normalization).
Matrix mel_filterbank(std::size_t n_mels, std::size_t fft_size = kFftSize,
                      int sample_rate = kSampleRate, double low_hz = kMelLow,
                      double high_hz = kMelHigh);

/// Log mel energies: 25 ms Hann frames, 512-point FFT, power spectrum,
/// floor at ln(1e-10). n_mels is 24, 40 or 80.
FeatureMatrix mel_features(const Waveform& w, std::size_t n_mels, double hop_seconds);

// --- F0. ------------------------------------------------------------------

struct F0Options {
  double threshold = 0.45;  // minimum normalized autocorrelation for voicing
  double min_hz = 50.0;
  double max_hz = 600.0;
  double silence_energy = 1e-8;  // per-sample mean energy below this is unvoiced
};

/// Normalized-autocorrelation F0 tracker, framed exactly like
/// mel_features(w, n, 0.005), so its output is co-indexed with melspec80.
F0Contour extract_f0(const Waveform& w, const F0Options& opts = {});

// --- Stream alignment. -----------------------------------------------------

/// Log-F0 with unvoiced gaps linearly interpolated between voiced neighbours
/// (held constant past the ends). All-unvoiced input gives all zeros.
std::vector<double> interpolate_log_f0(const F0Contour& f0);

/// Each 10 ms PPG row is emitted twice to meet the 5 ms F0 rate; every output
/// row is [ppg, log-F0, voicing flag, x-vector]. Streams within 2 frames of
/// each other are trimmed to the shorter; larger gaps throw DataError. With
/// mask_unvoiced the log-F0 column is 0 on unvoiced rows.
FeatureMatrix align_streams(const FeatureMatrix& ppg, const F0Contour& f0,
                            const SpeakerEmbedding& xvec, bool mask_unvoiced = true);

/// Recovers (log-F0 -> Hz, voicing) from aligned rows at column ppg_dim.
F0Contour f0_from_aligned(const FeatureMatrix& aligned, std::size_t ppg_dim);

FeatureMatrix f0_to_features(const F0Contour& f0);
F0Contour features_to_f0(const FeatureMatrix& m);

// --- Feature files: header {"kind","hop","dim","frames"} then {"t","vec"}. -

void save_features(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix load_features(const std::filesystem::path& path);
std::string format_features(const FeatureMatrix& m);
FeatureMatrix parse_features(std::string_view text, std::string_view source = "<memory>");

}  // namespace xvanon
