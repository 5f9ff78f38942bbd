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
#include <variant>
#include <vector>

#include "xvanon/embedding.hpp"
#include "xvanon/matrix.hpp"
#include "xvanon/signal.hpp"

namespace xvanon {

enum class Component { kXVector, kPpg, kAcoustic, kNsf };

std::string to_string(Component c);
Component parse_component(const std::string& name);

// ---------------------------------------------------------------------------
// Architectures

/// One TDNN layer: splice the previous layer's output at `context` offsets,
/// then affine + ReLU to `output_dim`.
struct TdnnLayer {
  std::vector<int> context;
  std::size_t output_dim = 0;

  bool operator==(const TdnnLayer&) const = default;
};

/// Frame-level TDNN, statistics pooling, then segment-level layers. The
/// embedding is the affine output of the first segment-level layer.
struct XVectorConfig {
  std::size_t input_dim = 24;
  std::vector<TdnnLayer> frame_layers = {
      {{-2, -1, 0, 1, 2}, 512}, {{-2, 0, 2}, 512}, {{-3, 0, 3}, 512}, {{0}, 512}, {{0}, 1500}};
  std::size_t embedding_dim = 512;  // layer 6
  std::size_t layer7_dim = 512;
  std::size_t num_speakers = 1000;  // training speakers of the softmax head
  bool pool_variance = false;       // pool variance instead of standard deviation

  void validate() const;
  /// Frames consumed by the spliced layers: 1 + sum of (max - min) offsets.
  std::size_t total_context() const;
  bool operator==(const XVectorConfig&) const = default;
};

enum class PpgTap { kSigmoid6, kSoftmax };
std::string to_string(PpgTap t);
PpgTap parse_ppg_tap(const std::string& name);

struct PpgConfig {
  std::size_t input_dim = 40;
  std::size_t context = 5;  // frames each side; 11-frame window
  std::size_t hidden_layers = 6;
  std::size_t hidden_dim = 1024;
  std::size_t output_dim = 1944;

  void validate() const;
  std::size_t tap_dim(PpgTap tap) const { return tap == PpgTap::kSoftmax ? output_dim : hidden_dim; }
  bool operator==(const PpgConfig&) const = default;
};

/// Two tanh feedforward layers, a bidirectional LSTM, then an autoregressive
/// LSTM fed with the previous mel frame, and a linear mel output.
struct AcousticConfig {
  std::size_t input_dim = 1944 + 2 + 512;
  std::size_t ff_dim = 512;
  std::size_t ff_layers = 2;
  std::size_t blstm_dim = 256;  // per direction
  std::size_t ar_dim = 512;
  std::size_t mel_dim = 80;

  void validate() const;
  bool operator==(const AcousticConfig&) const = default;
};

/// Condition module, sine/noise source, and a stack of dilated-convolution
/// filter blocks with gated activations, residual and skip paths.
struct NsfConfig {
  std::size_t cond_input_dim = 80 + 2 + 512;  // mel, log-F0, voicing, x-vector
  std::size_t channels = 64;
  std::size_t blocks = 5;
  std::size_t layers_per_block = 10;
  std::size_t kernel = 3;
  std::size_t upsample = 80;  // samples per 5 ms frame at 16 kHz
  std::size_t smoothing = 81;
  double sine_amplitude = 0.1;
  double noise_std = 0.003;
  int sample_rate = kSampleRate;

  void validate() const;
  /// Dilation of layer k (0-based) inside every block: 2^k.
  std::vector<std::size_t> dilations() const;
  /// Samples that can influence one output sample of a block.
  std::size_t block_receptive_field() const;
  bool operator==(const NsfConfig&) const = default;
};

using ModelConfig = std::variant<XVectorConfig, PpgConfig, AcousticConfig, NsfConfig>;

// ---------------------------------------------------------------------------
// Weights

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;

  std::size_t numel() const;
  bool operator==(const Tensor&) const = default;
};

class ModelWeights {
 public:
  ModelWeights() = default;
  explicit ModelWeights(ModelConfig config);

  Component component() const;
  const ModelConfig& config() const { return config_; }
  template <class C>
  const C& config_as() const;

  /// Declared tensors in file order.
  const std::vector<Tensor>& tensors() const { return tensors_; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  std::span<const double> data(const std::string& name) const { return at(name).data; }

  /// Throws DataError unless every tensor the config declares is present
  /// with the declared shape and finite values.
  void validate() const;

  bool operator==(const ModelWeights& o) const {
    return config_ == o.config_ && tensors_ == o.tensors_;
  }

 private:
  ModelConfig config_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

/// Tensor names and shapes implied by a config, in file order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> declared_tensors(
    const ModelConfig& config);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every tensor; each tensor
/// draws from derive_seed(seed, name).
ModelWeights init_weights(const ModelConfig& config, std::uint64_t seed);

/// All-zero tensors of the declared shapes.
ModelWeights zero_weights(const ModelConfig& config);

// Weight files: a text manifest ("xvanon-weights 1", component, config echo
// as JSON, one "tensor <name> f64 <shape> <offset> <count>" line per tensor,
// "end") followed by the tensors as little-endian IEEE-754 doubles.
void save_weights(const ModelWeights& w, const std::filesystem::path& path);
ModelWeights load_weights(const std::filesystem::path& path);
std::string encode_weights(const ModelWeights& w);
ModelWeights decode_weights(std::string_view bytes, std::string_view source = "<memory>");

// ---------------------------------------------------------------------------
// Forward passes

/// Embedding from fbank24 frames. Needs at least total_context() frames. The
/// result is the raw layer-6 output and may be the zero vector.
SpeakerEmbedding xvector_forward(const FeatureMatrix& fbank, const ModelWeights& w,
                                 std::string id = "xvector");

/// Softmax over training speakers from the embedding, via layer 7.
std::vector<double> xvector_speaker_posteriors(const SpeakerEmbedding& e, const ModelWeights& w);

/// One output row per input frame; edges are padded by repeating the first
/// and last frames.
FeatureMatrix ppg_forward(const FeatureMatrix& fbank40, const ModelWeights& w, PpgTap tap);

enum class FeedbackMode { kTeacher, kFree };

/// Mel frames from aligned features. Step 0 feeds a zero mel frame back;
/// later steps feed teacher_mel[t-1] (teacher) or the model's own output.
FeatureMatrix acoustic_forward(const FeatureMatrix& aligned, const ModelWeights& w,
                               FeedbackMode mode, const FeatureMatrix* teacher_mel = nullptr);

/// Excitation at the sample rate: phase-continuous sine of the given
/// amplitude where f0 > 0, seeded Gaussian noise where f0 == 0.
std::vector<double> nsf_source(std::span<const double> f0_upsampled, std::uint64_t seed,
                               double amplitude = 0.1, double noise_std = 0.003,
                               int sample_rate = kSampleRate);

/// Frame-rate F0 repeated `factor` times per frame.
std::vector<double> upsample_f0(const F0Contour& f0, std::size_t factor);

/// Condition module: projected per-frame features, repeated `upsample`
/// times, then smoothed with a centered moving average of width `smoothing`.
Matrix nsf_condition(const FeatureMatrix& mel, const F0Contour& f0, const SpeakerEmbedding& xvec,
                     const ModelWeights& w);

/// One filter block applied to a single-channel signal given the
/// sample-level condition. Output = input + block transform.
std::vector<double> nsf_filter_block(std::span<const double> x, const Matrix& condition,
                                     const ModelWeights& w, std::size_t block);

Waveform nsf_forward(const FeatureMatrix& mel, const F0Contour& f0, const SpeakerEmbedding& xvec,
                     const ModelWeights& w, std::uint64_t seed);

/// Multi-resolution log-amplitude distance: mean over STFT configurations
/// (512/80, 128/40, 2048/320 as fft/hop) of the mean squared difference of
/// log |X|.
double spectral_loss(const Waveform& a, const Waveform& b);

}  // namespace xvanon
