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

#include "xvanon/neural.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xvanon/error.hpp"
#include "xvanon/fft.hpp"
#include "xvanon/kernels.hpp"
#include "xvanon/rng.hpp"

namespace xvanon {

using json = nlohmann::json;
using Shape = std::vector<std::size_t>;

std::string to_string(Component c) {
  switch (c) {
    case Component::kXVector: return "xvector";
    case Component::kPpg: return "ppg";
    case Component::kAcoustic: return "acoustic";
    case Component::kNsf: return "nsf";
  }
  return "?";
}

Component parse_component(const std::string& name) {
  for (auto c : {Component::kXVector, Component::kPpg, Component::kAcoustic, Component::kNsf})
    if (to_string(c) == name) return c;
  throw ConfigError("unknown model component '" + name + "'");
}

std::string to_string(PpgTap t) { return t == PpgTap::kSoftmax ? "softmax" : "sigmoid6"; }

PpgTap parse_ppg_tap(const std::string& name) {
  if (name == "softmax") return PpgTap::kSoftmax;
  if (name == "sigmoid6") return PpgTap::kSigmoid6;
  throw ConfigError("unknown PPG tap '" + name + "' (expected softmax|sigmoid6)");
}

// ---------------------------------------------------------------------------
// Configs

namespace {

constexpr std::size_t kMaxElements = std::size_t{1} << 31;

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void XVectorConfig::validate() const {
  require(input_dim > 0, "xvector: input_dim must be positive");
  require(!frame_layers.empty(), "xvector: at least one frame layer is required");
  for (const auto& l : frame_layers) {
    require(!l.context.empty(), "xvector: every frame layer needs a context");
    require(l.output_dim > 0, "xvector: layer output_dim must be positive");
    require(std::is_sorted(l.context.begin(), l.context.end()) &&
                std::adjacent_find(l.context.begin(), l.context.end()) == l.context.end(),
            "xvector: layer context offsets must be strictly increasing");
  }
  require(embedding_dim > 0 && layer7_dim > 0 && num_speakers > 0,
          "xvector: segment layer sizes must be positive");
}

std::size_t XVectorConfig::total_context() const {
  std::size_t ctx = 1;
  for (const auto& l : frame_layers)
    ctx += static_cast<std::size_t>(l.context.back() - l.context.front());
  return ctx;
}

void PpgConfig::validate() const {
  require(input_dim > 0, "ppg: input_dim must be positive");
  require(hidden_layers > 0, "ppg: at least one hidden layer is required");
  require(hidden_dim > 0 && output_dim > 0, "ppg: layer sizes must be positive");
}

void AcousticConfig::validate() const {
  require(input_dim > 0, "acoustic: input_dim must be positive");
  require(ff_layers > 0, "acoustic: at least one feedforward layer is required");
  require(ff_dim > 0 && blstm_dim > 0 && ar_dim > 0 && mel_dim > 0,
          "acoustic: layer sizes must be positive");
}

void NsfConfig::validate() const {
  require(cond_input_dim > 0 && channels > 0, "nsf: sizes must be positive");
  require(blocks > 0 && layers_per_block > 0, "nsf: at least one block and layer are required");
  require(layers_per_block < 31, "nsf: too many layers per block");
  require(kernel % 2 == 1, "nsf: kernel size must be odd");
  require(upsample > 0 && smoothing % 2 == 1, "nsf: upsample > 0 and odd smoothing width");
  require(sine_amplitude >= 0.0 && noise_std >= 0.0, "nsf: source amplitudes must be >= 0");
  require(sample_rate > 0, "nsf: sample_rate must be positive");
}

std::vector<std::size_t> NsfConfig::dilations() const {
  std::vector<std::size_t> d(layers_per_block);
  for (std::size_t k = 0; k < layers_per_block; ++k) d[k] = std::size_t{1} << k;
  return d;
}

std::size_t NsfConfig::block_receptive_field() const {
  std::size_t rf = 1;
  for (std::size_t d : dilations()) rf += (kernel - 1) * d;
  return rf;
}

namespace {

json to_json(const ModelConfig& config) {
  return std::visit(
      [](const auto& c) -> json {
        using C = std::decay_t<decltype(c)>;
        json j;
        if constexpr (std::is_same_v<C, XVectorConfig>) {
          j["input_dim"] = c.input_dim;
          json layers = json::array();
          for (const auto& l : c.frame_layers)
            layers.push_back({{"context", l.context}, {"output_dim", l.output_dim}});
          j["frame_layers"] = layers;
          j["embedding_dim"] = c.embedding_dim;
          j["layer7_dim"] = c.layer7_dim;
          j["num_speakers"] = c.num_speakers;
          j["pool_variance"] = c.pool_variance;
        } else if constexpr (std::is_same_v<C, PpgConfig>) {
          j = {{"input_dim", c.input_dim},     {"context", c.context},
               {"hidden_layers", c.hidden_layers}, {"hidden_dim", c.hidden_dim},
               {"output_dim", c.output_dim}};
        } else if constexpr (std::is_same_v<C, AcousticConfig>) {
          j = {{"input_dim", c.input_dim}, {"ff_dim", c.ff_dim},   {"ff_layers", c.ff_layers},
               {"blstm_dim", c.blstm_dim}, {"ar_dim", c.ar_dim}, {"mel_dim", c.mel_dim}};
        } else {
          j = {{"cond_input_dim", c.cond_input_dim},
               {"channels", c.channels},
               {"blocks", c.blocks},
               {"layers_per_block", c.layers_per_block},
               {"kernel", c.kernel},
               {"upsample", c.upsample},
               {"smoothing", c.smoothing},
               {"sine_amplitude", c.sine_amplitude},
               {"noise_std", c.noise_std},
               {"sample_rate", c.sample_rate}};
        }
        return j;
      },
      config);
}

ModelConfig from_json(Component comp, const json& j) {
  switch (comp) {
    case Component::kXVector: {
      XVectorConfig c;
      c.input_dim = j.at("input_dim");
      c.frame_layers.clear();
      for (const auto& l : j.at("frame_layers"))
        c.frame_layers.push_back({l.at("context").get<std::vector<int>>(), l.at("output_dim")});
      c.embedding_dim = j.at("embedding_dim");
      c.layer7_dim = j.at("layer7_dim");
      c.num_speakers = j.at("num_speakers");
      c.pool_variance = j.at("pool_variance");
      return c;
    }
    case Component::kPpg: {
      PpgConfig c;
      c.input_dim = j.at("input_dim");
      c.context = j.at("context");
      c.hidden_layers = j.at("hidden_layers");
      c.hidden_dim = j.at("hidden_dim");
      c.output_dim = j.at("output_dim");
      return c;
    }
    case Component::kAcoustic: {
      AcousticConfig c;
      c.input_dim = j.at("input_dim");
      c.ff_dim = j.at("ff_dim");
      c.ff_layers = j.at("ff_layers");
      c.blstm_dim = j.at("blstm_dim");
      c.ar_dim = j.at("ar_dim");
      c.mel_dim = j.at("mel_dim");
      return c;
    }
    case Component::kNsf: {
      NsfConfig c;
      c.cond_input_dim = j.at("cond_input_dim");
      c.channels = j.at("channels");
      c.blocks = j.at("blocks");
      c.layers_per_block = j.at("layers_per_block");
      c.kernel = j.at("kernel");
      c.upsample = j.at("upsample");
      c.smoothing = j.at("smoothing");
      c.sine_amplitude = j.at("sine_amplitude");
      c.noise_std = j.at("noise_std");
      c.sample_rate = j.at("sample_rate");
      return c;
    }
  }
  throw InvariantError("unreachable component");
}

void validate_config(const ModelConfig& config) {
  std::visit([](const auto& c) { c.validate(); }, config);
}

std::string block_prefix(std::size_t block) { return "block" + std::to_string(block) + "."; }
std::string layer_prefix(std::size_t block, std::size_t layer) {
  return block_prefix(block) + "layer" + std::to_string(layer) + ".";
}

}  // namespace

std::vector<std::pair<std::string, Shape>> declared_tensors(const ModelConfig& config) {
  validate_config(config);
  std::vector<std::pair<std::string, Shape>> out;
  auto affine = [&](const std::string& name, std::size_t o, std::size_t i) {
    out.push_back({name + ".w", {o, i}});
    out.push_back({name + ".b", {o}});
  };
  std::visit(
      [&](const auto& c) {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, XVectorConfig>) {
          std::size_t in = c.input_dim;
          for (std::size_t i = 0; i < c.frame_layers.size(); ++i) {
            const auto& l = c.frame_layers[i];
            affine("tdnn" + std::to_string(i + 1), l.output_dim, l.context.size() * in);
            in = l.output_dim;
          }
          affine("seg6", c.embedding_dim, 2 * in);
          affine("seg7", c.layer7_dim, c.embedding_dim);
          affine("softmax", c.num_speakers, c.layer7_dim);
        } else if constexpr (std::is_same_v<C, PpgConfig>) {
          std::size_t in = c.input_dim * (2 * c.context + 1);
          for (std::size_t i = 0; i < c.hidden_layers; ++i) {
            affine("hidden" + std::to_string(i + 1), c.hidden_dim, in);
            in = c.hidden_dim;
          }
          affine("softmax", c.output_dim, in);
        } else if constexpr (std::is_same_v<C, AcousticConfig>) {
          std::size_t in = c.input_dim;
          for (std::size_t i = 0; i < c.ff_layers; ++i) {
            affine("ff" + std::to_string(i + 1), c.ff_dim, in);
            in = c.ff_dim;
          }
          for (const char* dir : {"blstm.fw", "blstm.bw"}) {
            out.push_back({std::string(dir) + ".wx", {4 * c.blstm_dim, in}});
            out.push_back({std::string(dir) + ".wh", {4 * c.blstm_dim, c.blstm_dim}});
            out.push_back({std::string(dir) + ".b", {4 * c.blstm_dim}});
          }
          out.push_back({"ar.wx", {4 * c.ar_dim, 2 * c.blstm_dim}});
          out.push_back({"ar.wfb", {4 * c.ar_dim, c.mel_dim}});
          out.push_back({"ar.wh", {4 * c.ar_dim, c.ar_dim}});
          out.push_back({"ar.b", {4 * c.ar_dim}});
          affine("out", c.mel_dim, c.ar_dim);
        } else {
          const std::size_t ch = c.channels;
          affine("cond", ch, c.cond_input_dim);
          for (std::size_t b = 0; b < c.blocks; ++b) {
            const std::string bp = block_prefix(b);
            affine(bp + "in", ch, 1);
            affine(bp + "cond", 2 * ch, ch);
            for (std::size_t k = 0; k < c.layers_per_block; ++k) {
              const std::string lp = layer_prefix(b, k);
              out.push_back({lp + "conv.w", {2 * ch, c.kernel, ch}});
              out.push_back({lp + "conv.b", {2 * ch}});
              affine(lp + "post", 2 * ch, ch);
            }
            affine(bp + "out", 1, ch);
          }
        }
      },
      config);
  for (const auto& [name, shape] : out) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d != 0 && n > kMaxElements / d)
        throw ConfigError("tensor " + name + " is too large");
      n *= d;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weights

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

ModelWeights::ModelWeights(ModelConfig config) : config_(std::move(config)) {
  for (auto& [name, shape] : declared_tensors(config_)) {
    Tensor t{name, shape, {}};
    t.data.assign(t.numel(), 0.0);
    index_.emplace(name, tensors_.size());
    tensors_.push_back(std::move(t));
  }
}

Component ModelWeights::component() const {
  return static_cast<Component>(config_.index());
}

template <class C>
const C& ModelWeights::config_as() const {
  if (const auto* c = std::get_if<C>(&config_)) return *c;
  throw DataError("weights are for component '" + to_string(component()) +
                  "', not the one requested");
}

template const XVectorConfig& ModelWeights::config_as<XVectorConfig>() const;
template const PpgConfig& ModelWeights::config_as<PpgConfig>() const;
template const AcousticConfig& ModelWeights::config_as<AcousticConfig>() const;
template const NsfConfig& ModelWeights::config_as<NsfConfig>() const;

const Tensor& ModelWeights::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw DataError(to_string(component()) + " weights: missing tensor '" + name + "'");
  return tensors_[it->second];
}

Tensor& ModelWeights::at(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

void ModelWeights::validate() const {
  const auto decl = declared_tensors(config_);
  if (decl.size() != tensors_.size())
    throw DataError(to_string(component()) + " weights: expected " +
                    std::to_string(decl.size()) + " tensors, found " +
                    std::to_string(tensors_.size()));
  for (const auto& [name, shape] : decl) {
    const Tensor& t = at(name);
    if (t.shape != shape) throw DataError("tensor " + name + ": shape does not match config");
    if (t.data.size() != t.numel()) throw DataError("tensor " + name + ": element count mismatch");
    for (double v : t.data)
      if (!std::isfinite(v)) throw DataError("tensor " + name + ": non-finite value");
  }
}

ModelWeights init_weights(const ModelConfig& config, std::uint64_t seed) {
  ModelWeights w(config);
  std::map<std::string, std::size_t> fan_in;
  for (const auto& t : w.tensors())
    if (t.shape.size() >= 2) fan_in[t.name] = t.numel() / t.shape.front();
  for (const auto& t0 : w.tensors()) {
    Tensor& t = w.at(t0.name);
    std::size_t fan = 1;
    if (auto it = fan_in.find(t.name); it != fan_in.end()) {
      fan = it->second;
    } else {
      // A bias borrows the fan-in of its layer's input weight.
      const std::string stem = t.name.substr(0, t.name.rfind('.'));
      for (const char* suffix : {".w", ".wx"})
        if (auto jt = fan_in.find(stem + suffix); jt != fan_in.end()) fan = jt->second;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan));
    Rng rng(derive_seed(seed, t.name));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
  }
  return w;
}

ModelWeights zero_weights(const ModelConfig& config) { return ModelWeights(config); }

namespace {

void put_f64(std::string& s, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64(std::string_view s, std::size_t off) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(s[off + i]);
  return std::bit_cast<double>(bits);
}

std::string join_shape(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out;
}

}  // namespace

std::string encode_weights(const ModelWeights& w) {
  w.validate();
  std::string manifest = "xvanon-weights 1\n";
  manifest += "component " + to_string(w.component()) + "\n";
  manifest += "config " + to_json(w.config()).dump() + "\n";
  std::size_t offset = 0;
  for (const auto& t : w.tensors()) {
    manifest += "tensor " + t.name + " f64 " + join_shape(t.shape) + " " +
                std::to_string(offset) + " " + std::to_string(t.numel()) + "\n";
    offset += 8 * t.numel();
  }
  manifest += "end\n";
  std::string out = std::move(manifest);
  out.reserve(out.size() + offset);
  for (const auto& t : w.tensors())
    for (double v : t.data) put_f64(out, v);
  return out;
}

ModelWeights decode_weights(std::string_view bytes, std::string_view source) {
  auto fail = [&](const std::string& what) -> void {
    throw DataError(std::string(source) + ": " + what);
  };
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&]() {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) fail("truncated manifest");
    std::string line(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    return line;
  };
  if (next_line() != "xvanon-weights 1") fail("not an xvanon weight file (format version 1)");
  std::string line = next_line();
  if (line.rfind("component ", 0) != 0) fail("line 2: expected 'component <name>'");
  Component comp{};
  try {
    comp = parse_component(line.substr(10));
  } catch (const ConfigError& e) {
    fail(e.what());
  }
  line = next_line();
  if (line.rfind("config ", 0) != 0) fail("line 3: expected 'config <json>'");
  ModelConfig config;
  try {
    config = from_json(comp, json::parse(line.substr(7)));
    validate_config(config);
  } catch (const json::exception& e) {
    fail(std::string("bad config echo: ") + e.what());
  } catch (const ConfigError& e) {
    fail(std::string("bad config echo: ") + e.what());
  }

  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset, count;
  };
  std::vector<Entry> entries;
  while ((line = next_line()) != "end") {
    std::istringstream ls(line);
    std::string kw, name, dtype, shape_s;
    Entry e;
    if (!(ls >> kw >> name >> dtype >> shape_s >> e.offset >> e.count) || kw != "tensor")
      fail("manifest line " + std::to_string(line_no) + ": malformed tensor entry");
    if (dtype != "f64") fail("tensor " + name + ": unsupported dtype " + dtype);
    std::istringstream ss(shape_s);
    std::string dim;
    while (std::getline(ss, dim, ',')) e.shape.push_back(std::stoul(dim));
    e.name = name;
    entries.push_back(std::move(e));
  }
  const std::string_view blob = bytes.substr(pos);

  ModelWeights w(config);
  if (entries.size() != w.tensors().size())
    fail("manifest lists " + std::to_string(entries.size()) + " tensors, config declares " +
         std::to_string(w.tensors().size()));
  std::size_t expect_offset = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Entry& e = entries[i];
    const Tensor& decl = w.tensors()[i];
    if (e.name != decl.name) fail("tensor " + std::to_string(i) + " is '" + e.name +
                                  "', expected '" + decl.name + "'");
    if (e.shape != decl.shape) fail("tensor " + e.name + ": shape " + join_shape(e.shape) +
                                    " does not match config (" + join_shape(decl.shape) + ")");
    if (e.count != decl.numel() || e.offset != expect_offset)
      fail("tensor " + e.name + ": inconsistent offset/count");
    if (e.offset + 8 * e.count > blob.size()) fail("tensor " + e.name + ": blob truncated");
    Tensor& t = w.at(e.name);
    for (std::size_t k = 0; k < e.count; ++k) t.data[k] = get_f64(blob, e.offset + 8 * k);
    expect_offset += 8 * e.count;
  }
  if (expect_offset != blob.size()) fail("trailing bytes after tensor data");
  try {
    w.validate();
  } catch (const DataError& e) {
    fail(e.what());
  }
  return w;
}

void save_weights(const ModelWeights& w, const std::filesystem::path& path) {
  const std::string bytes = encode_weights(w);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

ModelWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weight file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_weights(ss.str(), path.string());
}

// ---------------------------------------------------------------------------
// Forward passes

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void apply(Matrix& m, double (*f)(double)) {
  for (double& v : m.data()) v = f(v);
}

double relu(double x) { return x > 0.0 ? x : 0.0; }
double tanh_fn(double x) { return std::tanh(x); }

Matrix affine(const Matrix& x, const ModelWeights& w, const std::string& name) {
  Matrix y;
  kernels::affine(x, w.data(name + ".w"), w.data(name + ".b"), y);
  return y;
}

void softmax_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
}

// Sequential LSTM over precomputed input projections xw (T x 4H, bias
// included). Gate order: input, forget, cell, output.
Matrix lstm_pass(const Matrix& xw, std::span<const double> wh, std::size_t hidden, bool reverse) {
  const std::size_t t_count = xw.rows();
  Matrix out(t_count, hidden);
  std::vector<double> h(hidden, 0.0), c(hidden, 0.0), gates(4 * hidden);
  for (std::size_t step = 0; step < t_count; ++step) {
    const std::size_t t = reverse ? t_count - 1 - step : step;
    const auto x = xw.row(t);
    for (std::size_t g = 0; g < 4 * hidden; ++g) {
      const double* wr = wh.data() + g * hidden;
      double acc = x[g];
      for (std::size_t k = 0; k < hidden; ++k) acc += wr[k] * h[k];
      gates[g] = acc;
    }
    for (std::size_t k = 0; k < hidden; ++k) {
      const double i = sigmoid(gates[k]);
      const double f = sigmoid(gates[hidden + k]);
      const double g = std::tanh(gates[2 * hidden + k]);
      const double o = sigmoid(gates[3 * hidden + k]);
      c[k] = f * c[k] + i * g;
      h[k] = o * std::tanh(c[k]);
    }
    std::copy(h.begin(), h.end(), out.row(t).begin());
  }
  return out;
}

}  // namespace

SpeakerEmbedding xvector_forward(const FeatureMatrix& fbank, const ModelWeights& w, std::string id) {
  const auto& cfg = w.config_as<XVectorConfig>();
  if (fbank.dim() != cfg.input_dim)
    throw DataError("xvector_forward: input dim " + std::to_string(fbank.dim()) + ", expected " +
                    std::to_string(cfg.input_dim));
  if (fbank.num_frames() < cfg.total_context())
    throw DataError("xvector_forward: " + std::to_string(fbank.num_frames()) +
                    " frames; at least " + std::to_string(cfg.total_context()) + " are required");

  Matrix cur = fbank.frames;
  for (std::size_t i = 0; i < cfg.frame_layers.size(); ++i) {
    const auto& layer = cfg.frame_layers[i];
    const int lo = layer.context.front(), hi = layer.context.back();
    const std::size_t t_out = cur.rows() - static_cast<std::size_t>(hi - lo);
    const std::size_t in = cur.cols();
    Matrix spliced(t_out, layer.context.size() * in);
    for (std::size_t t = 0; t < t_out; ++t) {
      auto dst = spliced.row(t).begin();
      for (int off : layer.context) {
        const auto src = cur.row(static_cast<std::size_t>(static_cast<int>(t) - lo + off));
        dst = std::copy(src.begin(), src.end(), dst);
      }
    }
    cur = affine(spliced, w, "tdnn" + std::to_string(i + 1));
    apply(cur, relu);
  }

  Matrix pooled(1, 2 * cur.cols());
  auto row = pooled.row(0);
  kernels::column_stats(cur, cfg.pool_variance, row.subspan(0, cur.cols()),
                        row.subspan(cur.cols()));
  const Matrix emb = affine(pooled, w, "seg6");
  SpeakerEmbedding out;
  out.id = std::move(id);
  out.vector = emb.data();
  return out;
}

std::vector<double> xvector_speaker_posteriors(const SpeakerEmbedding& e, const ModelWeights& w) {
  const auto& cfg = w.config_as<XVectorConfig>();
  if (e.dim() != cfg.embedding_dim) throw DataError("xvector posteriors: embedding dim mismatch");
  Matrix h(1, e.dim());
  std::copy(e.vector.begin(), e.vector.end(), h.data().begin());
  apply(h, relu);
  Matrix h7 = affine(h, w, "seg7");
  apply(h7, relu);
  Matrix logits = affine(h7, w, "softmax");
  softmax_rows(logits);
  return logits.data();
}

FeatureMatrix ppg_forward(const FeatureMatrix& fbank40, const ModelWeights& w, PpgTap tap) {
  const auto& cfg = w.config_as<PpgConfig>();
  if (fbank40.dim() != cfg.input_dim)
    throw DataError("ppg_forward: input dim " + std::to_string(fbank40.dim()) + ", expected " +
                    std::to_string(cfg.input_dim));
  const std::size_t t_count = fbank40.num_frames();
  if (t_count == 0) throw DataError("ppg_forward: no input frames");
  const auto ctx = static_cast<std::ptrdiff_t>(cfg.context);
  const auto last = static_cast<std::ptrdiff_t>(t_count) - 1;
  Matrix spliced(t_count, cfg.input_dim * (2 * cfg.context + 1));
  for (std::size_t t = 0; t < t_count; ++t) {
    auto dst = spliced.row(t).begin();
    for (std::ptrdiff_t o = -ctx; o <= ctx; ++o) {
      const auto src = std::clamp(static_cast<std::ptrdiff_t>(t) + o, std::ptrdiff_t{0}, last);
      const auto r = fbank40.frames.row(static_cast<std::size_t>(src));
      dst = std::copy(r.begin(), r.end(), dst);
    }
  }
  Matrix h = std::move(spliced);
  for (std::size_t i = 0; i < cfg.hidden_layers; ++i) {
    h = affine(h, w, "hidden" + std::to_string(i + 1));
    apply(h, sigmoid);
  }
  FeatureMatrix out;
  out.kind = FeatureKind::kPpg;
  out.hop = fbank40.hop;
  if (tap == PpgTap::kSoftmax) {
    h = affine(h, w, "softmax");
    softmax_rows(h);
  }
  out.frames = std::move(h);
  return out;
}

FeatureMatrix acoustic_forward(const FeatureMatrix& aligned, const ModelWeights& w,
                               FeedbackMode mode, const FeatureMatrix* teacher_mel) {
  const auto& cfg = w.config_as<AcousticConfig>();
  if (aligned.dim() != cfg.input_dim)
    throw DataError("acoustic_forward: aligned width " + std::to_string(aligned.dim()) +
                    ", model expects " + std::to_string(cfg.input_dim));
  const std::size_t t_count = aligned.num_frames();
  if (t_count == 0) throw DataError("acoustic_forward: no frames");
  if (mode == FeedbackMode::kTeacher) {
    if (!teacher_mel) throw DataError("acoustic_forward: teacher mode needs a teacher mel");
    if (teacher_mel->num_frames() != t_count || teacher_mel->dim() != cfg.mel_dim)
      throw DataError("acoustic_forward: teacher mel is " +
                      std::to_string(teacher_mel->num_frames()) + "x" +
                      std::to_string(teacher_mel->dim()) + ", expected " +
                      std::to_string(t_count) + "x" + std::to_string(cfg.mel_dim));
  }

  Matrix h = aligned.frames;
  for (std::size_t i = 0; i < cfg.ff_layers; ++i) {
    h = affine(h, w, "ff" + std::to_string(i + 1));
    apply(h, tanh_fn);
  }
  Matrix fw_x, bw_x;
  kernels::affine(h, w.data("blstm.fw.wx"), w.data("blstm.fw.b"), fw_x);
  kernels::affine(h, w.data("blstm.bw.wx"), w.data("blstm.bw.b"), bw_x);
  const Matrix fw = lstm_pass(fw_x, w.data("blstm.fw.wh"), cfg.blstm_dim, false);
  const Matrix bw = lstm_pass(bw_x, w.data("blstm.bw.wh"), cfg.blstm_dim, true);
  Matrix bl(t_count, 2 * cfg.blstm_dim);
  for (std::size_t t = 0; t < t_count; ++t) {
    auto dst = std::copy(fw.row(t).begin(), fw.row(t).end(), bl.row(t).begin());
    std::copy(bw.row(t).begin(), bw.row(t).end(), dst);
  }
  Matrix ar_x;
  kernels::affine(bl, w.data("ar.wx"), w.data("ar.b"), ar_x);

  // Autoregressive part: strictly sequential over frames.
  const std::size_t hd = cfg.ar_dim, md = cfg.mel_dim;
  const auto wfb = w.data("ar.wfb");
  const auto wh = w.data("ar.wh");
  const auto ow = w.data("out.w");
  const auto ob = w.data("out.b");
  FeatureMatrix out;
  out.kind = FeatureKind::kMelspec80;
  out.hop = aligned.hop;
  out.frames = Matrix(t_count, md);
  std::vector<double> hs(hd, 0.0), cs(hd, 0.0), gates(4 * hd), fb(md, 0.0);
  for (std::size_t t = 0; t < t_count; ++t) {
    if (t > 0) {
      const auto prev = mode == FeedbackMode::kTeacher ? teacher_mel->frames.row(t - 1)
                                                       : std::as_const(out.frames).row(t - 1);
      std::copy(prev.begin(), prev.end(), fb.begin());
    }
    const auto xr = ar_x.row(t);
    for (std::size_t g = 0; g < 4 * hd; ++g) {
      double acc = xr[g];
      const double* wf = wfb.data() + g * md;
      for (std::size_t k = 0; k < md; ++k) acc += wf[k] * fb[k];
      const double* wr = wh.data() + g * hd;
      for (std::size_t k = 0; k < hd; ++k) acc += wr[k] * hs[k];
      gates[g] = acc;
    }
    for (std::size_t k = 0; k < hd; ++k) {
      const double i = sigmoid(gates[k]);
      const double f = sigmoid(gates[hd + k]);
      const double g = std::tanh(gates[2 * hd + k]);
      const double o = sigmoid(gates[3 * hd + k]);
      cs[k] = f * cs[k] + i * g;
      hs[k] = o * std::tanh(cs[k]);
    }
    auto y = out.frames.row(t);
    for (std::size_t m = 0; m < md; ++m) {
      double acc = 0.0;
      const double* wr = ow.data() + m * hd;
      for (std::size_t k = 0; k < hd; ++k) acc += wr[k] * hs[k];
      y[m] = acc + ob[m];
    }
  }
  return out;
}

std::vector<double> nsf_source(std::span<const double> f0, std::uint64_t seed, double amplitude,
                               double noise_std, int sample_rate) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  std::vector<double> out(f0.size());
  Rng rng(seed);
  double phase = 0.0;
  for (std::size_t n = 0; n < f0.size(); ++n) {
    if (!(f0[n] >= 0.0)) throw DataError("nsf_source: negative or non-finite F0 at sample " +
                                         std::to_string(n));
    if (f0[n] > 0.0) {
      phase = std::fmod(phase + kTwoPi * f0[n] / sample_rate, kTwoPi);
      out[n] = amplitude * std::sin(phase);
    } else {
      out[n] = noise_std * rng.normal();
    }
  }
  return out;
}

std::vector<double> upsample_f0(const F0Contour& f0, std::size_t factor) {
  std::vector<double> out;
  out.reserve(f0.values.size() * factor);
  for (double v : f0.values) out.insert(out.end(), factor, v);
  return out;
}

Matrix nsf_condition(const FeatureMatrix& mel, const F0Contour& f0, const SpeakerEmbedding& xvec,
                     const ModelWeights& w) {
  const auto& cfg = w.config_as<NsfConfig>();
  const std::size_t t_count = mel.num_frames();
  if (t_count == 0) throw DataError("nsf: no frames");
  if (f0.values.size() != t_count)
    throw DataError("nsf: mel has " + std::to_string(t_count) + " frames but F0 has " +
                    std::to_string(f0.values.size()));
  if (mel.dim() + 2 + xvec.dim() != cfg.cond_input_dim)
    throw DataError("nsf: mel dim " + std::to_string(mel.dim()) + " + 2 + x-vector dim " +
                    std::to_string(xvec.dim()) + " != model condition width " +
                    std::to_string(cfg.cond_input_dim));
  const auto lf0 = interpolate_log_f0(f0);
  Matrix frames(t_count, cfg.cond_input_dim);
  for (std::size_t t = 0; t < t_count; ++t) {
    auto row = frames.row(t);
    auto it = std::copy(mel.frames.row(t).begin(), mel.frames.row(t).end(), row.begin());
    const bool voiced = f0.values[t] > 0.0;
    *it++ = voiced ? lf0[t] : 0.0;
    *it++ = voiced ? 1.0 : 0.0;
    std::copy(xvec.vector.begin(), xvec.vector.end(), it);
  }
  const Matrix proj = affine(frames, w, "cond");

  const std::size_t ch = cfg.channels, up = cfg.upsample;
  const std::size_t n_samples = t_count * up;
  const auto half = static_cast<std::ptrdiff_t>(cfg.smoothing / 2);
  const auto n_total = static_cast<std::ptrdiff_t>(n_samples);
  Matrix cond(n_samples, ch);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < n_total; ++n) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, n - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n_total - 1, n + half);
    auto dst = cond.row(static_cast<std::size_t>(n));
    for (std::ptrdiff_t m = lo; m <= hi; ++m) {
      const auto src = proj.row(static_cast<std::size_t>(m) / up);
      for (std::size_t c = 0; c < ch; ++c) dst[c] += src[c];
    }
    const double inv = 1.0 / static_cast<double>(hi - lo + 1);
    for (std::size_t c = 0; c < ch; ++c) dst[c] *= inv;
  }
  return cond;
}

std::vector<double> nsf_filter_block(std::span<const double> x, const Matrix& condition,
                                     const ModelWeights& w, std::size_t block) {
  const auto& cfg = w.config_as<NsfConfig>();
  const std::size_t n = x.size(), ch = cfg.channels;
  if (block >= cfg.blocks) throw DataError("nsf: block index out of range");
  if (condition.rows() != n || condition.cols() != ch)
    throw DataError("nsf: condition shape does not match signal");
  const std::string bp = block_prefix(block);

  Matrix h(n, ch);
  const auto in_w = w.data(bp + "in.w");
  const auto in_b = w.data(bp + "in.b");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < ch; ++c) h(i, c) = in_w[c] * x[i] + in_b[c];
  const Matrix cond = affine(condition, w, bp + "cond");

  Matrix skip(n, ch), pre, post;
  const auto dil = cfg.dilations();
  for (std::size_t k = 0; k < cfg.layers_per_block; ++k) {
    const std::string lp = layer_prefix(block, k);
    kernels::dilated_conv(h, {ch, 2 * ch, cfg.kernel, dil[k]}, w.data(lp + "conv.w"),
                          w.data(lp + "conv.b"), pre);
    Matrix gated(n, ch);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < ch; ++c)
        gated(i, c) = std::tanh(pre(i, c) + cond(i, c)) * sigmoid(pre(i, ch + c) + cond(i, ch + c));
    kernels::affine(gated, w.data(lp + "post.w"), w.data(lp + "post.b"), post);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < ch; ++c) {
        h(i, c) += post(i, c);
        skip(i, c) += post(i, ch + c);
      }
  }
  const Matrix y = affine(skip, w, bp + "out");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y(i, 0);
  return out;
}

Waveform nsf_forward(const FeatureMatrix& mel, const F0Contour& f0, const SpeakerEmbedding& xvec,
                     const ModelWeights& w, std::uint64_t seed) {
  const auto& cfg = w.config_as<NsfConfig>();
  const Matrix cond = nsf_condition(mel, f0, xvec, w);
  const auto f0_up = upsample_f0(f0, cfg.upsample);
  std::vector<double> x =
      nsf_source(f0_up, seed, cfg.sine_amplitude, cfg.noise_std, cfg.sample_rate);
  for (std::size_t b = 0; b < cfg.blocks; ++b) x = nsf_filter_block(x, cond, w, b);
  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples = std::move(x);
  for (double& v : out.samples) v = std::clamp(v, -1.0, 1.0);
  return out;
}

double spectral_loss(const Waveform& a, const Waveform& b) {
  if (a.samples.size() != b.samples.size())
    throw DataError("spectral_loss: lengths differ (" + std::to_string(a.samples.size()) +
                    " vs " + std::to_string(b.samples.size()) + ")");
  if (a.sample_rate != b.sample_rate) throw DataError("spectral_loss: sample rates differ");
  if (a.samples.empty()) throw DataError("spectral_loss: empty waveforms");
  constexpr std::pair<std::size_t, std::size_t> kResolutions[] = {{512, 80}, {128, 40}, {2048, 320}};
  constexpr double kAmpFloor = 1e-10;
  double total = 0.0;
  for (const auto& [fft, hop] : kResolutions) {
    const auto win = hann_window(fft);
    const std::size_t len = std::max(a.samples.size(), fft);
    const std::size_t frames = num_frames(len, fft, hop);
    double sum = 0.0;
    std::size_t count = 0;
    std::vector<double> fa(fft), fb(fft);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t i = 0; i < fft; ++i) {
        const std::size_t n = t * hop + i;
        const bool in = n < a.samples.size();
        fa[i] = in ? a.samples[n] * win[i] : 0.0;
        fb[i] = in ? b.samples[n] * win[i] : 0.0;
      }
      const auto sa = real_fft(fa, fft);
      const auto sb = real_fft(fb, fft);
      for (std::size_t k = 0; k < sa.size(); ++k) {
        const double d = std::log(std::max(std::abs(sa[k]), kAmpFloor)) -
                         std::log(std::max(std::abs(sb[k]), kAmpFloor));
        sum += d * d;
      }
      count += sa.size();
    }
    total += sum / static_cast<double>(count);
  }
  return total / 3.0;
}

}  // namespace xvanon
