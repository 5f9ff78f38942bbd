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

#include "xvanon/signal.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xvanon/error.hpp"
#include "xvanon/fft.hpp"

namespace xvanon {

using json = nlohmann::json;

std::string to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::kFbank24: return "fbank24";
    case FeatureKind::kFbank40: return "fbank40";
    case FeatureKind::kMelspec80: return "melspec80";
    case FeatureKind::kPpg: return "ppg";
    case FeatureKind::kAligned: return "aligned";
    case FeatureKind::kF0: return "f0";
  }
  return "?";
}

FeatureKind parse_feature_kind(std::string_view name) {
  for (auto k : {FeatureKind::kFbank24, FeatureKind::kFbank40, FeatureKind::kMelspec80,
                 FeatureKind::kPpg, FeatureKind::kAligned, FeatureKind::kF0})
    if (to_string(k) == name) return k;
  throw DataError("unknown feature kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// WAV

namespace {

std::uint32_t le32(std::string_view b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[off + i]);
  return v;
}

std::uint16_t le16(std::string_view b, std::size_t off) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[off]) |
                                    (static_cast<unsigned char>(b[off + 1]) << 8));
}

void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Waveform parse_wav(std::string_view b, int expected_rate) {
  auto need = [&](std::size_t off, std::size_t n, const char* what) {
    if (off + n > b.size())
      throw DataError("wav: truncated " + std::string(what) + " at byte offset " +
                      std::to_string(off) + " (file has " + std::to_string(b.size()) +
                      " bytes)");
  };
  need(0, 12, "RIFF header");
  if (b.substr(0, 4) != "RIFF" || b.substr(8, 4) != "WAVE")
    throw DataError("wav: not a RIFF/WAVE file (byte offset 0)");

  std::size_t off = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (true) {
    need(off, 8, "chunk header");
    const std::string_view id = b.substr(off, 4);
    const std::uint32_t size = le32(b, off + 4);
    const std::size_t body = off + 8;
    if (id == "fmt ") {
      need(body, 16, "fmt chunk");
      const std::uint16_t format = le16(b, body);
      channels = le16(b, body + 2);
      rate = le32(b, body + 4);
      bits = le16(b, body + 14);
      if (format != 1)
        throw DataError("wav: audio format " + std::to_string(format) +
                        " is not PCM (only 16-bit PCM is supported)");
      if (channels != 1)
        throw DataError("wav: " + std::to_string(channels) +
                        " channels; only mono is supported (downmix first)");
      if (bits != 16)
        throw DataError("wav: " + std::to_string(bits) + "-bit samples; only PCM16 is supported");
      if (static_cast<int>(rate) != expected_rate)
        throw DataError("wav: sample rate " + std::to_string(rate) + " Hz; expected " +
                        std::to_string(expected_rate) +
                        " Hz (no implicit resampling; resample the file first)");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw DataError("wav: data chunk before fmt chunk at byte offset " +
                                     std::to_string(off));
      need(body, size, "data chunk");
      if (size < 2) throw DataError("wav: empty data chunk at byte offset " + std::to_string(off));
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<std::int16_t>(le16(b, body + 2 * i)) / 32768.0;
      return w;
    }
    off = body + size + (size & 1u);
  }
}

Waveform read_wav(const std::filesystem::path& path, int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_wav(ss.str(), expected_rate);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string encode_wav(const Waveform& w) {
  if (w.samples.empty()) throw DataError("write_wav: empty waveform");
  if (w.sample_rate <= 0) throw DataError("write_wav: invalid sample rate");
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::string s;
  s.reserve(44 + data_bytes);
  s += "RIFF";
  put32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  put32(s, 16);
  put16(s, 1);
  put16(s, 1);
  put32(s, static_cast<std::uint32_t>(w.sample_rate));
  put32(s, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put16(s, 2);
  put16(s, 16);
  s += "data";
  put32(s, data_bytes);
  for (double x : w.samples) {
    if (!std::isfinite(x)) throw DataError("write_wav: non-finite sample");
    const double q = std::nearbyint(std::clamp(x, -1.0, 1.0) * 32768.0);
    put16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0))));
  }
  return s;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  const std::string bytes = encode_wav(w);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Mel features

std::size_t num_frames(std::size_t num_samples, std::size_t frame_len, std::size_t hop_len) {
  if (num_samples < frame_len || hop_len == 0) return 0;
  return (num_samples - frame_len) / hop_len + 1;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(std::size_t n_mels, std::size_t fft_size, int sample_rate, double low_hz,
                      double high_hz) {
  if (n_mels == 0) throw ConfigError("mel_filterbank: n_mels must be positive");
  const std::size_t bins = fft_size / 2 + 1;
  const double mlo = hz_to_mel(low_hz), mhi = hz_to_mel(high_hz);
  const double step = (mhi - mlo) / static_cast<double>(n_mels + 1);
  Matrix fb(n_mels, bins);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = mlo + step * static_cast<double>(m);
    const double center = left + step;
    const double right = center + step;
    for (std::size_t k = 0; k < bins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * sample_rate /
                                   static_cast<double>(fft_size));
      double v = 0.0;
      if (mel > left && mel <= center)
        v = (mel - left) / (center - left);
      else if (mel > center && mel < right)
        v = (right - mel) / (right - center);
      fb(m, k) = v;
    }
  }
  return fb;
}

FeatureMatrix mel_features(const Waveform& w, std::size_t n_mels, double hop_seconds) {
  FeatureMatrix out;
  switch (n_mels) {
    case 24: out.kind = FeatureKind::kFbank24; break;
    case 40: out.kind = FeatureKind::kFbank40; break;
    case 80: out.kind = FeatureKind::kMelspec80; break;
    default: throw ConfigError("mel_features: n_mels must be 24, 40 or 80");
  }
  if (w.sample_rate <= 0) throw DataError("mel_features: invalid sample rate");
  const auto hop = static_cast<std::size_t>(std::lround(hop_seconds * w.sample_rate));
  const auto frame = static_cast<std::size_t>(std::lround(0.025 * w.sample_rate));
  if (hop == 0) throw ConfigError("mel_features: hop must be at least one sample");
  const std::size_t fft = std::max<std::size_t>(kFftSize, std::bit_ceil(frame));
  const std::size_t t_count = num_frames(w.samples.size(), frame, hop);
  if (t_count == 0)
    throw DataError("mel_features: waveform has " + std::to_string(w.samples.size()) +
                    " samples, shorter than one " + std::to_string(frame) + "-sample frame");

  const Matrix fb = mel_filterbank(n_mels, fft, w.sample_rate);
  const auto win = hann_window(frame);
  out.hop = hop_seconds;
  out.frames = Matrix(t_count, n_mels);
  const auto t_total = static_cast<std::ptrdiff_t>(t_count);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ti = 0; ti < t_total; ++ti) {
    const auto t = static_cast<std::size_t>(ti);
    std::vector<double> buf(frame);
    for (std::size_t i = 0; i < frame; ++i) buf[i] = w.samples[t * hop + i] * win[i];
    const auto pow = power_spectrum(buf, fft);
    for (std::size_t m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < pow.size(); ++k) e += fb(m, k) * pow[k];
      out.frames(t, m) = e > 1e-10 ? std::log(e) : kLogFloor;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// F0

F0Contour extract_f0(const Waveform& w, const F0Options& opts) {
  if (w.sample_rate < 8000) throw DataError("extract_f0: sample rate must be >= 8000 Hz");
  const double fs = w.sample_rate;
  const auto hop = static_cast<std::size_t>(std::lround(kF0Hop * fs));
  const auto frame = static_cast<std::size_t>(std::lround(0.025 * fs));
  const auto min_lag = static_cast<std::size_t>(std::ceil(fs / opts.max_hz));
  const auto max_lag = static_cast<std::size_t>(std::floor(fs / opts.min_hz));
  const std::size_t t_count = num_frames(w.samples.size(), frame, hop);

  F0Contour out;
  out.values.assign(t_count, 0.0);
  const auto& x = w.samples;
  const auto sample = [&](std::size_t i) { return i < x.size() ? x[i] : 0.0; };
  const auto t_total = static_cast<std::ptrdiff_t>(t_count);

  // The correlation window is one frame; lagged copies may read up to
  // max_lag samples past the frame end (zeros beyond the signal).
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ti = 0; ti < t_total; ++ti) {
    const auto t = static_cast<std::size_t>(ti);
    const std::size_t start = t * hop;
    std::vector<double> seg(frame + max_lag + 2);
    double mean = 0.0;
    for (std::size_t i = 0; i < frame; ++i) mean += sample(start + i);
    mean /= static_cast<double>(frame);
    for (std::size_t i = 0; i < seg.size(); ++i) seg[i] = sample(start + i) - mean;

    double e0 = 0.0;
    for (std::size_t i = 0; i < frame; ++i) e0 += seg[i] * seg[i];
    if (e0 / static_cast<double>(frame) <= opts.silence_energy) continue;

    // nccf[l] for lags min_lag-1 .. max_lag+1 (the ends feed interpolation).
    const std::size_t lo = min_lag - 1, hi = max_lag + 1;
    std::vector<double> nccf(hi - lo + 1, 0.0);
    for (std::size_t lag = lo; lag <= hi; ++lag) {
      double num = 0.0, el = 0.0;
      for (std::size_t i = 0; i < frame; ++i) {
        num += seg[i] * seg[i + lag];
        el += seg[i + lag] * seg[i + lag];
      }
      nccf[lag - lo] = el > 0.0 ? num / std::sqrt(e0 * el) : 0.0;
    }

    double best = -1.0;
    for (std::size_t lag = min_lag; lag <= max_lag; ++lag) best = std::max(best, nccf[lag - lo]);
    if (best < opts.threshold) continue;

    // Shortest-lag local peak within 90% of the best one avoids octave-down errors.
    std::size_t pick = 0;
    for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
      const double c = nccf[lag - lo];
      if (c >= 0.9 * best && c >= nccf[lag - lo - 1] && c >= nccf[lag - lo + 1]) {
        pick = lag;
        break;
      }
    }
    if (pick == 0) continue;
    const double a = nccf[pick - lo - 1], b = nccf[pick - lo], c = nccf[pick - lo + 1];
    const double denom = a - 2.0 * b + c;
    double offset = denom < 0.0 ? 0.5 * (a - c) / denom : 0.0;
    offset = std::clamp(offset, -0.5, 0.5);
    const double f0 = fs / (static_cast<double>(pick) + offset);
    if (f0 >= opts.min_hz && f0 <= opts.max_hz) out.values[t] = f0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Alignment

std::vector<double> interpolate_log_f0(const F0Contour& f0) {
  const auto& v = f0.values;
  std::vector<double> out(v.size(), 0.0);
  std::ptrdiff_t prev = -1;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] <= 0.0) continue;
    out[i] = std::log(v[i]);
    if (prev < 0) {
      for (std::size_t j = 0; j < i; ++j) out[j] = out[i];
    } else {
      const auto p = static_cast<std::size_t>(prev);
      for (std::size_t j = p + 1; j < i; ++j) {
        const double a = static_cast<double>(j - p) / static_cast<double>(i - p);
        out[j] = out[p] + a * (out[i] - out[p]);
      }
    }
    prev = static_cast<std::ptrdiff_t>(i);
  }
  if (prev >= 0)
    for (std::size_t j = static_cast<std::size_t>(prev) + 1; j < v.size(); ++j)
      out[j] = out[static_cast<std::size_t>(prev)];
  return out;
}

FeatureMatrix align_streams(const FeatureMatrix& ppg, const F0Contour& f0,
                            const SpeakerEmbedding& xvec, bool mask_unvoiced) {
  const std::size_t tp = ppg.num_frames(), tf = f0.values.size();
  if (tp == 0 || tf == 0) throw DataError("align_streams: empty stream");
  const std::size_t doubled = 2 * tp;
  const std::size_t gap = doubled > tf ? doubled - tf : tf - doubled;
  if (gap > 2)
    throw DataError("align_streams: PPG has " + std::to_string(tp) + " frames (" +
                    std::to_string(doubled) + " at 5 ms) but F0 has " + std::to_string(tf) +
                    "; streams are desynchronized");
  validate_embedding(xvec);
  const std::size_t t_count = std::min(doubled, tf);
  const std::size_t pd = ppg.dim(), xd = xvec.dim();
  const auto lf0 = interpolate_log_f0(f0);

  FeatureMatrix out;
  out.kind = FeatureKind::kAligned;
  out.hop = kF0Hop;
  out.frames = Matrix(t_count, pd + 2 + xd);
  for (std::size_t t = 0; t < t_count; ++t) {
    auto row = out.frames.row(t);
    const auto src = ppg.frames.row(t / 2);
    std::copy(src.begin(), src.end(), row.begin());
    const bool voiced = f0.values[t] > 0.0;
    row[pd] = (mask_unvoiced && !voiced) ? 0.0 : lf0[t];
    row[pd + 1] = voiced ? 1.0 : 0.0;
    std::copy(xvec.vector.begin(), xvec.vector.end(), row.begin() + static_cast<std::ptrdiff_t>(pd + 2));
  }
  return out;
}

F0Contour f0_from_aligned(const FeatureMatrix& aligned, std::size_t ppg_dim) {
  if (aligned.dim() < ppg_dim + 2) throw DataError("f0_from_aligned: matrix too narrow");
  F0Contour out;
  out.hop = aligned.hop;
  out.values.resize(aligned.num_frames());
  for (std::size_t t = 0; t < aligned.num_frames(); ++t)
    out.values[t] =
        aligned.frames(t, ppg_dim + 1) > 0.5 ? std::exp(aligned.frames(t, ppg_dim)) : 0.0;
  return out;
}

FeatureMatrix f0_to_features(const F0Contour& f0) {
  FeatureMatrix m;
  m.kind = FeatureKind::kF0;
  m.hop = f0.hop;
  m.frames = Matrix(f0.values.size(), 1);
  std::copy(f0.values.begin(), f0.values.end(), m.frames.data().begin());
  return m;
}

F0Contour features_to_f0(const FeatureMatrix& m) {
  if (m.kind != FeatureKind::kF0 || m.dim() != 1)
    throw DataError("expected an f0 feature file, got kind " + to_string(m.kind));
  F0Contour f;
  f.hop = m.hop;
  f.values = m.frames.data();
  for (double v : f.values)
    if (!(v >= 0.0)) throw DataError("f0 file holds a negative or non-finite value");
  return f;
}

// ---------------------------------------------------------------------------
// Feature files

std::string format_features(const FeatureMatrix& m) {
  std::string out = json{{"kind", to_string(m.kind)},
                         {"hop", m.hop},
                         {"dim", m.dim()},
                         {"frames", m.num_frames()}}
                        .dump();
  out += '\n';
  for (std::size_t t = 0; t < m.num_frames(); ++t) {
    const auto r = m.frames.row(t);
    out += json{{"t", t}, {"vec", std::vector<double>(r.begin(), r.end())}}.dump();
    out += '\n';
  }
  return out;
}

FeatureMatrix parse_features(std::string_view text, std::string_view source) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw DataError(std::string(source) + ":" + std::to_string(line_no) + ": " + what);
  };
  auto parse_line = [&](const std::string& l) {
    try {
      return json::parse(l);
    } catch (const json::exception& e) {
      fail(std::string("malformed record: ") + e.what());
    }
    return json();
  };
  ++line_no;
  if (!std::getline(in, line)) fail("missing header record");
  const json h = parse_line(line);
  if (!h.is_object() || !h.contains("kind") || !h.contains("hop") || !h.contains("dim") ||
      !h.contains("frames"))
    fail("header needs kind, hop, dim, frames");
  FeatureMatrix m;
  try {
    m.kind = parse_feature_kind(h["kind"].get<std::string>());
    m.hop = h["hop"].get<double>();
    const auto dim = h["dim"].get<std::size_t>();
    const auto frames = h["frames"].get<std::size_t>();
    m.frames = Matrix(frames, dim);
  } catch (const json::exception& e) {
    fail(std::string("bad header: ") + e.what());
  }
  std::size_t t = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json r = parse_line(line);
    if (t >= m.num_frames()) fail("more rows than the header's frame count");
    if (!r.contains("vec") || !r["vec"].is_array() || r["vec"].size() != m.dim())
      fail("row " + std::to_string(t) + " must hold " + std::to_string(m.dim()) + " values");
    for (std::size_t c = 0; c < m.dim(); ++c) {
      if (!r["vec"][c].is_number()) fail("non-numeric value in row " + std::to_string(t));
      m.frames(t, c) = r["vec"][c].get<double>();
    }
    ++t;
  }
  if (t != m.num_frames())
    throw DataError(std::string(source) + ": header promises " +
                    std::to_string(m.num_frames()) + " frames, file holds " + std::to_string(t));
  return m;
}

void save_features(const FeatureMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_features(m);
}

FeatureMatrix load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_features(ss.str(), path.string());
}

}  // namespace xvanon
