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

#include "xvanon/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "xvanon/error.hpp"
#include "xvanon/rng.hpp"

namespace xvanon {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"run", {"seed", "jobs"}},
      {"paths", {"pool", "weights_dir", "input_dir", "output_dir"}},
      {"features", {"sample_rate", "f0_threshold", "ppg_tap", "mask_unvoiced"}},
      {"models", {"xvector_speakers", "pool_variance", "nsf_channels"}},
      {"anonymization", {"strategy", "m", "sim", "eps", "shared", "rng", "range_subsample"}},
      {"evaluation", {"k", "repetitions", "gender_partition"}},
      {"simulation",
       {"n_speakers", "utterances", "spread", "pool_size", "dim", "strategies", "m_grid", "s_grid",
        "eps"}},
  };
  return s;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Reader {
 public:
  Reader(std::string key, std::string value) : key_(std::move(key)), value_(trim(std::move(value))) {}

  std::uint64_t u64() const {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(value_.data(), value_.data() + value_.size(), v);
    if (ec != std::errc() || p != value_.data() + value_.size() || value_.empty()) bad("an unsigned integer");
    return v;
  }
  std::size_t size() const { return static_cast<std::size_t>(u64()); }
  std::size_t positive() const {
    const auto v = size();
    if (v == 0) bad("a positive integer");
    return v;
  }
  double real() const {
    double v = 0.0;
    auto [p, ec] = std::from_chars(value_.data(), value_.data() + value_.size(), v);
    if (ec != std::errc() || p != value_.data() + value_.size() || value_.empty()) bad("a number");
    return v;
  }
  bool boolean() const {
    if (value_ == "true" || value_ == "1" || value_ == "yes") return true;
    if (value_ == "false" || value_ == "0" || value_ == "no") return false;
    bad("true or false");
    return false;
  }
  const std::string& str() const { return value_; }

  [[noreturn]] void bad(const std::string& expected) const {
    throw ConfigError("config key '" + key_ + "': expected " + expected + ", got '" + value_ + "'");
  }

 private:
  std::string key_, value_;
};

template <class T>
std::string join(const std::vector<T>& v, auto fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

std::string real_str(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

std::optional<std::size_t> parse_k(const std::string& text) {
  if (text == "all") return std::nullopt;
  return Reader("evaluation.k", text).positive();
}

void RunConfig::validate() const {
  if (jobs < 1) throw ConfigError("run.jobs must be >= 1");
  if (sample_rate != kSampleRate)
    throw ConfigError("features.sample_rate must be " + std::to_string(kSampleRate) +
                      " (resampling is not supported)");
  if (!(f0_threshold > 0.0 && f0_threshold < 1.0))
    throw ConfigError("features.f0_threshold must be in (0, 1)");
  if (rng != kRngAlgorithm)
    throw ConfigError("anonymization.rng '" + rng + "' is not supported (only " +
                      std::string(kRngAlgorithm) + ")");
  anon.validate();
  if (k_values.empty()) throw ConfigError("evaluation.k needs at least one value");
  if (repetitions == 0) throw ConfigError("evaluation.repetitions must be >= 1");
  const auto& s = simulation;
  if (s.n_speakers < 2 || s.utterances < 2 || s.pool_size == 0 || s.dim == 0)
    throw ConfigError("simulation needs >= 2 speakers, >= 2 utterances, a pool and dim > 0");
  if (!(s.spread >= 0.0)) throw ConfigError("simulation.spread must be >= 0");
  if (s.strategies.empty()) throw ConfigError("simulation.strategies is empty");
  for (auto st : s.strategies) {
    if ((st == Strategy::kRandom || st == Strategy::kNearest) && s.m_grid.empty())
      throw ConfigError("simulation.m_grid is empty");
    if (st == Strategy::kRange && s.s_grid.empty()) throw ConfigError("simulation.s_grid is empty");
  }
  for (auto m : s.m_grid)
    if (m == 0 || m > s.pool_size)
      throw ConfigError("simulation.m_grid value " + std::to_string(m) + " outside [1, pool_size]");
  for (auto v : s.s_grid)
    if (!(v >= -1.0 && v <= 1.0)) throw ConfigError("simulation.s_grid values must be in [-1, 1]");
  if (!(s.eps > 0.0)) throw ConfigError("simulation.eps must be > 0");
  if (models.xvector_speakers == 0 || models.nsf_channels == 0)
    throw ConfigError("models sizes must be positive");
}

std::uint64_t RunConfig::require_seed(std::string_view why) const {
  if (!seed) throw ConfigError(std::string(why) + " needs a seed ([run] seed or --seed)");
  return *seed;
}

std::string RunConfig::echo() const {
  std::ostringstream o;
  auto k_str = [](const std::optional<std::size_t>& k) { return k ? std::to_string(*k) : "all"; };
  o << "[run]\n";
  if (seed) o << "seed = " << *seed << "\n";
  o << "jobs = " << jobs << "\n";
  o << "[paths]\n";
  o << "pool = " << pool.string() << "\n";
  o << "weights_dir = " << weights_dir.string() << "\n";
  o << "input_dir = " << input_dir.string() << "\n";
  o << "output_dir = " << output_dir.string() << "\n";
  o << "[features]\n";
  o << "sample_rate = " << sample_rate << "\n";
  o << "f0_threshold = " << real_str(f0_threshold) << "\n";
  o << "ppg_tap = " << to_string(ppg_tap) << "\n";
  o << "mask_unvoiced = " << (mask_unvoiced ? "true" : "false") << "\n";
  o << "[models]\n";
  o << "xvector_speakers = " << models.xvector_speakers << "\n";
  o << "pool_variance = " << (models.pool_variance ? "true" : "false") << "\n";
  o << "nsf_channels = " << models.nsf_channels << "\n";
  o << "[anonymization]\n";
  o << "strategy = " << to_string(anon.strategy) << "\n";
  o << "m = " << anon.m << "\n";
  o << "sim = " << real_str(anon.sim) << "\n";
  o << "eps = " << real_str(anon.eps) << "\n";
  if (anon.range_subsample) o << "range_subsample = " << *anon.range_subsample << "\n";
  o << "shared = " << (shared ? "true" : "false") << "\n";
  o << "rng = " << rng << "\n";
  o << "[evaluation]\n";
  o << "k = " << join(k_values, k_str) << "\n";
  o << "repetitions = " << repetitions << "\n";
  o << "gender_partition = " << (gender_partition ? "true" : "false") << "\n";
  const auto& s = simulation;
  o << "[simulation]\n";
  o << "n_speakers = " << s.n_speakers << "\n";
  o << "utterances = " << s.utterances << "\n";
  o << "spread = " << real_str(s.spread) << "\n";
  o << "pool_size = " << s.pool_size << "\n";
  o << "dim = " << s.dim << "\n";
  o << "strategies = " << join(s.strategies, [](Strategy x) { return to_string(x); }) << "\n";
  o << "m_grid = " << join(s.m_grid, [](std::size_t x) { return std::to_string(x); }) << "\n";
  o << "s_grid = " << join(s.s_grid, real_str) << "\n";
  o << "eps = " << real_str(s.eps) << "\n";
  return o.str();
}

XVectorConfig RunConfig::xvector_config() const {
  XVectorConfig c;
  c.num_speakers = models.xvector_speakers;
  c.pool_variance = models.pool_variance;
  return c;
}

PpgConfig RunConfig::ppg_config() const { return PpgConfig{}; }

AcousticConfig RunConfig::acoustic_config() const {
  AcousticConfig c;
  c.input_dim = ppg_config().tap_dim(ppg_tap) + 2 + xvector_config().embedding_dim;
  return c;
}

NsfConfig RunConfig::nsf_config() const {
  NsfConfig c;
  c.cond_input_dim = acoustic_config().mel_dim + 2 + xvector_config().embedding_dim;
  c.channels = models.nsf_channels;
  return c;
}

RunConfig parse_config(std::string_view text, std::string_view source) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string(source) + ": line " + std::to_string(e.line()) + ": " +
                      e.message());
  }

  RunConfig c;
  for (const auto& [section, body] : tree) {
    auto sit = schema().find(section);
    if (sit == schema().end()) {
      if (body.empty())
        throw ConfigError(std::string(source) + ": key '" + section + "' outside any section");
      throw ConfigError(std::string(source) + ": unknown section [" + section + "]");
    }
    for (const auto& [key, node] : body) {
      if (!sit->second.count(key))
        throw ConfigError(std::string(source) + ": unknown key '" + key + "' in [" + section + "]");
      const Reader r(section + "." + key, node.data());
      if (section == "run") {
        if (key == "seed") c.seed = r.u64();
        if (key == "jobs") c.jobs = static_cast<int>(r.positive());
      } else if (section == "paths") {
        if (key == "pool") c.pool = r.str();
        if (key == "weights_dir") c.weights_dir = r.str();
        if (key == "input_dir") c.input_dir = r.str();
        if (key == "output_dir") c.output_dir = r.str();
      } else if (section == "features") {
        if (key == "sample_rate") c.sample_rate = static_cast<int>(r.positive());
        if (key == "f0_threshold") c.f0_threshold = r.real();
        if (key == "ppg_tap") c.ppg_tap = parse_ppg_tap(r.str());
        if (key == "mask_unvoiced") c.mask_unvoiced = r.boolean();
      } else if (section == "models") {
        if (key == "xvector_speakers") c.models.xvector_speakers = r.positive();
        if (key == "pool_variance") c.models.pool_variance = r.boolean();
        if (key == "nsf_channels") c.models.nsf_channels = r.positive();
      } else if (section == "anonymization") {
        if (key == "strategy") c.anon.strategy = parse_strategy(r.str());
        if (key == "m") c.anon.m = r.size();
        if (key == "sim") c.anon.sim = r.real();
        if (key == "eps") c.anon.eps = r.real();
        if (key == "shared") c.shared = r.boolean();
        if (key == "rng") c.rng = r.str();
        if (key == "range_subsample") c.anon.range_subsample = r.positive();
      } else if (section == "evaluation") {
        if (key == "k") {
          c.k_values.clear();
          for (const auto& k : split_list(r.str())) c.k_values.push_back(parse_k(k));
        }
        if (key == "repetitions") c.repetitions = r.positive();
        if (key == "gender_partition") c.gender_partition = r.boolean();
      } else if (section == "simulation") {
        auto& s = c.simulation;
        if (key == "n_speakers") s.n_speakers = r.positive();
        if (key == "utterances") s.utterances = r.positive();
        if (key == "spread") s.spread = r.real();
        if (key == "pool_size") s.pool_size = r.positive();
        if (key == "dim") s.dim = r.positive();
        if (key == "eps") s.eps = r.real();
        if (key == "strategies") {
          s.strategies.clear();
          for (const auto& v : split_list(r.str())) s.strategies.push_back(parse_strategy(v));
        }
        if (key == "m_grid") {
          s.m_grid.clear();
          for (const auto& v : split_list(r.str()))
            s.m_grid.push_back(Reader("simulation.m_grid", v).positive());
        }
        if (key == "s_grid") {
          s.s_grid.clear();
          for (const auto& v : split_list(r.str()))
            s.s_grid.push_back(Reader("simulation.s_grid", v).real());
        }
      }
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

}  // namespace xvanon
