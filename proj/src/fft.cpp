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

#include "xvanon/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace xvanon {
namespace {

// FFTW planning is not thread-safe but executing a plan on caller-owned
// arrays is, so plans are created once per size under a lock and reused.
struct PlanCache {
  std::mutex mu;
  std::map<std::size_t, fftw_plan> plans;

  fftw_plan get(std::size_t n) {
    std::lock_guard<std::mutex> lock(mu);
    auto it = plans.find(n);
    if (it != plans.end()) return it->second;
    std::vector<double> in(n);
    std::vector<fftw_complex> out(n / 2 + 1);
    fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.data(),
                                       FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans.emplace(n, p);
    return p;
  }

  ~PlanCache() {
    for (auto& [n, p] : plans) fftw_destroy_plan(p);
  }
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

}  // namespace

std::vector<std::complex<double>> real_fft(std::span<const double> frame, std::size_t n) {
  std::vector<double> in(n, 0.0);
  std::copy_n(frame.begin(), std::min(n, frame.size()), in.begin());
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_execute_dft_r2c(cache().get(n), in.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

std::vector<double> power_spectrum(std::span<const double> frame, std::size_t n) {
  const auto spec = real_fft(frame, n);
  std::vector<double> p(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) p[k] = std::norm(spec[k]);
  return p;
}

std::vector<double> hann_window(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t i = 0; i < length; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(length));
  return w;
}

}  // namespace xvanon
