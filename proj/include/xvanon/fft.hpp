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

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace xvanon {

/// Real-input DFT of `frame` zero-padded (or truncated) to n points. Returns
/// the n/2 + 1 non-negative-frequency bins. Thread-safe.
std::vector<std::complex<double>> real_fft(std::span<const double> frame, std::size_t n);

/// |X[k]|^2 for the bins of real_fft.
std::vector<double> power_spectrum(std::span<const double> frame, std::size_t n);

/// Periodic Hann window of the given length.
std::vector<double> hann_window(std::size_t length);

}  // namespace xvanon
