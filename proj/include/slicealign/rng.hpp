// Copyright 2026 The slicealign Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace slicealign {

using Rng = std::mt19937_64;

// Named sub-seeds. All randomness in the toolkit flows from one master seed
// through these, so a purpose string plus an index fully identifies a stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose,
                          std::uint64_t index);

inline Rng make_rng(std::uint64_t seed, std::string_view purpose) {
  return Rng(derive_seed(seed, purpose));
}

inline Rng make_rng(std::uint64_t seed, std::string_view purpose,
                    std::uint64_t index) {
  return Rng(derive_seed(seed, purpose, index));
}

// Uniform in [0, 1). Uses the top 53 bits so the stream is identical across
// standard library implementations.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n) by rejection; n > 0.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

// Standard normal via Box-Muller on uniform01, again for portability.
double standard_normal(Rng& rng);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace slicealign
