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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slicealign/numeric.hpp"
#include "slicealign/objectives.hpp"
#include "slicealign/prompt_engine.hpp"
#include "slicealign/report_miner.hpp"

namespace slicealign {

// Desk-scale stand-in for frozen encoder outputs.
struct SynthConfig {
  std::size_t n_pairs = 2048;
  std::size_t raw_dim = 256;
  std::size_t proj_dim = 64;  // width the heads project to; copied into TrainConfig by run configs
  std::size_t n_findings = 16;
  int depth_D = 32;
  double pitch_mm = 12.0;
  double pair_signal = 0.8;
  double label_signal = 0.8;
  double depth_signal = 0.8;
  double noise = 0.05;  // isotropic jitter added to every generated vector
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

const char* split_name(Split s);

// Everything the trainer and the evaluation protocols consume. All embedding
// rows are unit-norm "raw" encoder outputs; projection heads map them to the
// shared space.
struct Corpus {
  std::vector<std::string> volume_ids;
  std::vector<std::string> patient_ids;
  std::vector<Split> splits;

  Matrix images;    // N x raw
  Matrix texts;     // N x raw
  Matrix snippets;  // N x raw, one mined snippet per volume
  Matrix depth;     // (N * D) x raw, volume i owns rows [i*D, (i+1)*D)
  DepthGrid grid;
  std::vector<int> depth_index;      // 1-based d* per snippet
  std::vector<double> snippet_mm;    // true axial position per snippet
  std::vector<double> axial_length_mm;

  std::vector<std::string> findings;
  std::vector<std::vector<Label>> labels;  // N x F
  std::vector<FindingCounts> counts;       // training split
  PromptBank prompts;
  // (F * 6) x raw: row q*6 + v for positive variant v, q*6 + 3 + v for negative.
  Matrix prompt_embeddings;

  std::vector<Report> reports;

  std::size_t size() const { return static_cast<std::size_t>(images.rows()); }
  std::size_t raw_dim() const { return static_cast<std::size_t>(images.cols()); }
  std::size_t num_findings() const { return findings.size(); }
  Matrix depth_block(std::size_t i) const;
  std::vector<std::size_t> indices(Split split) const;
  Eigen::Index prompt_row(std::size_t finding, Polarity polarity, std::size_t variant) const {
    return static_cast<Eigen::Index>(finding * 6 + (polarity == Polarity::kNegative ? 3 : 0) +
                                     variant);
  }

  // Structural consistency of all fields; throws kInvalidConfig.
  void validate() const;
};

Corpus generate(const SynthConfig& cfg);

// Exact per-finding counts over the volumes of `which` split.
std::vector<FindingCounts> plant_counts(const std::vector<std::vector<Label>>& labels,
                                        std::span<const Split> splits,
                                        Split which = Split::kTrain);

}  // namespace slicealign
