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
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "slicealign/eval.hpp"
#include "slicealign/numeric.hpp"
#include "slicealign/report_miner.hpp"
#include "slicealign/synthetic.hpp"
#include "slicealign/trainer.hpp"

namespace slicealign {

namespace fs = std::filesystem;

// Binary embedding file:
//   "REMB" | u32 version | u32 header bytes | JSON header | count*dim f32 LE
// The header is {"count", "dim", "dtype": "f32", "layout": "row-major",
// "ids": [...]?}. Values are stored as 32-bit floats.
inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

struct EmbeddingFile {
  Matrix values;
  std::vector<std::string> ids;  // empty when the file carries none
};

void write_embeddings(const fs::path& path, const Matrix& values,
                      const std::vector<std::string>& ids = {});
EmbeddingFile read_embeddings(const fs::path& path);

// Checkpoint:
//   "RFKT" | u32 version | u64 metadata bytes | JSON metadata | f32 LE tensors
// Metadata lists the tensors in payload order with their shapes.
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct CheckpointInfo {
  std::size_t raw_dim = 0;
  std::size_t proj_dim = 0;
  std::int64_t step = 0;
  std::string config_hash;
};

void save_checkpoint(const fs::path& path, const TrainState& state,
                     const std::string& config_hash);
TrainState load_checkpoint(const fs::path& path, CheckpointInfo* info = nullptr);

// JSON Lines: calls fn on every non-blank line with its 1-based number.
// Readers throw kFormat naming the file and line on bad input.
void for_each_json_line(std::istream& in,
                        const std::function<void(const std::string& line, std::size_t lineno)>& fn);

std::vector<Report> read_reports(const fs::path& path);
void write_reports(const fs::path& path, const std::vector<Report>& reports);

struct SnippetRecord {
  std::string report_id;
  SliceReference reference;
  std::string text;
  std::optional<double> axial_mm;
  std::optional<int> depth_index;
};

void write_snippets(std::ostream& out, const std::vector<SnippetRecord>& snippets);

// Each line is either {"report_id", "references": [[S, I], ...]} or a snippet
// record carrying "series" and "image". Lines with the same id merge.
ReferenceSets read_reference_sets(const fs::path& path);

// Prompt bank lines: {"finding", "positives": [3], "negatives": [3]}.
void write_prompt_bank(const fs::path& path, const PromptBank& bank);
PromptBank read_prompt_bank(const fs::path& path);

// Directory layout written by gen-synth and read by train and eval.
void save_corpus(const fs::path& dir, const Corpus& corpus);
Corpus load_corpus(const fs::path& dir);

// Run configuration: {"synth": {...}, "train": {...}, "eval": {...}}. Every
// section is optional; unknown keys raise kInvalidConfig.
struct RunConfig {
  SynthConfig synth;
  TrainConfig train;
  EvalProtocols eval;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const fs::path& path);
// Canonical JSON of every resolved field.
std::string run_config_json(const RunConfig& cfg);
// Hex FNV-1a of the canonical JSON.
std::string config_hash(const RunConfig& cfg);

std::string epoch_log_json(const EpochLog& log);
std::string metrics_json(const EvalResult& result);

struct Manifest {
  std::string command;
  std::string config_hash;
  std::uint64_t synth_seed = 0;
  std::uint64_t train_seed = 0;
  std::uint64_t eval_seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

std::string manifest_json(const Manifest& m);

void write_text_file(const fs::path& path, const std::string& text);
std::string read_text_file(const fs::path& path);

}  // namespace slicealign
