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

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "slicealign/numeric.hpp"
#include "slicealign/rng.hpp"

namespace slicealign {

inline constexpr std::string_view kFindingPlaceholder = "{a}";
inline constexpr std::size_t kVariantsPerPolarity = 3;

enum class Polarity { kPositive, kNegative };

struct PromptEntry {
  std::string finding;
  std::array<std::string, kVariantsPerPolarity> positives;
  std::array<std::string, kVariantsPerPolarity> negatives;
};

// Per-finding prompt variants. Immutable once built; add() validates.
class PromptBank {
 public:
  void add(PromptEntry entry);
  const PromptEntry& at(std::string_view finding) const;
  bool contains(std::string_view finding) const;
  std::size_t size() const { return entries_.size(); }
  const std::vector<PromptEntry>& entries() const { return entries_; }

 private:
  std::vector<PromptEntry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Substitutes the finding into a template with exactly one "{a}" and
// upper-cases the first letter. A finding that lands mid-sentence gets its
// first letter lowered unless it looks like an acronym.
std::string render_prompt(std::string_view finding, std::string_view tmpl);
std::vector<std::string> render_prompts(std::string_view finding,
                                        std::span<const std::string> templates);

PromptEntry make_prompt_entry(std::string_view finding,
                              std::span<const std::string> positive_templates,
                              std::span<const std::string> negative_templates);

std::size_t sample_variant_index(Rng& rng);
const std::string& sample_variant(const PromptBank& bank, std::string_view finding,
                                  Polarity polarity, Rng& rng);

// Mean of the variant embeddings, re-normalized.
Vector averaged_prompt_embedding(std::span<const Vector> variants);

// Two-way softmax of the cosine similarities at temperature tau; returns the
// positive-class probability.
double classify_finding(const Vector& volume, const Vector& positive, const Vector& negative,
                        double tau);
double classify_from_similarities(double sim_positive, double sim_negative, double tau);

struct TemplatePair {
  std::string positive;
  std::string negative;
};

// Seven zero-shot templates. Only the first is a known published form; the
// others are placeholders meant to be replaced with the benchmark's own list.
std::vector<TemplatePair> default_inference_templates();

// Average of the per-template positive probabilities.
double template_averaged_probability(const Vector& volume,
                                     std::span<const std::pair<Vector, Vector>> per_template,
                                     double tau);

enum class Label : std::int8_t { kNegative = 0, kPositive = 1, kAbsent = -1 };

struct FindingCounts {
  std::int64_t n_pos = 0;
  std::int64_t n_neg = 0;
  double weight = 1.0;

  // n_neg == 0 leaves alpha undefined; such findings are left out of the loss.
  bool alpha_defined() const { return n_neg > 0; }
};

struct FindingLabelRecord {
  std::string volume_id;
  std::map<std::string, Label> labels;  // missing key == absent
};

// Target class -> source findings, aggregated with "any positive".
struct ClassMapping {
  std::vector<std::pair<std::string, std::vector<std::string>>> classes;
};

// Positive if any source is positive; absent if every source is absent;
// negative otherwise. Throws kUnmappedClass for a class with no sources.
std::vector<std::pair<std::string, Label>> map_labels(const FindingLabelRecord& record,
                                                      const ClassMapping& mapping);

// The 18 chest CT disease classes used by the public zero-shot benchmark.
const std::vector<std::string>& ctrate_classes();

// Findings in `mapped` get weight `ratio`, all others 1.
std::map<std::string, double> default_finding_weights(std::span<const std::string> vocabulary,
                                                      std::span<const std::string> mapped,
                                                      double ratio = 93.0 / 18.0);

}  // namespace slicealign
