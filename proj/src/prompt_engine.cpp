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

#include "slicealign/prompt_engine.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "slicealign/error.hpp"

namespace slicealign {
namespace {

bool looks_like_acronym(std::string_view word) {
  return word.size() >= 2 && std::isupper(static_cast<unsigned char>(word[0])) &&
         std::isupper(static_cast<unsigned char>(word[1]));
}

}  // namespace

void PromptBank::add(PromptEntry entry) {
  if (entry.finding.empty()) throw Error(ErrorCode::kInvalidPromptBank, "empty finding name");
  if (index_.count(entry.finding)) {
    throw Error(ErrorCode::kInvalidPromptBank, "duplicate finding " + entry.finding);
  }
  std::set<std::string> seen;
  for (const auto* group : {&entry.positives, &entry.negatives}) {
    for (const auto& v : *group) {
      if (v.empty()) {
        throw Error(ErrorCode::kInvalidPromptBank, "empty variant for " + entry.finding);
      }
      if (!seen.insert(v).second) {
        throw Error(ErrorCode::kInvalidPromptBank, "repeated variant '" + v + "'");
      }
    }
  }
  index_.emplace(entry.finding, entries_.size());
  entries_.push_back(std::move(entry));
}

const PromptEntry& PromptBank::at(std::string_view finding) const {
  const auto it = index_.find(finding);
  if (it == index_.end()) {
    throw Error(ErrorCode::kUnknownFinding, "no prompts for '" + std::string(finding) + "'");
  }
  return entries_[it->second];
}

bool PromptBank::contains(std::string_view finding) const { return index_.count(finding) > 0; }

std::string render_prompt(std::string_view finding, std::string_view tmpl) {
  const auto at = tmpl.find(kFindingPlaceholder);
  if (at == std::string_view::npos ||
      tmpl.find(kFindingPlaceholder, at + kFindingPlaceholder.size()) != std::string_view::npos) {
    throw Error(ErrorCode::kMissingPlaceholder,
                "template '" + std::string(tmpl) + "' must contain {a} exactly once");
  }
  std::string name(finding);
  if (at > 0 && !name.empty() && !looks_like_acronym(name)) {
    name[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(name[0])));
  }
  std::string out;
  out.reserve(tmpl.size() + name.size());
  out.append(tmpl.substr(0, at));
  out.append(name);
  out.append(tmpl.substr(at + kFindingPlaceholder.size()));
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::vector<std::string> render_prompts(std::string_view finding,
                                        std::span<const std::string> templates) {
  std::vector<std::string> out;
  out.reserve(templates.size());
  for (const auto& t : templates) out.push_back(render_prompt(finding, t));
  return out;
}

PromptEntry make_prompt_entry(std::string_view finding,
                              std::span<const std::string> positive_templates,
                              std::span<const std::string> negative_templates) {
  if (positive_templates.size() != kVariantsPerPolarity ||
      negative_templates.size() != kVariantsPerPolarity) {
    throw Error(ErrorCode::kInvalidPromptBank, "need exactly three templates per polarity");
  }
  PromptEntry e;
  e.finding = std::string(finding);
  for (std::size_t i = 0; i < kVariantsPerPolarity; ++i) {
    e.positives[i] = render_prompt(finding, positive_templates[i]);
    e.negatives[i] = render_prompt(finding, negative_templates[i]);
  }
  return e;
}

std::size_t sample_variant_index(Rng& rng) {
  return static_cast<std::size_t>(uniform_index(rng, kVariantsPerPolarity));
}

const std::string& sample_variant(const PromptBank& bank, std::string_view finding,
                                  Polarity polarity, Rng& rng) {
  const PromptEntry& e = bank.at(finding);
  const std::size_t i = sample_variant_index(rng);
  return polarity == Polarity::kPositive ? e.positives[i] : e.negatives[i];
}

Vector averaged_prompt_embedding(std::span<const Vector> variants) {
  if (variants.empty()) throw Error(ErrorCode::kZeroVector, "no variants to average");
  Vector mean = Vector::Zero(variants.front().size());
  for (const Vector& v : variants) {
    if (v.size() != mean.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "variant embeddings differ in dimension");
    }
    mean += v;
  }
  mean /= static_cast<double>(variants.size());
  return l2_normalize(mean);
}

double classify_finding(const Vector& volume, const Vector& positive, const Vector& negative,
                        double tau) {
  return classify_from_similarities(cosine_sim(volume, positive), cosine_sim(volume, negative),
                                    tau);
}

double classify_from_similarities(double sim_positive, double sim_negative, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::kNonPositiveTau, "tau must be > 0");
  const double diff = (sim_positive - sim_negative) / tau;
  // exp(a)/(exp(a)+exp(b)) == sigmoid(a-b)
  if (diff >= 0.0) return 1.0 / (1.0 + std::exp(-diff));
  const double e = std::exp(diff);
  return e / (1.0 + e);
}

std::vector<TemplatePair> default_inference_templates() {
  return {
      {"{a} is present.", "{a} is not present."},
      {"There is {a}.", "There is no {a}."},
      {"{a} is seen.", "No {a} is seen."},
      {"Findings consistent with {a}.", "No findings of {a}."},
      {"{a} is identified.", "No {a} is identified."},
      {"Evidence of {a}.", "No evidence of {a}."},
      {"The scan shows {a}.", "The scan shows no {a}."},
  };
}

double template_averaged_probability(const Vector& volume,
                                     std::span<const std::pair<Vector, Vector>> per_template,
                                     double tau) {
  if (per_template.empty()) throw Error(ErrorCode::kEmptyQuestionSet, "no templates");
  double sum = 0.0;
  for (const auto& [pos, neg] : per_template) sum += classify_finding(volume, pos, neg, tau);
  return sum / static_cast<double>(per_template.size());
}

std::vector<std::pair<std::string, Label>> map_labels(const FindingLabelRecord& record,
                                                      const ClassMapping& mapping) {
  std::vector<std::pair<std::string, Label>> out;
  out.reserve(mapping.classes.size());
  for (const auto& [target, sources] : mapping.classes) {
    if (sources.empty()) throw Error(ErrorCode::kUnmappedClass, "class '" + target + "'");
    bool any_present = false;
    bool any_positive = false;
    for (const auto& s : sources) {
      const auto it = record.labels.find(s);
      if (it == record.labels.end() || it->second == Label::kAbsent) continue;
      any_present = true;
      any_positive = any_positive || it->second == Label::kPositive;
    }
    out.emplace_back(target, !any_present   ? Label::kAbsent
                             : any_positive ? Label::kPositive
                                            : Label::kNegative);
  }
  return out;
}

const std::vector<std::string>& ctrate_classes() {
  static const std::vector<std::string> classes = {
      "Medical material",
      "Arterial wall calcification",
      "Cardiomegaly",
      "Pericardial effusion",
      "Coronary artery wall calcification",
      "Hiatal hernia",
      "Lymphadenopathy",
      "Emphysema",
      "Atelectasis",
      "Lung nodule",
      "Lung opacity",
      "Pulmonary fibrotic sequela",
      "Pleural effusion",
      "Mosaic attenuation pattern",
      "Peribronchial thickening",
      "Consolidation",
      "Bronchiectasis",
      "Interlobular septal thickening",
  };
  return classes;
}

std::map<std::string, double> default_finding_weights(std::span<const std::string> vocabulary,
                                                      std::span<const std::string> mapped,
                                                      double ratio) {
  const std::set<std::string> up(mapped.begin(), mapped.end());
  std::map<std::string, double> w;
  for (const auto& f : vocabulary) w[f] = up.count(f) ? ratio : 1.0;
  return w;
}

}  // namespace slicealign
