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
#include <istream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "slicealign/objectives.hpp"
#include "slicealign/rng.hpp"

namespace slicealign {

// A "series S, image I" mention. begin/end are byte offsets into the text.
struct SliceReference {
  int series = 0;
  int image = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string surface;
  std::string pattern;  // name of the pattern that matched
};

// Reference grammar. Each pattern is an ECMAScript regex, matched
// case-insensitively, with exactly two capture groups: series then image.
//
// Pattern files hold one pattern per line:
//
//   # comment
//   <name> = <regex>
//
// Blank lines and lines starting with '#' are ignored. Names must be unique.
class PatternSet {
 public:
  struct Pattern {
    std::string name;
    std::string source;
    std::regex regex;
  };

  // English and German verbose forms plus the compact "(S/I)" form.
  static PatternSet defaults();
  static PatternSet parse(std::istream& in);
  static PatternSet from_file(const std::string& path);

  void add(std::string name, std::string source);
  const std::vector<Pattern>& patterns() const { return patterns_; }
  bool empty() const { return patterns_.empty(); }

 private:
  std::vector<Pattern> patterns_;
};

const PatternSet& default_patterns();

// Left-to-right, non-overlapping. At each position the earliest match across
// patterns wins; ties go to the pattern listed first.
std::vector<SliceReference> extract_references(std::string_view text,
                                               const PatternSet& patterns = default_patterns());

// Sentence around the reference (terminators . ; : and newline, ignoring
// terminators inside references and decimal points), with every reference
// and any emptied bracket pair removed. Falls back to the nearest non-empty
// previous sentence when nothing is left.
std::string snippet_for(std::string_view text, const SliceReference& ref,
                        const PatternSet& patterns = default_patterns());

struct SeriesGeometry {
  int series = 1;
  int num_slices = 1;
  double slice_thickness_mm = 3.0;
  double first_slice_offset_mm = 0.0;
  double axial_length_mm = 3.0;
};

// Slice-center convention: offset + (image - 0.5) * thickness.
double reference_to_mm(const SliceReference& ref, const SeriesGeometry& geom);

// Half-open bins: floor((mm - origin) / pitch) + 1.
int mm_to_depth_index(double axial_mm, const DepthGrid& grid);

// report_id -> set of (series, image)
using ReferenceSets = std::map<std::string, std::set<std::pair<int, int>>>;

struct MiningScores {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
  std::int64_t true_positives = 0;
  std::int64_t false_positives = 0;
  std::int64_t false_negatives = 0;
};

// Micro-averaged over (report_id, series, image) triples. Precision is 1 with
// no predictions, recall is 1 with no gold.
MiningScores evaluate_mining(const ReferenceSets& predicted, const ReferenceSets& gold);
MiningScores mining_scores_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn);

struct Report {
  std::string report_id;
  std::string patient_id;
  std::vector<std::pair<std::string, std::string>> sections;  // in document order
  std::string full_text;
  std::optional<std::string> organ_descriptions;
  std::optional<std::string> no_history_text;
  std::vector<SeriesGeometry> series_geometries;

  const std::string* section(std::string_view name) const;
};

enum class Augmentation { kNone, kOrganDescriptions, kHistoryRemoved, kFindingsDropped };

struct AugmentedText {
  Augmentation applied = Augmentation::kNone;
  std::string text;
};

// At most one augmentation, tried in order with probability p each: organ
// description replacement, history removal, findings drop. An augmentation
// whose inputs are missing does not fire. Always consumes three uniforms.
AugmentedText augment_report(const Report& report, Rng& rng, double probability = 0.2);

std::string drop_findings_section(const Report& report);

struct ScrubRule {
  std::string pattern;
  std::string replacement;
};

std::vector<ScrubRule> default_scrub_rules();

// Single left-to-right pass over the text; at each position the earliest
// match among the rules is replaced. Throws kInvalidPattern on a bad regex.
std::string scrub_identifiers(std::string_view text, const std::vector<ScrubRule>& rules);

}  // namespace slicealign
