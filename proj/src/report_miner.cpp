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

#include "slicealign/report_miner.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "slicealign/error.hpp"

namespace slicealign {
namespace {

constexpr auto kRegexFlags = std::regex::ECMAScript | std::regex::icase;

std::regex compile(const std::string& source, const std::string& what) {
  try {
    return std::regex(source, kRegexFlags);
  } catch (const std::regex_error& e) {
    throw Error(ErrorCode::kInvalidPattern, what + ": " + e.what());
  }
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool is_edge_punct(char c) {
  return std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == ';' || c == ':' ||
         c == '-' || c == '.';
}

std::string trim_edges(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_edge_punct(s[b])) ++b;
  while (e > b && is_edge_punct(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

struct Span {
  std::size_t begin;
  std::size_t end;
};

bool inside_any(std::size_t pos, const std::vector<SliceReference>& refs) {
  for (const auto& r : refs) {
    if (pos >= r.begin && pos < r.end) return true;
  }
  return false;
}

std::vector<Span> split_sentences(std::string_view text, const std::vector<SliceReference>& refs) {
  std::vector<Span> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != ';' && c != ':' && c != '\n') continue;
    if (inside_any(i, refs)) continue;
    if (c == '.' && i > 0 && i + 1 < text.size() &&
        std::isdigit(static_cast<unsigned char>(text[i - 1])) &&
        std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
      continue;
    }
    out.push_back({start, i});
    start = i + 1;
  }
  out.push_back({start, text.size()});
  return out;
}

// Sentence text with every reference inside it cut out and tidied up.
std::string clean_sentence(std::string_view text, Span span,
                           const std::vector<SliceReference>& refs) {
  std::string kept;
  std::size_t pos = span.begin;
  for (const auto& r : refs) {
    if (r.begin < span.begin || r.end > span.end) continue;
    kept.append(text.substr(pos, r.begin - pos));
    kept.push_back(' ');
    pos = r.end;
  }
  kept.append(text.substr(pos, span.end - pos));

  static const std::regex empty_brackets(R"(\(\s*\)|\[\s*\])");
  static const std::regex doubled_commas(R"(\s*,(\s*,)+)");
  static const std::regex spaces(R"(\s{2,})");
  static const std::regex space_before_punct(R"(\s+([,;]))");
  std::string s = std::regex_replace(kept, empty_brackets, " ");
  s = std::regex_replace(s, doubled_commas, ",");
  s = std::regex_replace(s, spaces, " ");
  s = std::regex_replace(s, space_before_punct, "$1");
  return trim_edges(s);
}

int parse_positive(const std::string& digits) {
  // Digit runs longer than 9 cannot be slice numbers.
  if (digits.empty() || digits.size() > 9) return 0;
  return std::stoi(digits);
}

}  // namespace

void PatternSet::add(std::string name, std::string source) {
  for (const auto& p : patterns_) {
    if (p.name == name) throw Error(ErrorCode::kInvalidPattern, "duplicate pattern name " + name);
  }
  std::regex re = compile(source, "pattern " + name);
  if (re.mark_count() != 2) {
    throw Error(ErrorCode::kInvalidPattern,
                "pattern " + name + " must have exactly two capture groups (series, image)");
  }
  patterns_.push_back({std::move(name), std::move(source), std::move(re)});
}

PatternSet PatternSet::defaults() {
  PatternSet set;
  set.add("verbose_en",
          R"(\b(?:(?:see|cf\.)\s+)?series\s*(\d+)\s*[,;/]?\s*(?:image|img)\.?\s*(\d+))");
  set.add("verbose_de",
          R"(\b(?:(?:siehe|vgl\.)\s+)?serie\s*(\d+)\s*[,;/]?\s*(?:bild|img)\.?\s*(\d+))");
  set.add("compact", R"(\(\s*(\d+)\s*/\s*(\d+)\s*\))");
  return set;
}

PatternSet PatternSet::parse(std::istream& in) {
  PatternSet set;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kInvalidPattern,
                  "line " + std::to_string(line_no) + ": expected '<name> = <regex>'");
    }
    std::string name = trim(t.substr(0, eq));
    std::string source = trim(t.substr(eq + 1));
    if (name.empty() || source.empty()) {
      throw Error(ErrorCode::kInvalidPattern,
                  "line " + std::to_string(line_no) + ": empty name or regex");
    }
    set.add(std::move(name), std::move(source));
  }
  if (set.empty()) throw Error(ErrorCode::kInvalidPattern, "pattern file defines no patterns");
  return set;
}

PatternSet PatternSet::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open pattern file " + path);
  return parse(in);
}

const PatternSet& default_patterns() {
  static const PatternSet set = PatternSet::defaults();
  return set;
}

std::vector<SliceReference> extract_references(std::string_view text,
                                               const PatternSet& patterns) {
  std::vector<SliceReference> out;
  const char* const first = text.data();
  const char* const last = text.data() + text.size();
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::cmatch best;
    const PatternSet::Pattern* best_pattern = nullptr;
    for (const auto& p : patterns.patterns()) {
      std::cmatch m;
      const auto flags =
          pos > 0 ? std::regex_constants::match_prev_avail : std::regex_constants::match_default;
      if (!std::regex_search(first + pos, last, m, p.regex, flags)) continue;
      if (m.length(0) == 0) continue;
      if (best_pattern == nullptr || m.position(0) < best.position(0)) {
        best = m;
        best_pattern = &p;
      }
    }
    if (best_pattern == nullptr) break;
    const std::size_t begin = pos + static_cast<std::size_t>(best.position(0));
    const std::size_t end = begin + static_cast<std::size_t>(best.length(0));
    const int series = parse_positive(best[1].str());
    const int image = parse_positive(best[2].str());
    if (series > 0 && image > 0) {
      out.push_back({series, image, begin, end, best[0].str(), best_pattern->name});
    }
    pos = end;
  }
  return out;
}

std::string snippet_for(std::string_view text, const SliceReference& ref,
                        const PatternSet& patterns) {
  if (text.empty()) throw Error(ErrorCode::kNoSentenceFound, "empty document");
  if (ref.begin >= ref.end || ref.end > text.size()) {
    throw Error(ErrorCode::kIndexOutOfRange, "reference span outside the text");
  }
  std::vector<SliceReference> refs = extract_references(text, patterns);
  const bool known = std::any_of(refs.begin(), refs.end(), [&](const SliceReference& r) {
    return r.begin == ref.begin && r.end == ref.end;
  });
  if (!known) {
    refs.push_back(ref);
    std::sort(refs.begin(), refs.end(),
              [](const SliceReference& a, const SliceReference& b) { return a.begin < b.begin; });
  }

  const std::vector<Span> sentences = split_sentences(text, refs);
  std::size_t idx = 0;
  while (idx + 1 < sentences.size() && sentences[idx].end <= ref.begin) ++idx;

  for (std::size_t k = idx + 1; k-- > 0;) {
    std::string s = clean_sentence(text, sentences[k], refs);
    if (!s.empty()) return s;
  }
  throw Error(ErrorCode::kNoSentenceFound,
              "no non-empty sentence at or before offset " + std::to_string(ref.begin));
}

double reference_to_mm(const SliceReference& ref, const SeriesGeometry& geom) {
  if (ref.series != geom.series) {
    throw Error(ErrorCode::kSeriesMismatch, "reference series " + std::to_string(ref.series) +
                                                " vs geometry series " +
                                                std::to_string(geom.series));
  }
  if (ref.image < 1 || ref.image > geom.num_slices) {
    throw Error(ErrorCode::kImageOutOfRange, "image " + std::to_string(ref.image) +
                                                 " in a " + std::to_string(geom.num_slices) +
                                                 "-slice series");
  }
  return geom.first_slice_offset_mm + (ref.image - 0.5) * geom.slice_thickness_mm;
}

int mm_to_depth_index(double axial_mm, const DepthGrid& grid) {
  grid.validate();
  const double rel = axial_mm - grid.origin_mm;
  if (!(rel >= 0.0) || !(rel < grid.extent_mm())) {
    throw Error(ErrorCode::kOutOfVolume, std::to_string(axial_mm) + " mm outside the grid");
  }
  const int d = static_cast<int>(std::floor(rel / grid.pitch_mm)) + 1;
  return std::clamp(d, 1, grid.count);
}

MiningScores mining_scores_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  MiningScores s;
  s.true_positives = tp;
  s.false_positives = fp;
  s.false_negatives = fn;
  s.precision = (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  s.recall = (tp + fn) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  s.f1 = (s.precision + s.recall) == 0.0
             ? 0.0
             : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

MiningScores evaluate_mining(const ReferenceSets& predicted, const ReferenceSets& gold) {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  static const std::set<std::pair<int, int>> kEmpty;
  for (const auto& [id, refs] : predicted) {
    const auto it = gold.find(id);
    const auto& g = it == gold.end() ? kEmpty : it->second;
    for (const auto& r : refs) (g.count(r) ? tp : fp) += 1;
  }
  for (const auto& [id, refs] : gold) {
    const auto it = predicted.find(id);
    const auto& p = it == predicted.end() ? kEmpty : it->second;
    for (const auto& r : refs) {
      if (!p.count(r)) ++fn;
    }
  }
  return mining_scores_from_counts(tp, fp, fn);
}

const std::string* Report::section(std::string_view name) const {
  for (const auto& [key, value] : sections) {
    if (key.size() != name.size()) continue;
    bool same = true;
    for (std::size_t i = 0; i < key.size() && same; ++i) {
      same = std::tolower(static_cast<unsigned char>(key[i])) ==
             std::tolower(static_cast<unsigned char>(name[i]));
    }
    if (same) return &value;
  }
  return nullptr;
}

std::string drop_findings_section(const Report& report) {
  const std::string* findings = report.section("findings");
  if (findings == nullptr || findings->empty()) return report.full_text;
  const auto at = report.full_text.find(*findings);
  if (at != std::string::npos) {
    std::string out = report.full_text;
    out.erase(at, findings->size());
    return trim(out);
  }
  // Section text is not a verbatim span of full_text: rebuild from the rest.
  std::string out;
  for (const auto& [name, text] : report.sections) {
    if (&text == findings) continue;
    if (!out.empty()) out += "\n";
    out += text;
  }
  return out;
}

AugmentedText augment_report(const Report& report, Rng& rng, double probability) {
  const double u_organ = uniform01(rng);
  const double u_history = uniform01(rng);
  const double u_findings = uniform01(rng);

  if (u_organ < probability && report.organ_descriptions && !report.organ_descriptions->empty()) {
    return {Augmentation::kOrganDescriptions, *report.organ_descriptions};
  }
  if (u_history < probability && report.no_history_text && !report.no_history_text->empty()) {
    return {Augmentation::kHistoryRemoved, *report.no_history_text};
  }
  if (u_findings < probability && report.section("findings") != nullptr) {
    return {Augmentation::kFindingsDropped, drop_findings_section(report)};
  }
  return {Augmentation::kNone, report.full_text};
}

std::vector<ScrubRule> default_scrub_rules() {
  return {
      {R"(\b(?:Dr|Prof|Dres)\.\s*(?:med\.\s*)?[A-Z][A-Za-z\-]+)", "[PHYSICIAN]"},
      {R"(\b(?:Patient|Pat\.|Name)\s*:\s*[A-Z][A-Za-z\-]+(?:\s+[A-Z][A-Za-z\-]+)?)",
       "Patient: [PATIENT]"},
      {R"(\b(?:MRN|PID)\s*:?\s*\d+)", "[ID]"},
      {R"(\b\d{1,2}\.\d{1,2}\.\d{4}\b)", "[DATE]"},
  };
}

std::string scrub_identifiers(std::string_view text, const std::vector<ScrubRule>& rules) {
  std::vector<std::regex> compiled;
  compiled.reserve(rules.size());
  for (std::size_t i = 0; i < rules.size(); ++i) {
    // Case-sensitive: capitalization is what separates names from words.
    try {
      compiled.emplace_back(rules[i].pattern, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      throw Error(ErrorCode::kInvalidPattern, "scrub rule " + std::to_string(i) + ": " + e.what());
    }
  }

  std::string out;
  const char* const first = text.data();
  const char* const last = text.data() + text.size();
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::cmatch best;
    std::size_t best_rule = rules.size();
    for (std::size_t r = 0; r < compiled.size(); ++r) {
      std::cmatch m;
      const auto flags =
          pos > 0 ? std::regex_constants::match_prev_avail : std::regex_constants::match_default;
      if (!std::regex_search(first + pos, last, m, compiled[r], flags)) continue;
      if (m.length(0) == 0) continue;
      if (best_rule == rules.size() || m.position(0) < best.position(0)) {
        best = m;
        best_rule = r;
      }
    }
    if (best_rule == rules.size()) break;
    const auto begin = pos + static_cast<std::size_t>(best.position(0));
    out.append(text.substr(pos, begin - pos));
    out.append(rules[best_rule].replacement);
    pos = begin + static_cast<std::size_t>(best.length(0));
  }
  if (pos < text.size()) out.append(text.substr(pos));
  return out;
}

}  // namespace slicealign
