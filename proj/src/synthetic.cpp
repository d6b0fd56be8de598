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

#include "slicealign/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "slicealign/error.hpp"

namespace slicealign {
namespace {

constexpr double kSliceThicknessMm = 3.0;
constexpr double kVariantJitter = 0.25;

Vector gaussian(std::size_t dim, Rng& rng) {
  Vector v(static_cast<Eigen::Index>(dim));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = scale * standard_normal(rng);
  return v;
}

Vector unit_gaussian(std::size_t dim, Rng& rng) { return l2_normalize(gaussian(dim, rng)); }

std::string finding_name(std::size_t q) {
  const auto& named = ctrate_classes();
  if (q < named.size()) return named[q];
  return "Finding " + std::to_string(q + 1);
}

std::string lower_first(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
  return s;
}

std::string format_reference(int series, int image, std::uint64_t style) {
  char buf[64];
  switch (style % 3) {
    case 0: std::snprintf(buf, sizeof(buf), "see series %d, image %d", series, image); break;
    case 1: std::snprintf(buf, sizeof(buf), "(%d/%d)", series, image); break;
    default: std::snprintf(buf, sizeof(buf), "Serie %d Bild %d", series, image); break;
  }
  return buf;
}

struct World {
  Matrix finding_dirs;  // F x raw
  Matrix prompt_pos;    // F x raw
  Matrix prompt_neg;    // F x raw
  std::vector<double> prevalence;
};

World make_world(const SynthConfig& cfg) {
  Rng rng = make_rng(cfg.seed, "world");
  const auto f = static_cast<Eigen::Index>(cfg.n_findings);
  const auto d = static_cast<Eigen::Index>(cfg.raw_dim);
  World w;
  w.finding_dirs.resize(f, d);
  w.prompt_pos.resize(f, d);
  w.prompt_neg.resize(f, d);
  for (Eigen::Index q = 0; q < f; ++q) {
    w.finding_dirs.row(q) = unit_gaussian(cfg.raw_dim, rng).transpose();
    w.prompt_pos.row(q) = unit_gaussian(cfg.raw_dim, rng).transpose();
    w.prompt_neg.row(q) = unit_gaussian(cfg.raw_dim, rng).transpose();
    w.prevalence.push_back(0.1 + 0.4 * uniform01(rng));
  }
  return w;
}

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, m); };
  if (n_pairs < 1) fail("n_pairs must be >= 1");
  if (raw_dim < 2 || proj_dim < 2) fail("raw_dim and proj_dim must be >= 2");
  if (n_findings < 1) fail("n_findings must be >= 1");
  if (depth_D < 1) fail("depth_D must be >= 1");
  if (!(pitch_mm > 0.0)) fail("pitch_mm must be > 0");
  for (double s : {pair_signal, label_signal, depth_signal}) {
    if (!(s >= 0.0 && s <= 1.0)) fail("signals must lie in [0, 1]");
  }
  if (!(noise >= 0.0)) fail("noise must be >= 0");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Matrix Corpus::depth_block(std::size_t i) const {
  return depth.middleRows(static_cast<Eigen::Index>(i) * grid.count, grid.count);
}

std::vector<std::size_t> Corpus::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

void Corpus::validate() const {
  const std::size_t n = size();
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, "corpus: " + m); };
  if (texts.rows() != images.rows() || snippets.rows() != images.rows()) fail("row counts differ");
  if (texts.cols() != images.cols() || snippets.cols() != images.cols() ||
      depth.cols() != images.cols() || prompt_embeddings.cols() != images.cols()) {
    fail("embedding dims differ");
  }
  grid.validate();
  if (depth.rows() != static_cast<Eigen::Index>(n) * grid.count) fail("depth rows != N * D");
  if (volume_ids.size() != n || patient_ids.size() != n || splits.size() != n ||
      depth_index.size() != n || snippet_mm.size() != n || axial_length_mm.size() != n ||
      labels.size() != n) {
    fail("per-volume field lengths differ");
  }
  for (const auto& row : labels) {
    if (row.size() != findings.size()) fail("label row width != #findings");
  }
  if (counts.size() != findings.size()) fail("counts size != #findings");
  if (prompt_embeddings.rows() != static_cast<Eigen::Index>(findings.size() * 6)) {
    fail("prompt embeddings must have 6 rows per finding");
  }
  for (int d : depth_index) {
    if (d < 1 || d > grid.count) fail("depth index out of range");
  }
}

std::vector<FindingCounts> plant_counts(const std::vector<std::vector<Label>>& labels,
                                        std::span<const Split> splits, Split which) {
  if (labels.size() != splits.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "labels and splits differ in length");
  }
  const std::size_t f = labels.empty() ? 0 : labels.front().size();
  std::vector<FindingCounts> counts(f);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (splits[i] != which) continue;
    for (std::size_t q = 0; q < f; ++q) {
      if (labels[i][q] == Label::kPositive) ++counts[q].n_pos;
      if (labels[i][q] == Label::kNegative) ++counts[q].n_neg;
    }
  }
  return counts;
}

Corpus generate(const SynthConfig& cfg) {
  cfg.validate();
  const World world = make_world(cfg);
  const std::size_t n = cfg.n_pairs;
  const std::size_t raw = cfg.raw_dim;
  const std::size_t nf = cfg.n_findings;
  const int depth_count = cfg.depth_D;

  Corpus c;
  c.grid = DepthGrid{depth_count, cfg.pitch_mm, 0.0};
  c.images.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(raw));
  c.texts.resizeLike(c.images);
  c.snippets.resizeLike(c.images);
  c.depth.resize(static_cast<Eigen::Index>(n) * depth_count, static_cast<Eigen::Index>(raw));
  c.labels.assign(n, std::vector<Label>(nf, Label::kNegative));

  for (std::size_t q = 0; q < nf; ++q) c.findings.push_back(finding_name(q));

  // Patients own 1-3 consecutive volumes; the split is drawn per patient.
  {
    Rng rng = make_rng(cfg.seed, "patients");
    std::size_t patient = 0;
    std::size_t i = 0;
    while (i < n) {
      const std::size_t group = 1 + uniform_index(rng, 3);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "P%06zu", patient++);
      for (std::size_t k = 0; k < group && i < n; ++k, ++i) c.patient_ids.emplace_back(buf);
    }
    std::vector<std::size_t> order(patient);
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng = make_rng(cfg.seed, "split");
    for (std::size_t k = order.size(); k > 1; --k) {
      std::swap(order[k - 1], order[uniform_index(split_rng, k)]);
    }
    std::vector<Split> patient_split(patient, Split::kTest);
    const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(patient)));
    const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(patient)));
    for (std::size_t k = 0; k < order.size(); ++k) {
      patient_split[order[k]] = k < n_train ? Split::kTrain
                                : k < n_train + n_val ? Split::kVal
                                                      : Split::kTest;
    }
    for (const auto& pid : c.patient_ids) {
      c.splits.push_back(patient_split[static_cast<std::size_t>(std::stoul(pid.substr(1)))]);
    }
  }

  const double label_scale = cfg.label_signal / std::sqrt(static_cast<double>(nf));
  const int slices =
      std::max(1, static_cast<int>(std::floor(c.grid.extent_mm() / kSliceThicknessMm)));

  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = make_rng(cfg.seed, "pair", i);
    const auto row = static_cast<Eigen::Index>(i);
    char vid[32];
    std::snprintf(vid, sizeof(vid), "V%06zu", i);
    c.volume_ids.emplace_back(vid);

    Vector latent = gaussian(raw, rng);
    for (std::size_t q = 0; q < nf; ++q) {
      const bool positive = uniform01(rng) < world.prevalence[q];
      c.labels[i][q] = positive ? Label::kPositive : Label::kNegative;
      latent += (positive ? label_scale : -label_scale) *
                world.finding_dirs.row(static_cast<Eigen::Index>(q)).transpose();
    }
    const Vector own_image = gaussian(raw, rng);
    const Vector own_text = gaussian(raw, rng);
    c.images.row(row) = l2_normalize(cfg.pair_signal * latent + (1.0 - cfg.pair_signal) * own_image +
                                     cfg.noise * gaussian(raw, rng))
                            .transpose();
    c.texts.row(row) = l2_normalize(cfg.pair_signal * latent + (1.0 - cfg.pair_signal) * own_text +
                                    cfg.noise * gaussian(raw, rng))
                           .transpose();

    // Snippet position: a slice inside a uniformly drawn depth bin.
    const int bin = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(depth_count)));
    const double within = uniform01(rng) * cfg.pitch_mm;
    const double raw_mm = (bin - 1) * cfg.pitch_mm + within;
    const int image_no = std::clamp(static_cast<int>(std::floor(raw_mm / kSliceThicknessMm)) + 1, 1,
                                    slices);
    const double mm = (image_no - 0.5) * kSliceThicknessMm;
    const int d_star = mm_to_depth_index(mm, c.grid);
    c.depth_index.push_back(d_star);
    c.snippet_mm.push_back(mm);
    c.axial_length_mm.push_back(c.grid.extent_mm());

    const Vector snippet_latent = gaussian(raw, rng);
    c.snippets.row(row) = l2_normalize(snippet_latent + cfg.noise * gaussian(raw, rng)).transpose();
    for (int d = 1; d <= depth_count; ++d) {
      Vector feat = gaussian(raw, rng);
      if (d == d_star) {
        feat = cfg.depth_signal * snippet_latent + (1.0 - cfg.depth_signal) * feat;
      }
      feat += cfg.noise * gaussian(raw, rng);
      c.depth.row(row * depth_count + (d - 1)) = l2_normalize(feat).transpose();
    }

    // Report text with one planted slice reference for the snippet.
    const int series = 2 + static_cast<int>(uniform_index(rng, 8));
    std::string findings_text;
    std::string organ_text;
    std::size_t anchor = nf;
    for (std::size_t q = 0; q < nf; ++q) {
      if (c.labels[i][q] == Label::kPositive) {
        findings_text += c.findings[q] + " is present. ";
        organ_text += c.findings[q] + ": present. ";
        if (anchor == nf) anchor = q;
      }
    }
    const std::string lesion =
        anchor == nf ? std::string("Small hypodense focus") : c.findings[anchor] + " focus";
    const std::string ref = format_reference(series, image_no, uniform_index(rng, 3));
    const std::string ref_sentence = ref.front() == '('
                                         ? lesion + " in segment " + std::to_string(1 + i % 8) +
                                               " " + ref + "."
                                         : lesion + " in segment " + std::to_string(1 + i % 8) +
                                               ", " + ref + ".";
    findings_text += ref_sentence;
    if (anchor == nf) findings_text = "No acute abnormality. " + findings_text;
    const std::string history = "Compared to prior exam, ";
    const std::string impression =
        history + (anchor == nf ? std::string("no relevant change.")
                                : lower_first(c.findings[anchor]) + " without relevant change.");

    Report rep;
    rep.report_id = vid;
    rep.patient_id = c.patient_ids[i];
    rep.sections = {{"findings", findings_text}, {"impression", impression}};
    rep.full_text = "FINDINGS: " + findings_text + "\nIMPRESSION: " + impression;
    rep.organ_descriptions = organ_text.empty() ? std::string("No organ-level abnormality.")
                                                : organ_text;
    std::string no_history = rep.full_text;
    no_history.erase(no_history.find(history), history.size());
    rep.no_history_text = no_history;
    rep.series_geometries.push_back(
        SeriesGeometry{series, slices, kSliceThicknessMm, 0.0, c.grid.extent_mm()});
    c.reports.push_back(std::move(rep));
  }

  c.counts = plant_counts(c.labels, c.splits, Split::kTrain);

  const std::vector<std::string> pos_templates = {"{a} is present.", "There is {a}.",
                                                  "Findings consistent with {a}."};
  const std::vector<std::string> neg_templates = {"No {a} is identified.", "There is no {a}.",
                                                  "No evidence of {a}."};
  c.prompt_embeddings.resize(static_cast<Eigen::Index>(nf * 6), static_cast<Eigen::Index>(raw));
  Rng prompt_rng = make_rng(cfg.seed, "prompt_variants");
  for (std::size_t q = 0; q < nf; ++q) {
    c.prompts.add(make_prompt_entry(c.findings[q], pos_templates, neg_templates));
    for (std::size_t v = 0; v < kVariantsPerPolarity; ++v) {
      const auto qi = static_cast<Eigen::Index>(q);
      c.prompt_embeddings.row(c.prompt_row(q, Polarity::kPositive, v)) =
          l2_normalize(world.prompt_pos.row(qi).transpose() +
                       kVariantJitter * gaussian(raw, prompt_rng))
              .transpose();
      c.prompt_embeddings.row(c.prompt_row(q, Polarity::kNegative, v)) =
          l2_normalize(world.prompt_neg.row(qi).transpose() +
                       kVariantJitter * gaussian(raw, prompt_rng))
              .transpose();
    }
  }
  return c;
}

}  // namespace slicealign
