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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "slicealign/error.hpp"
#include "slicealign/numeric.hpp"
#include "slicealign/parallel.hpp"
#include "slicealign/rng.hpp"

namespace slicealign {

// Query i is correct when candidate designated[i] is retrieved. Rows are
// compared by cosine similarity; ties rank the smaller candidate id first.
struct RetrievalTask {
  Matrix queries;
  Matrix candidates;
  std::vector<std::size_t> designated;

  void validate() const;
};

// 0-based rank of each query's designated candidate.
std::vector<std::size_t> designated_ranks(const RetrievalTask& task);

// Per-query 1/0 hit indicators at cutoff k.
std::vector<double> recall_hits(const RetrievalTask& task, std::size_t k);

// Percentage of queries whose designated candidate is in the top k.
double recall_at_k(const RetrievalTask& task, std::size_t k);

using LabelSet = std::set<int>;

// Jaccard index; 1 when both sets are empty.
double label_iou(const LabelSet& a, const LabelSet& b);

struct RelevanceRule {
  enum class Kind { kBinary, kGraded };
  Kind kind = Kind::kBinary;
  double threshold = 1.0;  // binary: relevant iff IoU >= threshold

  double gain(double iou) const;
};

// Per-query AP@5 in [0, 1] over an N x N similarity matrix, excluding the
// query itself from its candidates. AP@5 = sum_r g_r * P_r / ideal, with P_r
// the mean gain over the first r results and `ideal` the best achievable top-5
// gain sum (min(#relevant, 5) under the binary rule).
std::vector<double> average_precision_at_5(const Matrix& similarity,
                                           const std::vector<LabelSet>& labels,
                                           const RelevanceRule& rule);

// Mean AP@5 as a percentage.
double map_at_5(const Matrix& similarity, const std::vector<LabelSet>& labels,
                const RelevanceRule& rule);

// Rank-based AUC with midranks, as a percentage. Non-zero labels are positive.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Per-trial R@1 values (percent). Query i pairs with candidate i; each trial
// draws pool_size pairs without replacement and ranks within that pool.
std::vector<double> merlin_pooled_r1_trials(const Matrix& queries, const Matrix& candidates,
                                            std::size_t pool_size, std::size_t trials,
                                            std::uint64_t seed);

double merlin_pooled_r1(const Matrix& queries, const Matrix& candidates,
                        std::size_t pool_size = 128, std::size_t trials = 100,
                        std::uint64_t seed = 0);

struct LocalizationSample {
  double predicted_mm = 0.0;
  double true_mm = 0.0;
};

struct LocalizationMetrics {
  double mae_mm = 0.0;
  double within_6mm = 0.0;
  double within_18mm = 0.0;
  double within_30mm = 0.0;
};

LocalizationMetrics localization_metrics(std::span<const LocalizationSample> results);

enum class BaselineStrategy { kRandom, kMiddle };

// random: uniform in [0, length); middle: length / 2.
std::vector<double> baseline_predict(BaselineStrategy strategy,
                                     std::span<const double> axial_lengths_mm, Rng& rng);

struct BootstrapConfig {
  std::size_t resamples = 10000;
  double level = 0.95;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;
};

struct Interval {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t used_resamples = 0;  // resamples where the metric was defined
};

// Linear-interpolation quantile of sorted values, p in [0, 1].
double sorted_quantile(std::span<const double> sorted, double p);

// Percentile bootstrap over samples. Resample b draws from its own stream
// derived from (seed, b), so results do not depend on cfg.threads. Resamples
// on which the metric throws kDegenerateLabels are skipped.
template <typename T, typename Metric>
Interval bootstrap_ci(std::span<const T> samples, Metric&& metric, const BootstrapConfig& cfg) {
  if (samples.empty()) throw Error(ErrorCode::kEmptySamples, "bootstrap needs >= 1 sample");
  cfg.validate();
  Interval out;
  out.point = metric(samples);

  const std::size_t n = samples.size();
  std::vector<double> stats(cfg.resamples, std::numeric_limits<double>::quiet_NaN());
  parallel_for(cfg.resamples, cfg.threads, [&](std::size_t b) {
    Rng rng = make_rng(cfg.seed, "bootstrap", b);
    std::vector<T> resample;
    resample.reserve(n);
    for (std::size_t i = 0; i < n; ++i) resample.push_back(samples[uniform_index(rng, n)]);
    try {
      stats[b] = metric(std::span<const T>(resample));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateLabels) throw;
    }
  });
  std::erase_if(stats, [](double v) { return std::isnan(v); });
  out.used_resamples = stats.size();
  if (stats.empty()) {
    out.lower = out.upper = out.point;
    return out;
  }
  std::sort(stats.begin(), stats.end());
  const double tail = (1.0 - cfg.level) / 2.0;
  out.lower = sorted_quantile(stats, tail);
  out.upper = sorted_quantile(stats, 1.0 - tail);
  return out;
}

inline double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Central binomial interval, as a percentage, for R@k of `queries` queries
// answered at random from a pool of `pool` candidates.
Interval chance_recall_interval(std::size_t queries, std::size_t k, std::size_t pool,
                                double level = 0.95);

struct MetricEntry {
  std::string name;
  Interval ci;
  std::size_t resamples = 0;
  double level = 0.95;
  std::uint64_t seed = 0;
};

struct MetricsReport {
  std::vector<MetricEntry> entries;

  void add(std::string name, const Interval& ci, const BootstrapConfig& cfg);
  const MetricEntry* find(const std::string& name) const;
  // Aligned plain-text table.
  std::string to_table() const;
};

}  // namespace slicealign
