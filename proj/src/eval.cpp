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

#include "slicealign/eval.hpp"

#include <iomanip>
#include <numeric>
#include <sstream>

namespace slicealign {

void RetrievalTask::validate() const {
  if (queries.rows() == 0 || candidates.rows() == 0) {
    throw Error(ErrorCode::kEmptyTask, "retrieval needs queries and candidates");
  }
  if (queries.cols() != candidates.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query dim " + std::to_string(queries.cols()) + " vs candidate dim " +
                    std::to_string(candidates.cols()));
  }
  if (designated.size() != static_cast<std::size_t>(queries.rows())) {
    throw Error(ErrorCode::kDimensionMismatch, "one designated candidate per query required");
  }
  for (std::size_t d : designated) {
    if (d >= static_cast<std::size_t>(candidates.rows())) {
      throw Error(ErrorCode::kIndexOutOfRange, "designated candidate " + std::to_string(d));
    }
  }
}

std::vector<std::size_t> designated_ranks(const RetrievalTask& task) {
  task.validate();
  const Matrix q = l2_normalize_rows(task.queries);
  const Matrix c = l2_normalize_rows(task.candidates);
  const Eigen::Index nq = q.rows();
  const Eigen::Index nc = c.rows();
  std::vector<std::size_t> ranks(static_cast<std::size_t>(nq));
  constexpr Eigen::Index kBlock = 256;
  for (Eigen::Index start = 0; start < nq; start += kBlock) {
    const Eigen::Index len = std::min(kBlock, nq - start);
    const Matrix scores = q.middleRows(start, len) * c.transpose();
    for (Eigen::Index r = 0; r < len; ++r) {
      const auto qi = static_cast<std::size_t>(start + r);
      const auto d = static_cast<Eigen::Index>(task.designated[qi]);
      const double target = scores(r, d);
      std::size_t rank = 0;
      for (Eigen::Index j = 0; j < nc; ++j) {
        const double s = scores(r, j);
        if (s > target || (s == target && j < d)) ++rank;
      }
      ranks[qi] = rank;
    }
  }
  return ranks;
}

std::vector<double> recall_hits(const RetrievalTask& task, std::size_t k) {
  if (k == 0 || k > static_cast<std::size_t>(task.candidates.rows())) {
    throw Error(ErrorCode::kInvalidConfig, "k must be in [1, #candidates]");
  }
  const auto ranks = designated_ranks(task);
  std::vector<double> hits(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) hits[i] = ranks[i] < k ? 1.0 : 0.0;
  return hits;
}

double recall_at_k(const RetrievalTask& task, std::size_t k) {
  const auto hits = recall_hits(task, k);
  return 100.0 * mean_of(hits);
}

double label_iou(const LabelSet& a, const LabelSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (int x : a) inter += b.count(x);
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double RelevanceRule::gain(double iou) const {
  if (kind == Kind::kGraded) return iou;
  return iou >= threshold ? 1.0 : 0.0;
}

std::vector<double> average_precision_at_5(const Matrix& similarity,
                                           const std::vector<LabelSet>& labels,
                                           const RelevanceRule& rule) {
  const auto n = static_cast<std::size_t>(similarity.rows());
  if (similarity.rows() != similarity.cols() || labels.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "similarity must be N x N with N label sets");
  }
  if (n < 2) throw Error(ErrorCode::kEmptyPool, "MAP@5 needs at least two volumes");
  constexpr std::size_t kCutoff = 5;

  std::vector<double> ap(n, 0.0);
  std::vector<std::size_t> order;
  std::vector<double> gains(n);
  for (std::size_t i = 0; i < n; ++i) {
    order.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) order.push_back(j);
      gains[j] = j == i ? 0.0 : rule.gain(label_iou(labels[i], labels[j]));
    }
    const std::size_t top = std::min(kCutoff, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top),
                      order.end(), [&](std::size_t a, std::size_t b) {
                        const double sa = similarity(static_cast<Eigen::Index>(i),
                                                     static_cast<Eigen::Index>(a));
                        const double sb = similarity(static_cast<Eigen::Index>(i),
                                                     static_cast<Eigen::Index>(b));
                        return sa > sb || (sa == sb && a < b);
                      });

    std::vector<double> ideal;
    ideal.reserve(n - 1);
    for (std::size_t j : order) ideal.push_back(gains[j]);
    std::partial_sort(ideal.begin(), ideal.begin() + static_cast<std::ptrdiff_t>(top),
                      ideal.end(), std::greater<>());
    const double ideal_sum =
        std::accumulate(ideal.begin(), ideal.begin() + static_cast<std::ptrdiff_t>(top), 0.0);
    if (ideal_sum <= 0.0) continue;

    double cumulative = 0.0;
    double sum = 0.0;
    for (std::size_t r = 0; r < top; ++r) {
      const double g = gains[order[r]];
      cumulative += g;
      sum += g * cumulative / static_cast<double>(r + 1);
    }
    ap[i] = sum / ideal_sum;
  }
  return ap;
}

double map_at_5(const Matrix& similarity, const std::vector<LabelSet>& labels,
                const RelevanceRule& rule) {
  const auto ap = average_precision_at_5(similarity, labels, rule);
  return 100.0 * mean_of(ap);
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of 1-based midranks of the positives, kept doubled so it stays integral.
  std::int64_t doubled_rank_sum = 0;
  std::int64_t n_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const auto doubled_midrank = static_cast<std::int64_t>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        doubled_rank_sum += doubled_midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::int64_t n_neg = static_cast<std::int64_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorCode::kDegenerateLabels, "AUC needs both positive and negative labels");
  }
  const std::int64_t doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
  return 100.0 * (0.5 * static_cast<double>(doubled_u)) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<double> merlin_pooled_r1_trials(const Matrix& queries, const Matrix& candidates,
                                            std::size_t pool_size, std::size_t trials,
                                            std::uint64_t seed) {
  if (queries.rows() != candidates.rows() || queries.cols() != candidates.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "pooled R@1 needs aligned query/candidate pairs");
  }
  const auto n = static_cast<std::size_t>(candidates.rows());
  if (pool_size == 0 || n < pool_size) {
    throw Error(ErrorCode::kPoolTooSmall, std::to_string(n) + " candidates for a pool of " +
                                              std::to_string(pool_size));
  }
  const Matrix q = l2_normalize_rows(queries);
  const Matrix c = l2_normalize_rows(candidates);

  std::vector<double> out(trials);
  std::vector<std::size_t> perm(n);
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed, "merlin_pool", t);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 0; i < pool_size; ++i) {
      std::swap(perm[i], perm[i + uniform_index(rng, n - i)]);
    }
    std::vector<std::size_t> pool(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(pool_size));
    std::sort(pool.begin(), pool.end());

    RetrievalTask task;
    task.queries.resize(static_cast<Eigen::Index>(pool_size), q.cols());
    task.candidates.resize(static_cast<Eigen::Index>(pool_size), c.cols());
    task.designated.resize(pool_size);
    for (std::size_t i = 0; i < pool_size; ++i) {
      task.queries.row(static_cast<Eigen::Index>(i)) = q.row(static_cast<Eigen::Index>(pool[i]));
      task.candidates.row(static_cast<Eigen::Index>(i)) =
          c.row(static_cast<Eigen::Index>(pool[i]));
      task.designated[i] = i;
    }
    out[t] = recall_at_k(task, 1);
  }
  return out;
}

double merlin_pooled_r1(const Matrix& queries, const Matrix& candidates, std::size_t pool_size,
                        std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw Error(ErrorCode::kInvalidConfig, "trials must be >= 1");
  const auto values = merlin_pooled_r1_trials(queries, candidates, pool_size, trials, seed);
  return mean_of(values);
}

LocalizationMetrics localization_metrics(std::span<const LocalizationSample> results) {
  if (results.empty()) throw Error(ErrorCode::kEmptyResults, "no localization results");
  LocalizationMetrics m;
  std::size_t n6 = 0, n18 = 0, n30 = 0;
  double total = 0.0;
  for (const auto& r : results) {
    const double err = std::abs(r.predicted_mm - r.true_mm);
    total += err;
    n6 += err < 6.0;
    n18 += err < 18.0;
    n30 += err < 30.0;
  }
  const auto n = static_cast<double>(results.size());
  m.mae_mm = total / n;
  m.within_6mm = 100.0 * static_cast<double>(n6) / n;
  m.within_18mm = 100.0 * static_cast<double>(n18) / n;
  m.within_30mm = 100.0 * static_cast<double>(n30) / n;
  return m;
}

std::vector<double> baseline_predict(BaselineStrategy strategy,
                                     std::span<const double> axial_lengths_mm, Rng& rng) {
  std::vector<double> out;
  out.reserve(axial_lengths_mm.size());
  for (double len : axial_lengths_mm) {
    if (!(len > 0.0)) throw Error(ErrorCode::kInvalidConfig, "axial length must be > 0");
    out.push_back(strategy == BaselineStrategy::kMiddle ? len / 2.0 : uniform01(rng) * len);
  }
  return out;
}

void BootstrapConfig::validate() const {
  if (resamples < 1) throw Error(ErrorCode::kInvalidConfig, "bootstrap needs B >= 1");
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "bootstrap level must be in (0, 1)");
  }
}

double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::kEmptySamples, "quantile of nothing");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Interval chance_recall_interval(std::size_t queries, std::size_t k, std::size_t pool,
                                double level) {
  if (queries == 0 || pool == 0) throw Error(ErrorCode::kEmptyTask, "no queries or pool");
  const double p = static_cast<double>(std::min(k, pool)) / static_cast<double>(pool);
  const double tail = (1.0 - level) / 2.0;
  Interval out;
  out.point = 100.0 * p;
  if (p >= 1.0) {
    out.lower = out.upper = 100.0;
    return out;
  }
  const auto n = static_cast<double>(queries);
  double cdf = 0.0;
  bool have_lower = false;
  for (std::size_t x = 0; x <= queries; ++x) {
    const double xd = static_cast<double>(x);
    const double log_pmf = std::lgamma(n + 1) - std::lgamma(xd + 1) - std::lgamma(n - xd + 1) +
                           xd * std::log(p) + (n - xd) * std::log1p(-p);
    cdf += std::exp(log_pmf);
    if (!have_lower && cdf >= tail) {
      out.lower = 100.0 * xd / n;
      have_lower = true;
    }
    if (cdf >= 1.0 - tail) {
      out.upper = 100.0 * xd / n;
      break;
    }
  }
  return out;
}

void MetricsReport::add(std::string name, const Interval& ci, const BootstrapConfig& cfg) {
  entries.push_back({std::move(name), ci, cfg.resamples, cfg.level, cfg.seed});
}

const MetricEntry* MetricsReport::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::string MetricsReport::to_table() const {
  std::size_t width = 6;
  for (const auto& e : entries) width = std::max(width, e.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "metric" << std::right
     << std::setw(10) << "point" << std::setw(10) << "lower" << std::setw(10) << "upper" << "\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& e : entries) {
    os << std::left << std::setw(static_cast<int>(width)) << e.name << std::right
       << std::setw(10) << e.ci.point << std::setw(10) << e.ci.lower << std::setw(10)
       << e.ci.upper << "\n";
  }
  return os.str();
}

}  // namespace slicealign
