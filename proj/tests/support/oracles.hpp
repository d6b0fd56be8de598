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

// Reference implementations used only by tests. They are written directly
// from the loss and metric definitions with plain loops and share no code
// with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// -log(sigmoid(x)) evaluated without overflow.
inline double neg_log_sigmoid(double x) {
  return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

inline double siglip(const Rows& img, const Rows& txt, double t, double b) {
  const std::size_t n = img.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double s = i == j ? 1.0 : -1.0;
      total += neg_log_sigmoid(s * (t * dot(img[i], txt[j]) + b));
    }
  }
  return total / static_cast<double>(n);
}

struct Finding {
  std::vector<double> pos, neg;
  int y;
  double w;
  double n_pos, n_neg;
};

inline double prompt(const std::vector<double>& z, const std::vector<Finding>& fs, double tau) {
  double total = 0.0;
  for (const auto& f : fs) {
    const double x = (dot(z, f.pos) - dot(z, f.neg)) / tau;
    const double alpha = std::min(f.n_pos / f.n_neg, 20.0);
    const double p = 1.0 / (1.0 + std::exp(-x));
    total += f.w * (f.y == 1 ? -alpha * std::log(p) : -std::log(1.0 - p));
  }
  return total / static_cast<double>(fs.size());
}

// Cross-entropy of softmax(logits) against target.
inline double softmax_ce(const std::vector<double>& logits, const std::vector<double>& target) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  const double log_z = m + std::log(z);
  double ce = 0.0;
  for (std::size_t d = 0; d < logits.size(); ++d) ce -= target[d] * (logits[d] - log_z);
  return ce;
}

// Truncated Gaussian smoothing of a one-hot at d_star (1-based), L1-normalized.
inline std::vector<double> soft_target(int count, int d_star, double sigma) {
  const int half = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> v(count, 0.0);
  for (int d = 1; d <= count; ++d) {
    const int k = d - d_star;
    if (std::abs(k) <= half) v[d - 1] = std::exp(-(k * k) / (2.0 * sigma * sigma));
  }
  double s = 0.0;
  for (double x : v) s += x;
  for (double& x : v) x /= s;
  return v;
}

// AUC as the fraction of (positive, negative) pairs ranked correctly, ties
// counting one half. Pairs are counted in integer half-units.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::int64_t doubled = 0, np = 0, nn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? np : nn)++;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) doubled += 2;
      else if (scores[i] == scores[j]) doubled += 1;
    }
  }
  return 100.0 * (0.5 * static_cast<double>(doubled)) / (static_cast<double>(np) * static_cast<double>(nn));
}

// Rank of the designated candidate by brute force: count candidates scoring
// higher, or equal with a smaller id.
inline std::size_t brute_rank(const std::vector<double>& q, const Rows& cands, std::size_t target) {
  const double s = dot(q, cands[target]);
  std::size_t r = 0;
  for (std::size_t c = 0; c < cands.size(); ++c) {
    if (c == target) continue;
    const double o = dot(q, cands[c]);
    if (o > s || (o == s && c < target)) ++r;
  }
  return r;
}

inline double jaccard(const std::set<int>& a, const std::set<int>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (int x : a) inter += b.count(x);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

}  // namespace oracle
