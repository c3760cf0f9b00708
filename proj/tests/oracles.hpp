// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

// Reference computations written with plain loops over std::vector. They must
// not call into the library paths they check.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "protoadapt/embedcache.hpp"

namespace protoadapt::oracle {

using Rows = std::vector<std::vector<double>>;

inline Rows to_rows(const Matrix& m) {
  Rows out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Rows dot_table(const Rows& a, const Rows& b) {
  Rows out(a.size(), std::vector<double>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i][j] = dot(a[i], b[j]);
  return out;
}

inline int argmax(const std::vector<double>& row) {
  int best = 0;
  for (std::size_t i = 1; i < row.size(); ++i)
    if (row[i] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

// Training-free / fused logits written term by term:
// beta * exp(-eta * (1 - v.W_c)) + v.t_c
inline Rows fused_logits(const Rows& v, const Rows& w, const Rows& text, double eta, double beta) {
  Rows out(v.size(), std::vector<double>(w.size()));
  for (std::size_t b = 0; b < v.size(); ++b)
    for (std::size_t c = 0; c < w.size(); ++c)
      out[b][c] = beta * std::exp(-eta * (1.0 - dot(v[b], w[c]))) + dot(v[b], text[c]);
  return out;
}

// Central difference (L(w + h e_cj) - L(w - h e_cj)) / 2h of the mean fused
// cross-entropy. Only row c of w moves, so each sample's loss change is formed
// directly with expm1/log1p instead of subtracting two O(1) losses; the naive
// subtraction loses about five digits at h = 1e-5.
inline Rows finite_difference_grad(const Rows& v, const Rows& w, const Rows& text, double eta,
                                   double beta, const std::vector<int>& labels, double h) {
  const Rows logits = fused_logits(v, w, text, eta, beta);
  Rows grad(w.size(), std::vector<double>(w[0].size(), 0.0));
  for (std::size_t c = 0; c < w.size(); ++c) {
    for (std::size_t j = 0; j < w[c].size(); ++j) {
      double total = 0.0;
      for (std::size_t b = 0; b < v.size(); ++b) {
        const auto& z = logits[b];
        const double max = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double x : z) sum += std::exp(x - max);
        const double h_bc = std::exp(-eta * (1.0 - dot(v[b], w[c])));
        // Change of the class-c logit when w_cj moves by +-h.
        auto shift = [&](double sign) { return beta * h_bc * std::expm1(sign * eta * h * v[b][j]); };
        auto loss_change = [&](double dz) {
          double d = std::log1p(std::exp(z[c] - max) * std::expm1(dz) / sum);
          if (labels[b] == static_cast<int>(c)) d -= dz;
          return d;
        };
        total += loss_change(shift(1.0)) - loss_change(shift(-1.0));
      }
      grad[c][j] = total / (2.0 * h * static_cast<double>(v.size()));
    }
  }
  return grad;
}

struct Pick {
  int sample;
  double confidence;
};

// Exhaustive top-k: for each class, collect argmax members, sort by
// (confidence desc, index asc) with a full stable sort, slice.
inline std::vector<std::vector<Pick>> top_k(const Rows& probs, const Rows& ranking, int k) {
  const std::size_t classes = probs.empty() ? 0 : probs[0].size();
  std::vector<std::vector<Pick>> out(classes);
  for (std::size_t n = 0; n < probs.size(); ++n) {
    int c = argmax(probs[n]);
    out[static_cast<std::size_t>(c)].push_back({static_cast<int>(n), ranking[n][static_cast<std::size_t>(c)]});
  }
  for (auto& list : out) {
    std::stable_sort(list.begin(), list.end(),
                     [](const Pick& a, const Pick& b) { return a.confidence > b.confidence; });
    if (list.size() > static_cast<std::size_t>(k)) list.resize(static_cast<std::size_t>(k));
  }
  return out;
}

// Mean of the listed rows, then divided by its norm.
inline std::vector<double> mean_then_normalize(const Rows& features, const std::vector<int>& rows) {
  std::vector<double> mean(features[0].size(), 0.0);
  for (int r : rows)
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += features[static_cast<std::size_t>(r)][j];
  for (double& x : mean) x /= static_cast<double>(rows.size());
  const double norm = std::sqrt(dot(mean, mean));
  for (double& x : mean) x /= norm;
  return mean;
}

}  // namespace protoadapt::oracle
