// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "protoadapt/embedcache.hpp"

namespace protoadapt {

inline constexpr double kDefaultTemperature = 0.01;
inline constexpr int kDefaultTopK = 16;

enum class RankBy { kProbability, kSimilarity };

[[nodiscard]] std::string to_string(RankBy rank_by);
[[nodiscard]] RankBy parse_rank_by(const std::string& s);

// Zero-shot scores for every sample of a cache against every class.
struct ScoreTable {
  Matrix similarities;   // N x C cosine similarities
  Matrix probabilities;  // N x C temperature-softmax rows
  double temperature = kDefaultTemperature;
};

struct Selection {
  int sample = 0;
  double confidence = 0.0;

  bool operator==(const Selection&) const = default;
};

struct PseudoLabelSet {
  int k = kDefaultTopK;
  BackboneId labeling_backbone;
  double temperature = kDefaultTemperature;
  RankBy rank_by = RankBy::kProbability;
  // One entry per class, confidence-descending.
  std::vector<std::vector<Selection>> per_class;

  [[nodiscard]] std::size_t num_classes() const { return per_class.size(); }
  [[nodiscard]] std::size_t total_selected() const;

  // Flattened training set in class order, then rank order.
  struct Flat {
    std::vector<int> samples;
    std::vector<int> labels;
  };
  [[nodiscard]] Flat flatten() const;
};

// Entry (n, c) is the dot product of image row n and text row c. Both inputs
// must be unit-norm, which makes the dot product the cosine similarity.
[[nodiscard]] Matrix similarity_matrix(const FeatureMatrix& image_features,
                                       const FeatureMatrix& text_features);

// Row-wise softmax of similarities / tau with max subtraction.
[[nodiscard]] Matrix softmax_probs(const Matrix& similarities, double tau);

// Smallest index attaining each row's maximum.
[[nodiscard]] std::vector<int> argmax_labels(const Matrix& scores);

[[nodiscard]] ScoreTable score_zero_shot(const FeatureMatrix& image_features,
                                         const FeatureMatrix& text_features, double tau);

// For each class c, the k most confident samples among those whose argmax
// label is c. Confidence is p(c|x), or the raw similarity when ranking by
// similarity. Ties go to the lower sample index.
[[nodiscard]] PseudoLabelSet select_top_k(const ScoreTable& scores, int k,
                                          RankBy rank_by = RankBy::kProbability);

// pseudolabels.json
[[nodiscard]] std::string to_json(const PseudoLabelSet& labels);
[[nodiscard]] PseudoLabelSet pseudo_labels_from_json(const std::string& text);
void save_pseudo_labels(const PseudoLabelSet& labels, const std::filesystem::path& file);
[[nodiscard]] PseudoLabelSet load_pseudo_labels(const std::filesystem::path& file);

}  // namespace protoadapt
