// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "protoadapt/pseudolabel.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "protoadapt/error.hpp"

namespace protoadapt {

using nlohmann::json;

namespace {

void require_unit_rows(const Matrix& m, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double norm = m.row(r).norm();
    if (!(std::abs(norm - 1.0) <= kNormTolerance)) {
      throw ValidationError(std::string(what) + " row " + std::to_string(r) +
                            " is not unit-norm (norm " + std::to_string(norm) + ")");
    }
  }
}

}  // namespace

std::string to_string(RankBy rank_by) {
  return rank_by == RankBy::kProbability ? "probability" : "similarity";
}

RankBy parse_rank_by(const std::string& s) {
  if (s == "probability") return RankBy::kProbability;
  if (s == "similarity") return RankBy::kSimilarity;
  throw ValidationError("rank_by must be 'probability' or 'similarity', got '" + s + "'");
}

std::size_t PseudoLabelSet::total_selected() const {
  std::size_t n = 0;
  for (const auto& list : per_class) n += list.size();
  return n;
}

PseudoLabelSet::Flat PseudoLabelSet::flatten() const {
  Flat flat;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    for (const auto& sel : per_class[c]) {
      flat.samples.push_back(sel.sample);
      flat.labels.push_back(static_cast<int>(c));
    }
  }
  return flat;
}

Matrix similarity_matrix(const FeatureMatrix& image_features, const FeatureMatrix& text_features) {
  if (image_features.dims() != text_features.dims()) {
    throw ValidationError("similarity_matrix: image dims " + std::to_string(image_features.dims()) +
                          " != text dims " + std::to_string(text_features.dims()));
  }
  require_unit_rows(image_features.data, "image feature");
  require_unit_rows(text_features.data, "text feature");
  return image_features.data * text_features.data.transpose();
}

Matrix softmax_probs(const Matrix& similarities, double tau) {
  if (!(tau > 0.0)) {
    throw ValidationError("softmax temperature must be positive, got " + std::to_string(tau));
  }
  Matrix out(similarities.rows(), similarities.cols());
  for (Eigen::Index r = 0; r < similarities.rows(); ++r) {
    const double max = similarities.row(r).maxCoeff();
    auto exps = ((similarities.row(r).array() - max) / tau).exp();
    out.row(r) = exps / exps.sum();
  }
  return out;
}

std::vector<int> argmax_labels(const Matrix& scores) {
  std::vector<int> labels(static_cast<std::size_t>(scores.rows()), 0);
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      if (scores(r, c) > scores(r, best)) best = c;
    }
    labels[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return labels;
}

ScoreTable score_zero_shot(const FeatureMatrix& image_features, const FeatureMatrix& text_features,
                           double tau) {
  ScoreTable table;
  table.similarities = similarity_matrix(image_features, text_features);
  table.probabilities = softmax_probs(table.similarities, tau);
  table.temperature = tau;
  return table;
}

PseudoLabelSet select_top_k(const ScoreTable& scores, int k, RankBy rank_by) {
  if (k <= 0) throw ValidationError("top-k requires k >= 1, got " + std::to_string(k));
  const Matrix& ranking = rank_by == RankBy::kProbability ? scores.probabilities : scores.similarities;
  if (ranking.rows() != scores.probabilities.rows() || ranking.cols() != scores.probabilities.cols()) {
    throw ValidationError("select_top_k: similarity and probability tables differ in shape");
  }
  const auto num_classes = static_cast<std::size_t>(scores.probabilities.cols());
  const std::vector<int> labels = argmax_labels(scores.probabilities);

  PseudoLabelSet out;
  out.k = k;
  out.temperature = scores.temperature;
  out.rank_by = rank_by;
  out.per_class.resize(num_classes);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    int c = labels[n];
    out.per_class[static_cast<std::size_t>(c)].push_back(
        {static_cast<int>(n), ranking(static_cast<Eigen::Index>(n), c)});
  }
  const auto by_confidence = [](const Selection& a, const Selection& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.sample < b.sample;
  };
  for (auto& list : out.per_class) {
    auto keep = std::min(list.size(), static_cast<std::size_t>(k));
    std::partial_sort(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(keep), list.end(),
                      by_confidence);
    list.resize(keep);
  }
  return out;
}

std::string to_json(const PseudoLabelSet& labels) {
  json per_class = json::object();
  for (std::size_t c = 0; c < labels.per_class.size(); ++c) {
    json list = json::array();
    for (const auto& sel : labels.per_class[c]) {
      list.push_back({{"sample", sel.sample}, {"confidence", sel.confidence}});
    }
    per_class[std::to_string(c)] = std::move(list);
  }
  json j = {{"k", labels.k},
            {"labeling_backbone", labels.labeling_backbone},
            {"tau", labels.temperature},
            {"rank_by", to_string(labels.rank_by)},
            {"per_class", per_class}};
  return j.dump(2) + "\n";
}

PseudoLabelSet pseudo_labels_from_json(const std::string& text) {
  PseudoLabelSet out;
  try {
    json j = json::parse(text);
    out.k = j.at("k").get<int>();
    out.labeling_backbone = j.at("labeling_backbone").get<std::string>();
    out.temperature = j.at("tau").get<double>();
    out.rank_by = parse_rank_by(j.at("rank_by").get<std::string>());
    const json& per_class = j.at("per_class");
    // Object keys are class indices and must cover 0..C-1.
    out.per_class.resize(per_class.size());
    for (const auto& [key, list] : per_class.items()) {
      std::size_t pos = 0;
      long c = std::stol(key, &pos);
      if (pos != key.size() || c < 0 || static_cast<std::size_t>(c) >= per_class.size()) {
        throw ValidationError("pseudolabels: bad class key '" + key + "'");
      }
      auto& dst = out.per_class[static_cast<std::size_t>(c)];
      for (const auto& entry : list) {
        dst.push_back({entry.at("sample").get<int>(), entry.at("confidence").get<double>()});
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("pseudolabels: ") + e.what());
  } catch (const std::logic_error& e) {
    throw ValidationError(std::string("pseudolabels: bad class key: ") + e.what());
  }
  if (out.k <= 0) throw ValidationError("pseudolabels: k must be positive");
  return out;
}

void save_pseudo_labels(const PseudoLabelSet& labels, const std::filesystem::path& file) {
  payload::write_text(file, to_json(labels));
}

PseudoLabelSet load_pseudo_labels(const std::filesystem::path& file) {
  return pseudo_labels_from_json(payload::read_text(file));
}

}  // namespace protoadapt
