// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "protoadapt/pipeline.hpp"

#include <algorithm>
#include <sstream>

#include "protoadapt/error.hpp"
#include "protoadapt/random.hpp"

namespace protoadapt {

namespace {

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

std::string to_string(LabelSource source) {
  return source == LabelSource::kPseudo ? "pseudo" : "ground_truth";
}

LabelSource parse_label_source(const std::string& s) {
  if (s == "pseudo") return LabelSource::kPseudo;
  if (s == "ground_truth") return LabelSource::kGroundTruth;
  throw ValidationError("label source must be 'pseudo' or 'ground_truth', got '" + s + "'");
}

void PipelineConfig::validate() const {
  if (k < 1) throw ValidationError("k must be >= 1, got " + std::to_string(k));
  if (!(tau > 0.0)) throw ValidationError("tau must be positive");
  if (!(eta > 0.0)) throw ValidationError("eta must be positive");
  if (!(beta >= 0.0)) throw ValidationError("beta must be non-negative");
  if (labeling_backbone.empty()) throw ValidationError("labeling backbone is empty");
  if (model_backbone.empty()) throw ValidationError("model backbone is empty");
  train.validate();
}

std::map<std::string, std::string> PipelineConfig::describe() const {
  return {{"labeling_backbone", labeling_backbone},
          {"model_backbone", model_backbone},
          {"k", std::to_string(k)},
          {"tau", format_double(tau)},
          {"rank_by", to_string(rank_by)},
          {"label_source", to_string(label_source)},
          {"text_fallback", text_fallback ? "true" : "false"},
          {"eta", format_double(eta)},
          {"beta", format_double(beta)},
          {"init", to_string(init_mode)},
          {"epochs", std::to_string(train.epochs)},
          {"batch_size", std::to_string(train.batch_size)},
          {"lr", format_double(train.learning_rate)},
          {"lr_schedule", to_string(train.lr_schedule)},
          {"optimizer", to_string(train.optimizer)},
          {"seed", std::to_string(train.seed)},
          {"shuffle", train.shuffle ? "true" : "false"}};
}

void require_same_classes(const std::vector<std::string>& expected,
                          const std::vector<std::string>& actual, const std::string& what) {
  const std::size_t n = std::min(expected.size(), actual.size());
  for (std::size_t c = 0; c < n; ++c) {
    if (expected[c] != actual[c]) {
      throw ValidationError(what + ": class list mismatch at index " + std::to_string(c) +
                            ": expected '" + expected[c] + "', found '" + actual[c] + "'");
    }
  }
  if (expected.size() != actual.size()) {
    const auto& longer = expected.size() > actual.size() ? expected : actual;
    throw ValidationError(what + ": class list mismatch at index " + std::to_string(n) +
                          ": class '" + longer[n] + "' present on one side only (" +
                          std::to_string(expected.size()) + " vs " +
                          std::to_string(actual.size()) + " classes)");
  }
}

PseudoLabelSet ground_truth_shots(const EmbeddingCache& cache, int k, std::uint64_t seed) {
  if (k < 1) throw ValidationError("k must be >= 1");
  if (!cache.has_ground_truth()) {
    throw ValidationError("cache '" + cache.dataset_name + "' has no ground-truth labels");
  }
  PseudoLabelSet out;
  out.k = k;
  out.labeling_backbone = "ground_truth";
  out.per_class.resize(cache.num_classes());
  std::vector<std::vector<int>> members(cache.num_classes());
  for (std::size_t i = 0; i < cache.gt_labels.size(); ++i) {
    int label = cache.gt_labels[i];
    if (label >= 0) members[static_cast<std::size_t>(label)].push_back(static_cast<int>(i));
  }
  auto rng = make_stream(seed, "shots");
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& pool = members[c];
    portable_shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min(pool.size(), static_cast<std::size_t>(k)));
    std::sort(pool.begin(), pool.end());
    for (int s : pool) out.per_class[c].push_back({s, 1.0});
  }
  return out;
}

PseudoLabelSet select_training_samples(const EmbeddingCache& cache, const TextClassifier& text,
                                       const PipelineConfig& cfg) {
  require_same_classes(text.class_names, cache.class_names, "cache vs text classifier");
  if (cfg.label_source == LabelSource::kGroundTruth) {
    return ground_truth_shots(cache, cfg.k, cfg.train.seed);
  }
  const ScoreTable scores = score_zero_shot(cache.backbone(cfg.labeling_backbone),
                                            text.backbone(cfg.labeling_backbone), cfg.tau);
  PseudoLabelSet labels = select_top_k(scores, cfg.k, cfg.rank_by);
  labels.labeling_backbone = cfg.labeling_backbone;
  return labels;
}

PrototypeBank build_prototypes(const EmbeddingCache& cache, const PseudoLabelSet& labels,
                               const TextClassifier& text, const PipelineConfig& cfg) {
  PrototypeOptions options;
  if (cfg.text_fallback) options.empty_class_fallback = &text;
  return estimate_prototypes(cache, labels, cfg.model_backbone, options);
}

TrainResult fit_adapter(const EmbeddingCache& cache, const PseudoLabelSet& labels,
                        const PrototypeBank& bank, const TextClassifier& text,
                        const PipelineConfig& cfg) {
  if (cfg.init_mode == InitMode::kPrototype) {
    return train(cache, labels, bank, text, cfg.model_backbone, cfg.train, cfg.eta, cfg.beta);
  }
  const FeatureMatrix& features = cache.backbone(cfg.model_backbone);
  const auto flat = labels.flatten();
  if (flat.samples.empty()) throw ValidationError("training set is empty: no samples selected");
  AdapterModel model = init_adapter_random(bank.prototypes.rows(), features.dims(), cfg.train.seed,
                                           cfg.eta, cfg.beta);
  return train_adapter(std::move(model), gather_rows(features.data, flat.samples), flat.labels,
                       text.backbone(cfg.model_backbone).data, cfg.train);
}

PipelineResult run_pipeline(const EmbeddingCache& cache, const TextClassifier& text,
                            const PipelineConfig& cfg) {
  cfg.validate();
  PipelineResult out;
  out.labels = select_training_samples(cache, text, cfg);
  out.bank = build_prototypes(cache, out.labels, text, cfg);
  TrainResult trained = fit_adapter(cache, out.labels, out.bank, text, cfg);
  out.model = std::move(trained.model);
  out.history = std::move(trained.history);
  return out;
}

}  // namespace protoadapt
