// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "protoadapt/adapter.hpp"
#include "protoadapt/embedcache.hpp"
#include "protoadapt/prototype.hpp"
#include "protoadapt/pseudolabel.hpp"

namespace protoadapt {

// Where the training selections come from. kGroundTruth takes k labeled shots
// per class and exists for supervised domain-generalization comparisons.
enum class LabelSource { kPseudo, kGroundTruth };

[[nodiscard]] std::string to_string(LabelSource source);
[[nodiscard]] LabelSource parse_label_source(const std::string& s);

struct PipelineConfig {
  BackboneId labeling_backbone = "vitb16";
  BackboneId model_backbone = "rn50";
  int k = kDefaultTopK;
  double tau = kDefaultTemperature;
  RankBy rank_by = RankBy::kProbability;
  LabelSource label_source = LabelSource::kPseudo;
  bool text_fallback = false;
  double eta = kDefaultEta;
  double beta = kDefaultBeta;
  InitMode init_mode = InitMode::kPrototype;
  TrainConfig train;

  void validate() const;
  // Flat key/value echo for reports.
  [[nodiscard]] std::map<std::string, std::string> describe() const;
};

struct PipelineResult {
  PseudoLabelSet labels;
  PrototypeBank bank;
  AdapterModel model;
  TrainHistory history;
};

// Pseudo-labels (or ground-truth shots) for the training cache.
[[nodiscard]] PseudoLabelSet select_training_samples(const EmbeddingCache& cache,
                                                     const TextClassifier& text,
                                                     const PipelineConfig& cfg);

// k ground-truth samples per class, drawn with the "shots" stream of seed.
[[nodiscard]] PseudoLabelSet ground_truth_shots(const EmbeddingCache& cache, int k,
                                                std::uint64_t seed);

[[nodiscard]] PrototypeBank build_prototypes(const EmbeddingCache& cache,
                                             const PseudoLabelSet& labels,
                                             const TextClassifier& text, const PipelineConfig& cfg);

// Adapter initialised per cfg.init_mode and trained on the selections.
[[nodiscard]] TrainResult fit_adapter(const EmbeddingCache& cache, const PseudoLabelSet& labels,
                                      const PrototypeBank& bank, const TextClassifier& text,
                                      const PipelineConfig& cfg);

// Select, build prototypes, train.
[[nodiscard]] PipelineResult run_pipeline(const EmbeddingCache& cache, const TextClassifier& text,
                                          const PipelineConfig& cfg);

// Throws ValidationError naming the first class that differs.
void require_same_classes(const std::vector<std::string>& expected,
                          const std::vector<std::string>& actual, const std::string& what);

}  // namespace protoadapt
