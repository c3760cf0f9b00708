// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protoadapt/adapter.hpp"
#include "protoadapt/embedcache.hpp"
#include "protoadapt/pipeline.hpp"
#include "protoadapt/pseudolabel.hpp"

namespace protoadapt {

struct EvalReport {
  std::string label;  // row key in tables ("full", "k=16", ...)
  std::string mode;
  double top1 = 0.0;
  std::size_t n_evaluated = 0;
  std::size_t n_correct = 0;
  std::vector<std::size_t> per_class_total;
  std::vector<std::size_t> per_class_correct;
  // Empty optional for classes without evaluation samples.
  std::vector<std::optional<double>> per_class_acc;
  std::map<std::string, std::string> config;
};

[[nodiscard]] EvalReport top1_accuracy(std::span<const int> predictions,
                                       std::span<const int> ground_truth,
                                       std::size_t num_classes);

struct PrecisionReport {
  std::optional<double> overall;
  std::vector<std::optional<double>> per_class;  // empty optional for empty lists
  std::vector<std::size_t> selected;
  std::vector<std::size_t> correct;
};

// Fraction of selected samples whose pseudo-label equals ground truth.
[[nodiscard]] PrecisionReport pseudo_label_precision(const PseudoLabelSet& labels,
                                                     const EmbeddingCache& cache);

// Desk-scale stand-in for a real extracted dataset.
struct SyntheticSpec {
  int num_classes = 10;
  int dims = 64;
  double concentration = 1.0;
  int samples_per_class = 100;
  double text_angle = 0.0;  // radians between class mean and text feature
  std::uint64_t seed = 42;
  // Class means and text features depend only on seed; samples also depend on
  // split, so train/test/variant caches share one label space.
  std::uint64_t split = 0;
  std::vector<BackboneId> backbones{"vitb16", "rn50"};
  std::string dataset_name = "synthetic";

  void validate() const;
};

struct SyntheticData {
  EmbeddingCache cache;
  TextClassifier text;
};

[[nodiscard]] SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Fixture for end-to-end checks: zero-shot top-1 on the test split is about 0.70.
[[nodiscard]] SyntheticSpec pinned_fixture_spec();

// Mode keys of the component ablation, in table order.
inline constexpr std::array<const char*, 5> kAblationModes = {
    "zero_shot", "adapter_only", "training_free", "no_init", "full"};
inline constexpr std::array<int, 4> kDefaultSweepK = {4, 8, 16, 32};

// Evaluates `model` on eval_cache with the model backbone; eval_cache must
// carry ground truth.
[[nodiscard]] EvalReport evaluate(const AdapterModel& model, const EmbeddingCache& eval_cache,
                                  const TextClassifier& text, const BackboneId& model_backbone,
                                  LogitMode mode);

// Applies a model trained on one cache to a shifted cache with the same class list.
[[nodiscard]] EvalReport eval_cross_cache(const AdapterModel& model,
                                          const EmbeddingCache& target_cache,
                                          const std::vector<std::string>& source_classes,
                                          const TextClassifier& text,
                                          const BackboneId& model_backbone, LogitMode mode);

// Pseudo-labels are always drawn from train_cache; eval_cache is only scored.
[[nodiscard]] std::vector<EvalReport> run_ablation(const EmbeddingCache& train_cache,
                                                   const EmbeddingCache& eval_cache,
                                                   const TextClassifier& text,
                                                   const PipelineConfig& cfg, int jobs = 1);

struct SweepRow {
  int k = 0;
  EvalReport report;
  std::size_t n_selected = 0;
  std::optional<double> label_precision;
};

[[nodiscard]] std::vector<SweepRow> run_k_sweep(const EmbeddingCache& train_cache,
                                                const EmbeddingCache& eval_cache,
                                                const TextClassifier& text,
                                                std::span<const int> k_values,
                                                const PipelineConfig& cfg, int jobs = 1);

// Human-readable aligned table and machine-readable forms.
[[nodiscard]] std::string format_reports_text(const std::vector<EvalReport>& reports);
[[nodiscard]] std::string reports_to_csv(const std::vector<EvalReport>& reports);
[[nodiscard]] std::string reports_to_json(const std::vector<EvalReport>& reports);

[[nodiscard]] std::string format_sweep_text(const std::vector<SweepRow>& rows);
[[nodiscard]] std::string sweep_to_csv(const std::vector<SweepRow>& rows);
[[nodiscard]] std::string sweep_to_json(const std::vector<SweepRow>& rows);

}  // namespace protoadapt
