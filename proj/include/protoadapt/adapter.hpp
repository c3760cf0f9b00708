// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "protoadapt/embedcache.hpp"
#include "protoadapt/optimizer.hpp"
#include "protoadapt/prototype.hpp"
#include "protoadapt/pseudolabel.hpp"

namespace protoadapt {

inline constexpr double kDefaultEta = 5.5;
inline constexpr double kDefaultBeta = 1.0;

// Which branches contribute to the logits.
enum class LogitMode { kFused, kAdapterOnly, kClipOnly };
enum class InitMode { kPrototype, kRandom };

[[nodiscard]] std::string to_string(LogitMode mode);
[[nodiscard]] std::string to_string(InitMode mode);
[[nodiscard]] LogitMode parse_logit_mode(const std::string& s);
[[nodiscard]] InitMode parse_init_mode(const std::string& s);

struct AdapterModel {
  Matrix weights;  // C x d, one row per class in feature space
  double eta = kDefaultEta;    // affinity sharpness
  double beta = kDefaultBeta;  // residual ratio of the adapter branch
  InitMode init_mode = InitMode::kPrototype;
  int trained_epochs = 0;

  [[nodiscard]] Eigen::Index num_classes() const { return weights.rows(); }
  [[nodiscard]] Eigen::Index dims() const { return weights.cols(); }
};

struct TrainConfig {
  int epochs = 20;
  int batch_size = 256;
  double learning_rate = 1e-3;
  LrSchedule lr_schedule = LrSchedule::kCosine;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 1;
  bool shuffle = true;
  // Logits fed to the loss; kAdapterOnly trains the adapter branch alone.
  LogitMode objective = LogitMode::kFused;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;            // mean cross-entropy over the epoch, pre-update
  double train_accuracy = 0.0;  // fraction correct over the epoch, pre-update
  double learning_rate = 0.0;   // rate used by the epoch's first step
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  // epoch,loss,train_acc,lr
  [[nodiscard]] std::string to_csv() const;
};

struct TrainResult {
  AdapterModel model;
  TrainHistory history;
};

// H[b, c] = exp(-eta * (1 - v_b . W_c)) for each row v_b of `features`.
[[nodiscard]] Matrix affinity(const Matrix& features, const Matrix& weights, double eta);

// Plain dot products against the text rows, no temperature.
[[nodiscard]] Matrix clip_logits(const Matrix& features, const Matrix& text);

// fused: beta * affinity + clip; adapter_only: beta * affinity; clip_only: clip.
[[nodiscard]] Matrix fused_logits(const Matrix& features, const AdapterModel& model,
                                  const Matrix& text, LogitMode mode = LogitMode::kFused);

// W = P exactly. An untrained model built this way is the training-free adapter.
[[nodiscard]] AdapterModel init_adapter(const PrototypeBank& bank, double eta = kDefaultEta,
                                        double beta = kDefaultBeta);

// Rows drawn i.i.d. N(0, 1/d) per entry, then scaled to unit length.
[[nodiscard]] AdapterModel init_adapter_random(Eigen::Index num_classes, Eigen::Index dims,
                                               std::uint64_t seed, double eta = kDefaultEta,
                                               double beta = kDefaultBeta);

// Mean over rows of -log softmax(logits_b)[label_b].
[[nodiscard]] double cross_entropy(const Matrix& logits, std::span<const int> labels);

// dL/dW of cross_entropy(fused_logits(...)) with the text branch frozen.
[[nodiscard]] Matrix grad_w(const AdapterModel& model, const Matrix& batch,
                            std::span<const int> labels, const Matrix& text,
                            LogitMode mode = LogitMode::kFused);

// Trains model.weights on (features, labels). Only W changes.
[[nodiscard]] TrainResult train_adapter(AdapterModel model, const Matrix& features,
                                        std::span<const int> labels, const Matrix& text,
                                        const TrainConfig& cfg);

// Training set is exactly the selected samples with their pseudo-labels, using
// model_backbone features; W starts from the prototype bank.
[[nodiscard]] TrainResult train(const EmbeddingCache& cache, const PseudoLabelSet& labels,
                                const PrototypeBank& bank, const TextClassifier& text,
                                const BackboneId& model_backbone, const TrainConfig& cfg,
                                double eta = kDefaultEta, double beta = kDefaultBeta);

// Row-wise argmax of fused_logits, lowest index on ties.
[[nodiscard]] std::vector<int> predict(const AdapterModel& model, const Matrix& features,
                                       const Matrix& text, LogitMode mode = LogitMode::kFused);

// Gathers `rows` of m in order.
[[nodiscard]] Matrix gather_rows(const Matrix& m, std::span<const int> rows);

// adapter.json + C x d float32 payload.
void save_adapter(const AdapterModel& model, const std::filesystem::path& dir);
[[nodiscard]] AdapterModel load_adapter(const std::filesystem::path& dir);

inline constexpr const char* kAdapterPayload = "weights.f32";

}  // namespace protoadapt
