// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <vector>

#include "protoadapt/embedcache.hpp"
#include "protoadapt/pseudolabel.hpp"

namespace protoadapt {

struct PrototypeBank {
  Matrix prototypes;  // C x d, unit-norm rows
  BackboneId source_backbone;
  std::vector<int> k_used;  // samples averaged per class; 0 marks a text fallback
  std::vector<std::string> class_names;
};

struct PrototypeOptions {
  // When set, a class with no selected samples takes its text feature (in the
  // model backbone's space) as prototype instead of failing.
  const TextClassifier* empty_class_fallback = nullptr;
};

// P_c = normalize(mean of the selected samples' model_backbone features).
// Sample indices may come from a different labeling backbone; features are
// never mixed across backbones.
[[nodiscard]] PrototypeBank estimate_prototypes(const EmbeddingCache& cache,
                                                const PseudoLabelSet& labels,
                                                const BackboneId& model_backbone,
                                                const PrototypeOptions& options = {});

// Directory with prototypes.json + C x d float32 payload.
void save_prototypes(const PrototypeBank& bank, const std::filesystem::path& dir);
[[nodiscard]] PrototypeBank load_prototypes(const std::filesystem::path& dir);

inline constexpr const char* kPrototypePayload = "prototypes.f32";

}  // namespace protoadapt
