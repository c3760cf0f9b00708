// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace protoadapt {

// All computation runs in double precision; payloads on disk are float32.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using BackboneId = std::string;

inline constexpr int kUnknownLabel = -1;
inline constexpr double kNormTolerance = 1e-4;

struct FeatureMatrix {
  Matrix data;
  bool normalized = false;

  [[nodiscard]] Eigen::Index rows() const { return data.rows(); }
  [[nodiscard]] Eigen::Index dims() const { return data.cols(); }
};

struct EmbeddingCache {
  std::string dataset_name;
  std::vector<std::string> sample_ids;
  std::map<BackboneId, FeatureMatrix> features;
  // Evaluation only. Empty when the dataset ships without ground truth;
  // otherwise one entry per sample with kUnknownLabel for missing labels.
  std::vector<int> gt_labels;
  std::vector<std::string> class_names;

  [[nodiscard]] std::size_t size() const { return sample_ids.size(); }
  [[nodiscard]] std::size_t num_classes() const { return class_names.size(); }
  [[nodiscard]] bool has_ground_truth() const { return !gt_labels.empty(); }

  // Throws ValidationError naming the backbone and the ids present.
  [[nodiscard]] const FeatureMatrix& backbone(const BackboneId& id) const;
};

struct TextClassifier {
  std::vector<std::string> class_names;
  std::map<BackboneId, FeatureMatrix> features;
  std::vector<std::string> prompt_templates;
  bool ensembled = false;

  [[nodiscard]] std::size_t num_classes() const { return class_names.size(); }
  [[nodiscard]] const FeatureMatrix& backbone(const BackboneId& id) const;
};

struct Violation {
  std::string invariant;  // short tag, e.g. "unit_norm"
  std::string location;   // e.g. "features[rn50] row 4"
  std::string message;
};

[[nodiscard]] std::vector<Violation> validate(const FeatureMatrix& m, const std::string& where);
[[nodiscard]] std::vector<Violation> validate(const EmbeddingCache& cache);
[[nodiscard]] std::vector<Violation> validate(const TextClassifier& classifier);

// Divides every row by its Euclidean norm. Throws ValidationError on a zero row.
[[nodiscard]] Matrix l2_normalize(const Matrix& m);

// Rounds every entry through float32, which is the exact set of values a
// cache payload can hold.
[[nodiscard]] Matrix quantize_f32(const Matrix& m);

// Structural problems (missing files, size or checksum mismatches) always
// throw. Invariant violations throw too unless check_invariants is false.
[[nodiscard]] EmbeddingCache load_cache(const std::filesystem::path& dir, bool check_invariants = true);
void save_cache(const EmbeddingCache& cache, const std::filesystem::path& dir);

[[nodiscard]] TextClassifier load_classifier(const std::filesystem::path& dir,
                                             bool check_invariants = true);
void save_classifier(const TextClassifier& classifier, const std::filesystem::path& dir);

// Low-level payload helpers shared by the prototype and adapter artifacts.
namespace payload {

[[nodiscard]] std::uint32_t crc32(std::span<const char> bytes);
[[nodiscard]] std::vector<char> encode_f32(const Matrix& m);
[[nodiscard]] Matrix decode_f32(std::span<const char> bytes, Eigen::Index rows, Eigen::Index cols,
                                const std::string& what);
[[nodiscard]] std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const char> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
[[nodiscard]] std::string read_text(const std::filesystem::path& path);

}  // namespace payload

}  // namespace protoadapt
