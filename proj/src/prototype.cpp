// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "protoadapt/prototype.hpp"

#include <algorithm>

#include "json.hpp"
#include "protoadapt/error.hpp"

namespace protoadapt {

namespace fs = std::filesystem;
using nlohmann::json;

PrototypeBank estimate_prototypes(const EmbeddingCache& cache, const PseudoLabelSet& labels,
                                  const BackboneId& model_backbone,
                                  const PrototypeOptions& options) {
  const FeatureMatrix& features = cache.backbone(model_backbone);
  const auto num_classes = labels.per_class.size();
  if (!cache.class_names.empty() && num_classes != cache.num_classes()) {
    throw ValidationError("pseudo-labels cover " + std::to_string(num_classes) +
                          " classes but the cache has " + std::to_string(cache.num_classes()));
  }
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    if (std::abs(features.data.row(r).norm() - 1.0) > kNormTolerance) {
      throw ValidationError("features[" + model_backbone + "] row " + std::to_string(r) +
                            " is not unit-norm");
    }
  }

  PrototypeBank bank;
  bank.source_backbone = model_backbone;
  bank.class_names = cache.class_names;
  bank.prototypes = Matrix::Zero(static_cast<Eigen::Index>(num_classes), features.dims());
  bank.k_used.assign(num_classes, 0);

  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto& selected = labels.per_class[c];
    const auto row = static_cast<Eigen::Index>(c);
    if (selected.empty()) {
      if (options.empty_class_fallback == nullptr) {
        throw ValidationError("class " + std::to_string(c) +
                              " has no pseudo-labeled samples; enable the text fallback to continue");
      }
      const FeatureMatrix& text = options.empty_class_fallback->backbone(model_backbone);
      if (text.dims() != features.dims() || text.rows() != bank.prototypes.rows()) {
        throw ValidationError("text fallback shape does not match the prototype bank");
      }
      bank.prototypes.row(row) = l2_normalize(text.data.row(row));
      continue;
    }
    // Summing in index order makes the result independent of list order, bit for bit.
    std::vector<int> samples;
    samples.reserve(selected.size());
    for (const auto& sel : selected) {
      if (sel.sample < 0 || sel.sample >= features.rows()) {
        throw ValidationError("class " + std::to_string(c) + " selects sample " +
                              std::to_string(sel.sample) + " outside [0, " +
                              std::to_string(features.rows()) + ")");
      }
      samples.push_back(sel.sample);
    }
    std::sort(samples.begin(), samples.end());
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(features.dims());
    for (int s : samples) sum += features.data.row(s);
    Eigen::RowVectorXd mean = sum / static_cast<double>(selected.size());
    bank.prototypes.row(row) = l2_normalize(mean);
    bank.k_used[c] = static_cast<int>(selected.size());
  }
  return bank;
}

void save_prototypes(const PrototypeBank& bank, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  std::vector<char> bytes = payload::encode_f32(bank.prototypes);
  payload::write_file(dir / kPrototypePayload, bytes);
  json manifest = {{"version", 1},
                   {"class_names", bank.class_names},
                   {"backbones",
                    {{bank.source_backbone,
                      {{"dims", bank.prototypes.cols()},
                       {"file", kPrototypePayload},
                       {"crc32", payload::crc32(bytes)},
                       {"normalized", true}}}}},
                   {"classes", bank.prototypes.rows()},
                   {"k_used", bank.k_used}};
  payload::write_text(dir / "prototypes.json", manifest.dump(2) + "\n");
}

PrototypeBank load_prototypes(const fs::path& dir) {
  const fs::path manifest_path = dir / "prototypes.json";
  PrototypeBank bank;
  try {
    json manifest = json::parse(payload::read_text(manifest_path));
    bank.class_names = manifest.at("class_names").get<std::vector<std::string>>();
    bank.k_used = manifest.at("k_used").get<std::vector<int>>();
    const auto classes = manifest.at("classes").get<Eigen::Index>();
    const json& backbones = manifest.at("backbones");
    if (backbones.size() != 1) {
      throw ValidationError(manifest_path.string() + ": expected exactly one backbone");
    }
    const auto it = backbones.begin();
    const json& entry = it.value();
    bank.source_backbone = it.key();
    const auto file = entry.at("file").get<std::string>();
    std::vector<char> bytes = payload::read_file(dir / file);
    if (payload::crc32(bytes) != entry.at("crc32").get<std::uint32_t>()) {
      throw IoError((dir / file).string() + ": checksum mismatch");
    }
    bank.prototypes =
        payload::decode_f32(bytes, classes, entry.at("dims").get<Eigen::Index>(), (dir / file).string());
  } catch (const json::exception& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }
  if (bank.k_used.size() != static_cast<std::size_t>(bank.prototypes.rows())) {
    throw ValidationError(manifest_path.string() + ": k_used length does not match class count");
  }
  return bank;
}

}  // namespace protoadapt
