// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "protoadapt/embedcache.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "protoadapt/error.hpp"

namespace protoadapt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kCacheManifest = "manifest.json";
constexpr const char* kClassifierManifest = "classifier.json";
constexpr const char* kIdsFile = "ids.txt";
constexpr const char* kLabelsFile = "labels.i32";

template <typename T>
T byteswap_if_big_endian(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
}

std::string feature_file_name(const BackboneId& id) { return "features_" + id + ".f32"; }

std::string join_keys(const std::map<BackboneId, FeatureMatrix>& m) {
  std::string out;
  for (const auto& [k, _] : m) {
    if (!out.empty()) out += ", ";
    out += k;
  }
  return out.empty() ? "<none>" : out;
}

const FeatureMatrix& find_backbone(const std::map<BackboneId, FeatureMatrix>& m,
                                   const BackboneId& id, const char* owner) {
  auto it = m.find(id);
  if (it == m.end()) {
    throw ValidationError(std::string(owner) + " has no backbone '" + id +
                          "' (available: " + join_keys(m) + ")");
  }
  return it->second;
}

// Backbone ids become part of file names.
bool valid_backbone_id(const std::string& id) {
  if (id.empty()) return false;
  for (char ch : id) {
    bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
              ch == '-' || ch == '_' || ch == '.';
    if (!ok) return false;
  }
  return id != "." && id != "..";
}

std::vector<int> decode_labels(std::span<const char> bytes, std::size_t n) {
  if (bytes.size() != n * sizeof(std::int32_t)) {
    throw ValidationError("labels payload size mismatch: expected " +
                          std::to_string(n * sizeof(std::int32_t)) + " bytes, found " +
                          std::to_string(bytes.size()));
  }
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::int32_t v;
    std::memcpy(&v, bytes.data() + i * sizeof(v), sizeof(v));
    labels[i] = byteswap_if_big_endian(v);
  }
  return labels;
}

std::vector<char> encode_labels(const std::vector<int>& labels) {
  std::vector<char> bytes(labels.size() * sizeof(std::int32_t));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::int32_t v = byteswap_if_big_endian(static_cast<std::int32_t>(labels[i]));
    std::memcpy(bytes.data() + i * sizeof(v), &v, sizeof(v));
  }
  return bytes;
}

std::vector<std::string> split_lines(const std::string& text, const fs::path& path) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) {
      throw ValidationError(path.string() + ": last line is not LF-terminated");
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

template <typename T>
T field(const json& j, const char* key, const fs::path& manifest) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(manifest.string() + ": bad or missing field '" + key + "': " + e.what());
  }
}

json read_manifest(const fs::path& path) {
  std::string text = payload::read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON: " + e.what());
  }
}

struct BackboneEntry {
  Eigen::Index dims;
  std::string file;
  std::uint32_t crc;
  bool normalized;
};

json backbone_entry(const FeatureMatrix& m, const std::string& file, std::uint32_t crc) {
  return json{{"dims", m.dims()}, {"file", file}, {"crc32", crc}, {"normalized", m.normalized}};
}

std::map<BackboneId, FeatureMatrix> load_backbones(const json& manifest, const fs::path& dir,
                                                   const fs::path& manifest_path,
                                                   Eigen::Index rows) {
  std::map<BackboneId, FeatureMatrix> out;
  const json& backbones = manifest.at("backbones");
  if (!backbones.is_object()) {
    throw ValidationError(manifest_path.string() + ": 'backbones' must be an object");
  }
  for (const auto& [id, entry] : backbones.items()) {
    if (!valid_backbone_id(id)) {
      throw ValidationError(manifest_path.string() + ": invalid backbone id '" + id + "'");
    }
    auto dims = field<Eigen::Index>(entry, "dims", manifest_path);
    auto file = field<std::string>(entry, "file", manifest_path);
    auto crc = field<std::uint32_t>(entry, "crc32", manifest_path);
    auto normalized = field<bool>(entry, "normalized", manifest_path);
    if (dims < 0) throw ValidationError(manifest_path.string() + ": negative dims for " + id);
    std::vector<char> bytes = payload::read_file(dir / file);
    if (payload::crc32(bytes) != crc) {
      throw IoError((dir / file).string() + ": checksum mismatch");
    }
    FeatureMatrix m;
    m.data = payload::decode_f32(bytes, rows, dims, (dir / file).string());
    m.normalized = normalized;
    out.emplace(id, std::move(m));
  }
  return out;
}

void throw_if_invalid(const std::vector<Violation>& violations, const std::string& what) {
  if (violations.empty()) return;
  std::ostringstream msg;
  msg << what << ": " << violations.size() << " invariant violation(s); first: "
      << violations.front().location << ": " << violations.front().message;
  throw ValidationError(msg.str());
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  }
}

}  // namespace

const FeatureMatrix& EmbeddingCache::backbone(const BackboneId& id) const {
  return find_backbone(features, id, ("cache '" + dataset_name + "'").c_str());
}

const FeatureMatrix& TextClassifier::backbone(const BackboneId& id) const {
  return find_backbone(features, id, "text classifier");
}

std::vector<Violation> validate(const FeatureMatrix& m, const std::string& where) {
  std::vector<Violation> out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto row = m.data.row(r);
    if (!row.allFinite()) {
      out.push_back({"finite", where + " row " + std::to_string(r), "NaN or infinite entry"});
      continue;
    }
    if (m.normalized) {
      double norm = row.norm();
      if (std::abs(norm - 1.0) > kNormTolerance) {
        std::ostringstream msg;
        msg << "row norm " << norm << " is not within " << kNormTolerance << " of 1";
        out.push_back({"unit_norm", where + " row " + std::to_string(r), msg.str()});
      }
    }
  }
  return out;
}

std::vector<Violation> validate(const EmbeddingCache& cache) {
  std::vector<Violation> out;
  const auto n = static_cast<Eigen::Index>(cache.sample_ids.size());
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < cache.sample_ids.size(); ++i) {
    const auto& id = cache.sample_ids[i];
    std::string loc = "sample_ids[" + std::to_string(i) + "]";
    if (id.empty() || id.find('\n') != std::string::npos || id.find('\r') != std::string::npos) {
      out.push_back({"sample_id_format", loc, "id is empty or contains a line break"});
    }
    if (!seen.insert(id).second) {
      out.push_back({"unique_ids", loc, "duplicate sample id '" + id + "'"});
    }
  }
  for (const auto& [id, m] : cache.features) {
    std::string where = "features[" + id + "]";
    if (!valid_backbone_id(id)) {
      out.push_back({"backbone_id", where, "backbone id must match [A-Za-z0-9._-]+"});
    }
    if (m.rows() != n) {
      out.push_back({"row_count", where,
                     "has " + std::to_string(m.rows()) + " rows but there are " +
                         std::to_string(n) + " sample ids"});
    }
    auto rows = validate(m, where);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  if (!cache.gt_labels.empty()) {
    if (cache.gt_labels.size() != cache.sample_ids.size()) {
      out.push_back({"label_count", "gt_labels",
                     "has " + std::to_string(cache.gt_labels.size()) + " entries but there are " +
                         std::to_string(n) + " sample ids"});
    }
    const int c = static_cast<int>(cache.class_names.size());
    for (std::size_t i = 0; i < cache.gt_labels.size(); ++i) {
      int label = cache.gt_labels[i];
      if (label != kUnknownLabel && (label < 0 || label >= c)) {
        out.push_back({"label_range", "gt_labels[" + std::to_string(i) + "]",
                       "label " + std::to_string(label) + " is outside [0, " + std::to_string(c) +
                           ") and is not the unknown sentinel"});
      }
    }
  }
  return out;
}

std::vector<Violation> validate(const TextClassifier& classifier) {
  std::vector<Violation> out;
  const auto c = static_cast<Eigen::Index>(classifier.class_names.size());
  for (const auto& [id, m] : classifier.features) {
    std::string where = "classifier[" + id + "]";
    if (!valid_backbone_id(id)) {
      out.push_back({"backbone_id", where, "backbone id must match [A-Za-z0-9._-]+"});
    }
    if (m.rows() != c) {
      out.push_back({"row_count", where,
                     "has " + std::to_string(m.rows()) + " rows but there are " +
                         std::to_string(c) + " class names"});
    }
    // Text rows are always unit-norm, whatever the flag says.
    FeatureMatrix as_normalized{m.data, true};
    auto rows = validate(as_normalized, where);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

Matrix l2_normalize(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double norm = m.row(r).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw ValidationError("l2_normalize: row " + std::to_string(r) + " has zero or non-finite norm");
    }
    out.row(r) = m.row(r) / norm;
  }
  return out;
}

Matrix quantize_f32(const Matrix& m) {
  return m.cast<float>().cast<double>();
}

EmbeddingCache load_cache(const fs::path& dir, bool check_invariants) {
  const fs::path manifest_path = dir / kCacheManifest;
  json manifest = read_manifest(manifest_path);
  if (field<int>(manifest, "version", manifest_path) != kFormatVersion) {
    throw ValidationError(manifest_path.string() + ": unsupported version");
  }
  EmbeddingCache cache;
  cache.dataset_name = field<std::string>(manifest, "dataset", manifest_path);
  auto n = field<std::int64_t>(manifest, "num_samples", manifest_path);
  if (n < 0) throw ValidationError(manifest_path.string() + ": negative num_samples");
  cache.class_names = field<std::vector<std::string>>(manifest, "class_names", manifest_path);

  auto ids_file = field<std::string>(manifest, "ids_file", manifest_path);
  cache.sample_ids = split_lines(payload::read_text(dir / ids_file), dir / ids_file);
  if (static_cast<std::int64_t>(cache.sample_ids.size()) != n) {
    throw ValidationError((dir / ids_file).string() + ": expected " + std::to_string(n) +
                          " ids, found " + std::to_string(cache.sample_ids.size()));
  }
  if (!manifest.contains("labels_file")) {
    throw ValidationError(manifest_path.string() + ": missing field 'labels_file'");
  }
  if (!manifest["labels_file"].is_null()) {
    auto labels_file = field<std::string>(manifest, "labels_file", manifest_path);
    cache.gt_labels = decode_labels(payload::read_file(dir / labels_file), static_cast<std::size_t>(n));
  }
  cache.features = load_backbones(manifest, dir, manifest_path, n);
  if (check_invariants) throw_if_invalid(validate(cache), dir.string());
  return cache;
}

void save_cache(const EmbeddingCache& cache, const fs::path& dir) {
  throw_if_invalid(validate(cache), "refusing to save cache '" + cache.dataset_name + "'");
  prepare_dir(dir);

  std::string ids;
  for (const auto& id : cache.sample_ids) ids += id + "\n";
  payload::write_text(dir / kIdsFile, ids);

  json labels_file = nullptr;
  if (cache.has_ground_truth()) {
    payload::write_file(dir / kLabelsFile, encode_labels(cache.gt_labels));
    labels_file = kLabelsFile;
  }

  json backbones = json::object();
  for (const auto& [id, m] : cache.features) {
    std::vector<char> bytes = payload::encode_f32(m.data);
    std::string file = feature_file_name(id);
    payload::write_file(dir / file, bytes);
    backbones[id] = backbone_entry(m, file, payload::crc32(bytes));
  }

  json manifest = {{"version", kFormatVersion},
                   {"dataset", cache.dataset_name},
                   {"num_samples", cache.sample_ids.size()},
                   {"class_names", cache.class_names},
                   {"backbones", backbones},
                   {"ids_file", kIdsFile},
                   {"labels_file", labels_file}};
  payload::write_text(dir / kCacheManifest, manifest.dump(2) + "\n");
}

TextClassifier load_classifier(const fs::path& dir, bool check_invariants) {
  const fs::path manifest_path = dir / kClassifierManifest;
  json manifest = read_manifest(manifest_path);
  if (field<int>(manifest, "version", manifest_path) != kFormatVersion) {
    throw ValidationError(manifest_path.string() + ": unsupported version");
  }
  TextClassifier classifier;
  classifier.class_names = field<std::vector<std::string>>(manifest, "class_names", manifest_path);
  classifier.prompt_templates =
      field<std::vector<std::string>>(manifest, "prompt_templates", manifest_path);
  classifier.ensembled = field<bool>(manifest, "ensembled", manifest_path);
  classifier.features = load_backbones(manifest, dir, manifest_path,
                                       static_cast<Eigen::Index>(classifier.class_names.size()));
  if (check_invariants) throw_if_invalid(validate(classifier), dir.string());
  return classifier;
}

void save_classifier(const TextClassifier& classifier, const fs::path& dir) {
  throw_if_invalid(validate(classifier), "refusing to save text classifier");
  prepare_dir(dir);
  json backbones = json::object();
  for (const auto& [id, m] : classifier.features) {
    std::vector<char> bytes = payload::encode_f32(m.data);
    std::string file = "text_" + id + ".f32";
    payload::write_file(dir / file, bytes);
    backbones[id] = backbone_entry(m, file, payload::crc32(bytes));
  }
  json manifest = {{"version", kFormatVersion},
                   {"class_names", classifier.class_names},
                   {"backbones", backbones},
                   {"prompt_templates", classifier.prompt_templates},
                   {"ensembled", classifier.ensembled}};
  payload::write_text(dir / kClassifierManifest, manifest.dump(2) + "\n");
}

namespace payload {

std::uint32_t crc32(std::span<const char> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  const auto* data = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t remaining = bytes.size();
  // zlib takes uInt lengths.
  while (remaining > 0) {
    auto chunk = static_cast<uInt>(std::min<std::size_t>(remaining, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    remaining -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<char> encode_f32(const Matrix& m) {
  std::vector<char> bytes(static_cast<std::size_t>(m.size()) * sizeof(float));
  char* out = bytes.data();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      auto bits = byteswap_if_big_endian(std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
      std::memcpy(out, &bits, sizeof(bits));
      out += sizeof(bits);
    }
  }
  return bytes;
}

Matrix decode_f32(std::span<const char> bytes, Eigen::Index rows, Eigen::Index cols,
                  const std::string& what) {
  const auto expected = static_cast<std::size_t>(rows * cols) * sizeof(float);
  if (bytes.size() != expected) {
    throw ValidationError(what + ": payload size mismatch: expected " + std::to_string(expected) +
                          " bytes (" + std::to_string(rows) + "x" + std::to_string(cols) +
                          " float32), found " + std::to_string(bytes.size()));
  }
  Matrix m(rows, cols);
  const char* in = bytes.data();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      std::uint32_t bits;
      std::memcpy(&bits, in, sizeof(bits));
      in += sizeof(bits);
      m(r, c) = static_cast<double>(std::bit_cast<float>(byteswap_if_big_endian(bits)));
    }
  }
  return m;
}

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file(const fs::path& path, std::span<const char> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span<const char>(text.data(), text.size()));
}

std::string read_text(const fs::path& path) {
  std::vector<char> bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace payload

}  // namespace protoadapt
