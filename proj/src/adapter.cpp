// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "protoadapt/adapter.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "protoadapt/error.hpp"
#include "protoadapt/random.hpp"

namespace protoadapt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_dims(const Matrix& features, Eigen::Index dims, const char* what) {
  if (features.cols() != dims) {
    throw ValidationError(std::string(what) + ": feature dims " + std::to_string(features.cols()) +
                          " != expected " + std::to_string(dims));
  }
}

void check_labels(std::span<const int> labels, Eigen::Index rows, Eigen::Index num_classes) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    throw ValidationError("got " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(rows) + " rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ValidationError("label " + std::to_string(labels[i]) + " at position " +
                            std::to_string(i) + " is outside [0, " + std::to_string(num_classes) +
                            ")");
    }
  }
}

Matrix row_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto exps = (logits.row(r).array() - logits.row(r).maxCoeff()).exp();
    out.row(r) = exps / exps.sum();
  }
  return out;
}

struct StepResult {
  double loss_sum = 0.0;  // summed, not averaged
  int correct = 0;
  Matrix gradient;
};

// One forward/backward pass over a batch. Summation order is fixed by the
// batch order so repeated runs are bitwise identical.
StepResult forward_backward(const AdapterModel& model, const Matrix& batch,
                            std::span<const int> labels, const Matrix& text, LogitMode mode) {
  const Eigen::Index rows = batch.rows();
  const Matrix logits = fused_logits(batch, model, text, mode);
  StepResult out;
  Matrix probs = row_softmax(logits);
  for (Eigen::Index b = 0; b < rows; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    const double max = logits.row(b).maxCoeff();
    const double log_z = max + std::log((logits.row(b).array() - max).exp().sum());
    out.loss_sum += log_z - logits(b, y);
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(b, c) > logits(b, best)) best = c;
    }
    if (best == y) ++out.correct;
    probs(b, y) -= 1.0;
  }
  if (mode == LogitMode::kClipOnly || rows == 0) {
    out.gradient = Matrix::Zero(model.num_classes(), model.dims());
    return out;
  }
  // dlogit[b,c]/dW_c = beta * eta * H[b,c] * x_b
  const Matrix scale = (probs.array() * affinity(batch, model.weights, model.eta).array() *
                        (model.beta * model.eta / static_cast<double>(rows)))
                           .matrix();
  out.gradient = scale.transpose() * batch;
  return out;
}

}  // namespace

std::string to_string(LogitMode mode) {
  switch (mode) {
    case LogitMode::kFused: return "fused";
    case LogitMode::kAdapterOnly: return "adapter_only";
    case LogitMode::kClipOnly: return "clip_only";
  }
  return "unknown";
}

std::string to_string(InitMode mode) {
  return mode == InitMode::kPrototype ? "prototype" : "random";
}

LogitMode parse_logit_mode(const std::string& s) {
  if (s == "fused") return LogitMode::kFused;
  if (s == "adapter_only") return LogitMode::kAdapterOnly;
  if (s == "clip_only") return LogitMode::kClipOnly;
  throw ValidationError("unknown logit mode '" + s + "' (expected fused, adapter_only, clip_only)");
}

InitMode parse_init_mode(const std::string& s) {
  if (s == "prototype") return InitMode::kPrototype;
  if (s == "random") return InitMode::kRandom;
  throw ValidationError("unknown init mode '" + s + "' (expected prototype, random)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1, got " + std::to_string(epochs));
  if (batch_size < 1) {
    throw ValidationError("batch_size must be >= 1, got " + std::to_string(batch_size));
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be positive, got " + std::to_string(learning_rate));
  }
}

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss,train_acc,lr\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.loss << ',' << e.train_accuracy << ',' << e.learning_rate << '\n';
  }
  return out.str();
}

Matrix affinity(const Matrix& features, const Matrix& weights, double eta) {
  if (!(eta > 0.0)) throw ValidationError("eta must be positive, got " + std::to_string(eta));
  check_dims(features, weights.cols(), "affinity");
  return (-eta * (1.0 - (features * weights.transpose()).array())).exp().matrix();
}

Matrix clip_logits(const Matrix& features, const Matrix& text) {
  check_dims(features, text.cols(), "clip_logits");
  return features * text.transpose();
}

Matrix fused_logits(const Matrix& features, const AdapterModel& model, const Matrix& text,
                    LogitMode mode) {
  if (mode == LogitMode::kFused && text.rows() != model.num_classes()) {
    throw ValidationError("text classifier has " + std::to_string(text.rows()) +
                          " classes but the adapter has " + std::to_string(model.num_classes()));
  }
  switch (mode) {
    case LogitMode::kFused:
      return model.beta * affinity(features, model.weights, model.eta) + clip_logits(features, text);
    case LogitMode::kAdapterOnly:
      return model.beta * affinity(features, model.weights, model.eta);
    case LogitMode::kClipOnly:
      return clip_logits(features, text);
  }
  throw ValidationError("unknown logit mode");
}

AdapterModel init_adapter(const PrototypeBank& bank, double eta, double beta) {
  if (!(beta >= 0.0)) throw ValidationError("beta must be non-negative");
  if (!(eta > 0.0)) throw ValidationError("eta must be positive");
  AdapterModel model;
  model.weights = bank.prototypes;
  model.eta = eta;
  model.beta = beta;
  model.init_mode = InitMode::kPrototype;
  return model;
}

AdapterModel init_adapter_random(Eigen::Index num_classes, Eigen::Index dims, std::uint64_t seed,
                                 double eta, double beta) {
  if (!(beta >= 0.0)) throw ValidationError("beta must be non-negative");
  if (!(eta > 0.0)) throw ValidationError("eta must be positive");
  auto rng = make_stream(seed, "init");
  const double stddev = 1.0 / std::sqrt(static_cast<double>(dims));
  Matrix w(num_classes, dims);
  for (Eigen::Index r = 0; r < num_classes; ++r) {
    for (Eigen::Index c = 0; c < dims; ++c) w(r, c) = stddev * standard_normal(rng);
  }
  AdapterModel model;
  model.weights = l2_normalize(w);
  model.eta = eta;
  model.beta = beta;
  model.init_mode = InitMode::kRandom;
  return model;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  check_labels(labels, logits.rows(), logits.cols());
  if (logits.rows() == 0) throw ValidationError("cross_entropy of an empty batch");
  double total = 0.0;
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    const double max = logits.row(b).maxCoeff();
    const double log_z = max + std::log((logits.row(b).array() - max).exp().sum());
    total += log_z - logits(b, labels[static_cast<std::size_t>(b)]);
  }
  return total / static_cast<double>(logits.rows());
}

Matrix grad_w(const AdapterModel& model, const Matrix& batch, std::span<const int> labels,
              const Matrix& text, LogitMode mode) {
  check_dims(batch, model.dims(), "grad_w");
  check_labels(labels, batch.rows(), model.num_classes());
  return forward_backward(model, batch, labels, text, mode).gradient;
}

TrainResult train_adapter(AdapterModel model, const Matrix& features, std::span<const int> labels,
                          const Matrix& text, const TrainConfig& cfg) {
  cfg.validate();
  check_dims(features, model.dims(), "train");
  check_labels(labels, features.rows(), model.num_classes());
  if (features.rows() == 0) throw ValidationError("training set is empty");

  const auto n = static_cast<long>(features.rows());
  const long steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = steps_per_epoch * cfg.epochs;

  auto shuffle_rng = make_stream(cfg.seed, "shuffle");
  AdamOptimizer adam(model.num_classes(), model.dims());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::vector<int> batch_labels;
  TrainHistory history;
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    if (cfg.shuffle) portable_shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord record;
    record.epoch = model.trained_epochs + 1;
    record.learning_rate = scheduled_lr(cfg.lr_schedule, cfg.learning_rate, step, total_steps);
    double loss_sum = 0.0;
    long correct = 0;
    for (long start = 0; start < n; start += cfg.batch_size) {
      const long end = std::min(n, start + cfg.batch_size);
      std::span<const int> idx(order.data() + start, static_cast<std::size_t>(end - start));
      const Matrix batch = gather_rows(features, idx);
      batch_labels.clear();
      for (int i : idx) batch_labels.push_back(labels[static_cast<std::size_t>(i)]);

      StepResult result = forward_backward(model, batch, batch_labels, text, cfg.objective);
      loss_sum += result.loss_sum;
      correct += result.correct;
      const double lr = scheduled_lr(cfg.lr_schedule, cfg.learning_rate, step, total_steps);
      if (cfg.optimizer == OptimizerKind::kAdam) {
        adam.step(model.weights, result.gradient, lr);
      } else {
        model.weights -= lr * result.gradient;
      }
      ++step;
    }
    if (!model.weights.allFinite()) {
      throw ValidationError("training diverged at epoch " + std::to_string(record.epoch));
    }
    record.loss = loss_sum / static_cast<double>(n);
    record.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    history.epochs.push_back(record);
    ++model.trained_epochs;
  }
  return {std::move(model), std::move(history)};
}

TrainResult train(const EmbeddingCache& cache, const PseudoLabelSet& labels,
                  const PrototypeBank& bank, const TextClassifier& text,
                  const BackboneId& model_backbone, const TrainConfig& cfg, double eta,
                  double beta) {
  cfg.validate();
  if (bank.source_backbone != model_backbone) {
    throw ValidationError("prototype bank was built from backbone '" + bank.source_backbone +
                          "' but training uses '" + model_backbone + "'");
  }
  const FeatureMatrix& features = cache.backbone(model_backbone);
  const FeatureMatrix& text_features = text.backbone(model_backbone);
  const auto flat = labels.flatten();
  if (flat.samples.empty()) throw ValidationError("training set is empty: no samples selected");
  for (int s : flat.samples) {
    if (s < 0 || s >= features.rows()) {
      throw ValidationError("selected sample " + std::to_string(s) + " is outside the cache");
    }
  }
  return train_adapter(init_adapter(bank, eta, beta), gather_rows(features.data, flat.samples),
                       flat.labels, text_features.data, cfg);
}

std::vector<int> predict(const AdapterModel& model, const Matrix& features, const Matrix& text,
                         LogitMode mode) {
  check_dims(features, mode == LogitMode::kClipOnly ? text.cols() : model.dims(), "predict");
  return argmax_labels(fused_logits(features, model, text, mode));
}

Matrix gather_rows(const Matrix& m, std::span<const int> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  }
  return out;
}

void save_adapter(const AdapterModel& model, const fs::path& dir) {
  if (!model.weights.allFinite()) throw ValidationError("adapter weights contain NaN or inf");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  std::vector<char> bytes = payload::encode_f32(model.weights);
  payload::write_file(dir / kAdapterPayload, bytes);
  json manifest = {{"eta", model.eta},
                   {"beta", model.beta},
                   {"init_mode", to_string(model.init_mode)},
                   {"trained_epochs", model.trained_epochs},
                   {"dims", model.dims()},
                   {"classes", model.num_classes()},
                   {"weights_file", kAdapterPayload},
                   {"crc32", payload::crc32(bytes)}};
  payload::write_text(dir / "adapter.json", manifest.dump(2) + "\n");
}

AdapterModel load_adapter(const fs::path& dir) {
  const fs::path manifest_path = dir / "adapter.json";
  AdapterModel model;
  try {
    json manifest = json::parse(payload::read_text(manifest_path));
    model.eta = manifest.at("eta").get<double>();
    model.beta = manifest.at("beta").get<double>();
    model.init_mode = parse_init_mode(manifest.at("init_mode").get<std::string>());
    model.trained_epochs = manifest.at("trained_epochs").get<int>();
    const auto file = manifest.at("weights_file").get<std::string>();
    std::vector<char> bytes = payload::read_file(dir / file);
    if (payload::crc32(bytes) != manifest.at("crc32").get<std::uint32_t>()) {
      throw IoError((dir / file).string() + ": checksum mismatch");
    }
    model.weights = payload::decode_f32(bytes, manifest.at("classes").get<Eigen::Index>(),
                                        manifest.at("dims").get<Eigen::Index>(),
                                        (dir / file).string());
  } catch (const json::exception& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }
  if (!(model.eta > 0.0) || !(model.beta >= 0.0)) {
    throw ValidationError(manifest_path.string() + ": eta must be > 0 and beta >= 0");
  }
  if (!model.weights.allFinite()) throw ValidationError(manifest_path.string() + ": non-finite weights");
  return model;
}

}  // namespace protoadapt
