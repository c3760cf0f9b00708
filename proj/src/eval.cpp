// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "protoadapt/eval.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <iomanip>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "protoadapt/error.hpp"
#include "protoadapt/random.hpp"

namespace protoadapt {

using nlohmann::json;

namespace {

// Runs cells [0, n) on up to `jobs` threads. Each cell writes only its own
// output slot, so results do not depend on scheduling.
void run_cells(std::size_t n, int jobs, const std::function<void(std::size_t)>& cell) {
  std::vector<std::exception_ptr> errors(n);
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) cell(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        cell(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < std::min(workers, n); ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Eigen::RowVectorXd random_unit(std::mt19937_64& rng, int dims) {
  Eigen::RowVectorXd v(dims);
  for (int i = 0; i < dims; ++i) v[i] = standard_normal(rng);
  return v / v.norm();
}

std::string fmt_fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

std::string fmt_exact(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

json optional_to_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

json report_to_json(const EvalReport& r) {
  json per_class = json::array();
  for (const auto& acc : r.per_class_acc) per_class.push_back(optional_to_json(acc));
  return {{"label", r.label},
          {"mode", r.mode},
          {"top1", r.top1},
          {"n_evaluated", r.n_evaluated},
          {"n_correct", r.n_correct},
          {"per_class_acc", per_class},
          {"config", r.config}};
}

std::string config_keys_header(const std::map<std::string, std::string>& config) {
  std::string out;
  for (const auto& [k, _] : config) out += "," + k;
  return out;
}

std::string config_values(const std::map<std::string, std::string>& config) {
  std::string out;
  for (const auto& [_, v] : config) out += "," + v;
  return out;
}

std::string per_class_field(const EvalReport& r) {
  std::string out;
  for (std::size_t c = 0; c < r.per_class_acc.size(); ++c) {
    if (c > 0) out += ";";
    out += r.per_class_acc[c] ? fmt_exact(*r.per_class_acc[c]) : "";
  }
  return out;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

EvalReport top1_accuracy(std::span<const int> predictions, std::span<const int> ground_truth,
                         std::size_t num_classes) {
  if (predictions.size() != ground_truth.size()) {
    throw ValidationError("top1_accuracy: " + std::to_string(predictions.size()) +
                          " predictions vs " + std::to_string(ground_truth.size()) + " labels");
  }
  EvalReport report;
  report.per_class_total.assign(num_classes, 0);
  report.per_class_correct.assign(num_classes, 0);
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    const int gt = ground_truth[i];
    if (gt == kUnknownLabel) {
      throw ValidationError("top1_accuracy: ground truth for sample " + std::to_string(i) +
                            " is unknown");
    }
    if (gt < 0 || static_cast<std::size_t>(gt) >= num_classes) {
      throw ValidationError("top1_accuracy: ground truth " + std::to_string(gt) + " out of range");
    }
    ++report.per_class_total[static_cast<std::size_t>(gt)];
    if (predictions[i] == gt) {
      ++report.per_class_correct[static_cast<std::size_t>(gt)];
      ++report.n_correct;
    }
  }
  report.n_evaluated = ground_truth.size();
  report.top1 = report.n_evaluated == 0
                    ? 0.0
                    : static_cast<double>(report.n_correct) / static_cast<double>(report.n_evaluated);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (report.per_class_total[c] == 0) {
      report.per_class_acc.emplace_back();
    } else {
      report.per_class_acc.emplace_back(static_cast<double>(report.per_class_correct[c]) /
                                        static_cast<double>(report.per_class_total[c]));
    }
  }
  return report;
}

PrecisionReport pseudo_label_precision(const PseudoLabelSet& labels, const EmbeddingCache& cache) {
  if (!cache.has_ground_truth()) {
    throw ValidationError("pseudo-label precision needs ground truth; cache '" +
                          cache.dataset_name + "' has none");
  }
  PrecisionReport out;
  std::size_t total = 0;
  std::size_t total_correct = 0;
  for (std::size_t c = 0; c < labels.per_class.size(); ++c) {
    std::size_t correct = 0;
    for (const auto& sel : labels.per_class[c]) {
      if (sel.sample < 0 || static_cast<std::size_t>(sel.sample) >= cache.gt_labels.size()) {
        throw ValidationError("selected sample " + std::to_string(sel.sample) + " outside cache");
      }
      if (cache.gt_labels[static_cast<std::size_t>(sel.sample)] == static_cast<int>(c)) ++correct;
    }
    const std::size_t n = labels.per_class[c].size();
    out.selected.push_back(n);
    out.correct.push_back(correct);
    if (n == 0) {
      out.per_class.emplace_back();
    } else {
      out.per_class.emplace_back(static_cast<double>(correct) / static_cast<double>(n));
    }
    total += n;
    total_correct += correct;
  }
  if (total > 0) out.overall = static_cast<double>(total_correct) / static_cast<double>(total);
  return out;
}

void SyntheticSpec::validate() const {
  if (num_classes < 1 || dims < 2 || samples_per_class < 1) {
    throw ValidationError("synthetic spec needs classes >= 1, dims >= 2, samples_per_class >= 1");
  }
  if (!(concentration > 0.0)) throw ValidationError("synthetic concentration must be positive");
  if (backbones.empty()) throw ValidationError("synthetic spec needs at least one backbone");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int n = spec.num_classes * spec.samples_per_class;
  SyntheticData out;
  out.cache.dataset_name = spec.dataset_name;
  for (int c = 0; c < spec.num_classes; ++c) {
    std::ostringstream name;
    name << "class_" << std::setw(3) << std::setfill('0') << c;
    out.cache.class_names.push_back(name.str());
  }
  out.text.class_names = out.cache.class_names;
  out.text.prompt_templates = {"a photo of a {}."};
  out.text.ensembled = false;

  // Balanced labels in a seeded order so classes are interleaved.
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % spec.num_classes;
  const std::string split_tag = "/split" + std::to_string(spec.split);
  auto order_rng = make_stream(spec.seed, "order" + split_tag);
  portable_shuffle(labels.begin(), labels.end(), order_rng);
  out.cache.gt_labels = labels;
  for (int i = 0; i < n; ++i) {
    std::ostringstream id;
    id << spec.dataset_name << "_s" << spec.split << "_" << std::setw(6) << std::setfill('0') << i;
    out.cache.sample_ids.push_back(id.str());
  }

  const double noise_scale = 1.0 / (spec.concentration * std::sqrt(static_cast<double>(spec.dims)));
  for (const auto& backbone : spec.backbones) {
    auto mean_rng = make_stream(spec.seed, "means/" + backbone);
    Matrix means(spec.num_classes, spec.dims);
    Matrix text(spec.num_classes, spec.dims);
    for (int c = 0; c < spec.num_classes; ++c) {
      Eigen::RowVectorXd mean = random_unit(mean_rng, spec.dims);
      // Rotate within the plane of the mean and a random orthogonal direction.
      Eigen::RowVectorXd u = random_unit(mean_rng, spec.dims);
      u -= u.dot(mean) * mean;
      u /= u.norm();
      means.row(c) = mean;
      text.row(c) = std::cos(spec.text_angle) * mean + std::sin(spec.text_angle) * u;
    }
    auto sample_rng = make_stream(spec.seed, "samples/" + backbone + split_tag);
    Matrix features(n, spec.dims);
    for (int i = 0; i < n; ++i) {
      Eigen::RowVectorXd x = means.row(labels[static_cast<std::size_t>(i)]);
      for (int j = 0; j < spec.dims; ++j) x[j] += noise_scale * standard_normal(sample_rng);
      features.row(i) = x;
    }
    out.cache.features[backbone] = {quantize_f32(l2_normalize(features)), true};
    out.text.features[backbone] = {quantize_f32(l2_normalize(text)), true};
  }
  return out;
}

SyntheticSpec pinned_fixture_spec() {
  SyntheticSpec spec;
  spec.num_classes = 10;
  spec.dims = 64;
  spec.concentration = 0.48;
  spec.samples_per_class = 100;
  spec.text_angle = 0.9;
  spec.seed = 42;
  return spec;
}

EvalReport evaluate(const AdapterModel& model, const EmbeddingCache& eval_cache,
                    const TextClassifier& text, const BackboneId& model_backbone, LogitMode mode) {
  if (!eval_cache.has_ground_truth()) {
    throw ValidationError("cache '" + eval_cache.dataset_name + "' has no ground truth to evaluate");
  }
  const FeatureMatrix& features = eval_cache.backbone(model_backbone);
  const std::vector<int> pred =
      predict(model, features.data, text.backbone(model_backbone).data, mode);
  EvalReport report = top1_accuracy(pred, eval_cache.gt_labels, eval_cache.num_classes());
  report.mode = to_string(mode);
  report.label = report.mode;
  return report;
}

EvalReport eval_cross_cache(const AdapterModel& model, const EmbeddingCache& target_cache,
                            const std::vector<std::string>& source_classes,
                            const TextClassifier& text, const BackboneId& model_backbone,
                            LogitMode mode) {
  require_same_classes(source_classes, target_cache.class_names, "target cache '" +
                                                                     target_cache.dataset_name + "'");
  require_same_classes(source_classes, text.class_names, "text classifier");
  return evaluate(model, target_cache, text, model_backbone, mode);
}

std::vector<EvalReport> run_ablation(const EmbeddingCache& train_cache,
                                     const EmbeddingCache& eval_cache, const TextClassifier& text,
                                     const PipelineConfig& cfg, int jobs) {
  cfg.validate();
  require_same_classes(train_cache.class_names, eval_cache.class_names, "eval cache");
  const PseudoLabelSet labels = select_training_samples(train_cache, text, cfg);
  const PrototypeBank bank = build_prototypes(train_cache, labels, text, cfg);

  std::vector<EvalReport> reports(kAblationModes.size());
  run_cells(kAblationModes.size(), jobs, [&](std::size_t i) {
    const std::string key = kAblationModes[i];
    PipelineConfig cell_cfg = cfg;
    AdapterModel model;
    LogitMode mode = LogitMode::kFused;
    if (key == "zero_shot") {
      model = init_adapter(bank, cfg.eta, cfg.beta);
      mode = LogitMode::kClipOnly;
    } else if (key == "training_free") {
      model = init_adapter(bank, cfg.eta, cfg.beta);
    } else {
      if (key == "adapter_only") {
        cell_cfg.train.objective = LogitMode::kAdapterOnly;
        mode = LogitMode::kAdapterOnly;
      } else {
        cell_cfg.train.objective = LogitMode::kFused;
      }
      cell_cfg.init_mode = key == "no_init" ? InitMode::kRandom : InitMode::kPrototype;
      model = fit_adapter(train_cache, labels, bank, text, cell_cfg).model;
    }
    EvalReport report = evaluate(model, eval_cache, text, cfg.model_backbone, mode);
    report.label = key;
    report.config = cell_cfg.describe();
    report.config["trained_epochs"] = std::to_string(model.trained_epochs);
    reports[i] = std::move(report);
  });
  return reports;
}

std::vector<SweepRow> run_k_sweep(const EmbeddingCache& train_cache,
                                  const EmbeddingCache& eval_cache, const TextClassifier& text,
                                  std::span<const int> k_values, const PipelineConfig& cfg,
                                  int jobs) {
  cfg.validate();
  require_same_classes(train_cache.class_names, eval_cache.class_names, "eval cache");
  std::vector<SweepRow> rows(k_values.size());
  run_cells(k_values.size(), jobs, [&](std::size_t i) {
    PipelineConfig cell_cfg = cfg;
    cell_cfg.k = k_values[i];
    cell_cfg.validate();
    PipelineResult result = run_pipeline(train_cache, text, cell_cfg);
    SweepRow row;
    row.k = cell_cfg.k;
    row.n_selected = result.labels.total_selected();
    if (train_cache.has_ground_truth()) {
      row.label_precision = pseudo_label_precision(result.labels, train_cache).overall;
    }
    row.report = evaluate(result.model, eval_cache, text, cfg.model_backbone, LogitMode::kFused);
    row.report.label = "k=" + std::to_string(row.k);
    row.report.config = cell_cfg.describe();
    rows[i] = std::move(row);
  });
  return rows;
}

std::string format_reports_text(const std::vector<EvalReport>& reports) {
  std::size_t width = 5;
  for (const auto& r : reports) width = std::max(width, r.label.size());
  std::ostringstream out;
  out << pad("label", width) << "  " << pad("mode", 12) << "  " << std::setw(8) << "top1(%)"
      << "  " << std::setw(8) << "correct" << "  " << std::setw(8) << "n" << "\n";
  for (const auto& r : reports) {
    out << pad(r.label, width) << "  " << pad(r.mode, 12) << "  " << std::setw(8)
        << fmt_fixed(100.0 * r.top1, 2) << "  " << std::setw(8) << r.n_correct << "  "
        << std::setw(8) << r.n_evaluated << "\n";
  }
  return out.str();
}

std::string reports_to_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  const std::map<std::string, std::string> empty;
  const auto& keys = reports.empty() ? empty : reports.front().config;
  out << "label,mode,top1,n_correct,n_evaluated,per_class_acc" << config_keys_header(keys) << "\n";
  for (const auto& r : reports) {
    out << r.label << ',' << r.mode << ',' << fmt_exact(r.top1) << ',' << r.n_correct << ','
        << r.n_evaluated << ',' << per_class_field(r) << config_values(r.config) << "\n";
  }
  return out.str();
}

std::string reports_to_json(const std::vector<EvalReport>& reports) {
  json rows = json::array();
  for (const auto& r : reports) rows.push_back(report_to_json(r));
  return rows.dump(2) + "\n";
}

std::string format_sweep_text(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << std::setw(4) << "k" << "  " << std::setw(8) << "top1(%)" << "  " << std::setw(9)
      << "selected" << "  " << std::setw(13) << "precision(%)" << "\n";
  for (const auto& row : rows) {
    out << std::setw(4) << row.k << "  " << std::setw(8) << fmt_fixed(100.0 * row.report.top1, 2)
        << "  " << std::setw(9) << row.n_selected << "  " << std::setw(13)
        << (row.label_precision ? fmt_fixed(100.0 * *row.label_precision, 2) : "-") << "\n";
  }
  return out.str();
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  const std::map<std::string, std::string> empty;
  const auto& keys = rows.empty() ? empty : rows.front().report.config;
  out << "k,top1,n_correct,n_evaluated,n_selected,label_precision" << config_keys_header(keys)
      << "\n";
  for (const auto& row : rows) {
    out << row.k << ',' << fmt_exact(row.report.top1) << ',' << row.report.n_correct << ','
        << row.report.n_evaluated << ',' << row.n_selected << ','
        << (row.label_precision ? fmt_exact(*row.label_precision) : "")
        << config_values(row.report.config) << "\n";
  }
  return out.str();
}

std::string sweep_to_json(const std::vector<SweepRow>& rows) {
  json out = json::array();
  for (const auto& row : rows) {
    json j = report_to_json(row.report);
    j["k"] = row.k;
    j["n_selected"] = row.n_selected;
    j["label_precision"] = optional_to_json(row.label_precision);
    out.push_back(std::move(j));
  }
  return out.dump(2) + "\n";
}

}  // namespace protoadapt
