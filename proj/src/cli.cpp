// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "protoadapt/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "protoadapt/adapter.hpp"
#include "protoadapt/embedcache.hpp"
#include "protoadapt/error.hpp"
#include "protoadapt/eval.hpp"
#include "protoadapt/pipeline.hpp"
#include "protoadapt/prototype.hpp"
#include "protoadapt/pseudolabel.hpp"

namespace protoadapt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flat JSON config: {"k": 8, "labeling-backbone": "vitb16", ...}. Keys are
// long flag names without the leading dashes.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string& name = opt->get_lnames().front();
      if (opt->count() > 0) {
        j[name] = opt->as<std::string>();
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    return j.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::parse_error& e) {
      throw ValidationError(std::string("config file: malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("config file: top level must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(key, v));
      } else {
        item.inputs.push_back(scalar(key, value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const std::string& key, const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw ValidationError("config file: key '" + key + "' must be a scalar or an array of scalars");
  }
};

struct RunConfig {
  std::string cache;
  std::string classifier;
  std::string out;
  std::string eval_cache;
  std::string source_cache;
  std::string adapter;
  std::string pseudolabels;
  std::string prototypes;
  std::string classifier_out;

  PipelineConfig pipeline;
  std::string rank_by = "probability";
  std::string label_source = "pseudo";
  std::string init = "prototype";
  std::string lr_schedule = "cosine";
  std::string optimizer = "adam";
  std::string mode = "fused";
  std::string profile = "default";
  bool no_shuffle = false;
  bool run_pipeline = false;
  int jobs = 1;
  std::vector<int> k_values{kDefaultSweepK.begin(), kDefaultSweepK.end()};

  SyntheticSpec synth = pinned_fixture_spec();
  std::vector<std::string> synth_backbones{"vitb16", "rn50"};

  CLI::Option* epochs_opt = nullptr;
};

using Command = std::function<int(RunConfig&, std::ostream&)>;

struct CommandSpec {
  std::string name;
  std::string description;
  std::function<void(CLI::App&, RunConfig&)> options;
  Command action;
};

// Option groups.

void add_cache_option(CLI::App& app, RunConfig& rc, bool required) {
  app.add_option("--cache", rc.cache, "Embedding cache directory")->required(required);
}

void add_classifier_option(CLI::App& app, RunConfig& rc, bool required) {
  app.add_option("--classifier", rc.classifier, "Text classifier directory")->required(required);
}

void add_selection_options(CLI::App& app, RunConfig& rc) {
  app.add_option("--labeling-backbone", rc.pipeline.labeling_backbone,
                 "Backbone used for zero-shot pseudo-labeling");
  app.add_option("--k", rc.pipeline.k, "Samples selected per class")->check(CLI::PositiveNumber);
  app.add_option("--tau", rc.pipeline.tau, "Softmax temperature for pseudo-labeling")
      ->check(CLI::PositiveNumber);
  app.add_option("--rank-by", rc.rank_by, "Confidence used for top-k ranking")
      ->check(CLI::IsMember({"probability", "similarity"}));
  app.add_option("--label-source", rc.label_source,
                 "pseudo: zero-shot top-k; ground_truth: k labeled shots per class")
      ->check(CLI::IsMember({"pseudo", "ground_truth"}));
}

void add_model_options(CLI::App& app, RunConfig& rc) {
  app.add_option("--model-backbone", rc.pipeline.model_backbone,
                 "Backbone used for prototypes, training and inference");
  app.add_option("--eta", rc.pipeline.eta, "Affinity sharpness")->check(CLI::PositiveNumber);
  app.add_option("--beta", rc.pipeline.beta, "Residual ratio of the adapter branch")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--text-fallback", rc.pipeline.text_fallback,
               "Use the text feature as prototype for classes with no selections");
}

void add_train_options(CLI::App& app, RunConfig& rc) {
  rc.epochs_opt = app.add_option("--epochs", rc.pipeline.train.epochs,
                                 "Training epochs (30 under --profile imagenet)")
                      ->check(CLI::PositiveNumber);
  app.add_option("--batch-size", rc.pipeline.train.batch_size, "Mini-batch size")
      ->check(CLI::PositiveNumber);
  app.add_option("--lr", rc.pipeline.train.learning_rate, "Base learning rate")
      ->check(CLI::PositiveNumber);
  app.add_option("--lr-schedule", rc.lr_schedule, "Learning-rate schedule")
      ->check(CLI::IsMember({"cosine", "constant"}));
  app.add_option("--optimizer", rc.optimizer, "adam or plain gradient descent (sgd)")
      ->check(CLI::IsMember({"adam", "sgd"}));
  app.add_option("--seed", rc.pipeline.train.seed, "Seed for every random stream");
  app.add_flag("--no-shuffle", rc.no_shuffle, "Keep the training order fixed");
  app.add_option("--init", rc.init, "Adapter initialisation")
      ->check(CLI::IsMember({"prototype", "random"}));
  app.add_option("--profile", rc.profile, "Epoch preset")
      ->check(CLI::IsMember({"default", "imagenet"}));
}

void add_pipeline_options(CLI::App& app, RunConfig& rc) {
  add_selection_options(app, rc);
  add_model_options(app, rc);
  add_train_options(app, rc);
}

void add_mode_option(CLI::App& app, RunConfig& rc) {
  app.add_option("--mode", rc.mode, "Logit branches used for prediction")
      ->check(CLI::IsMember({"fused", "adapter_only", "clip_only"}));
}

// Validates and resolves the string-typed fields before any work starts.
void finalize(RunConfig& rc) {
  rc.pipeline.rank_by = parse_rank_by(rc.rank_by);
  rc.pipeline.label_source = parse_label_source(rc.label_source);
  rc.pipeline.init_mode = parse_init_mode(rc.init);
  rc.pipeline.train.lr_schedule = parse_schedule(rc.lr_schedule);
  rc.pipeline.train.optimizer = parse_optimizer(rc.optimizer);
  rc.pipeline.train.shuffle = !rc.no_shuffle;
  if (rc.profile == "imagenet" && rc.epochs_opt != nullptr && rc.epochs_opt->count() == 0) {
    rc.pipeline.train.epochs = 30;
  }
  (void)parse_logit_mode(rc.mode);
  if (rc.jobs < 1) throw ValidationError("--jobs must be >= 1");
  for (int k : rc.k_values) {
    if (k < 1) throw ValidationError("--k-values entries must be >= 1, got " + std::to_string(k));
  }
  rc.pipeline.validate();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string percent(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << 100.0 * v << "%";
  return out.str();
}

std::string percent(const std::optional<double>& v) { return v ? percent(*v) : "n/a"; }

// Commands.

int cmd_validate(RunConfig& rc, std::ostream& out) {
  if (rc.cache.empty() && rc.classifier.empty()) {
    throw ValidationError("nothing to validate: pass --cache and/or --classifier");
  }
  std::size_t total = 0;
  auto report = [&](const std::string& what, const std::vector<Violation>& violations) {
    for (const auto& v : violations) {
      out << what << ": [" << v.invariant << "] " << v.location << ": " << v.message << "\n";
    }
    total += violations.size();
  };
  if (!rc.cache.empty()) {
    EmbeddingCache cache = load_cache(rc.cache, false);
    out << "cache " << rc.cache << ": dataset '" << cache.dataset_name << "', " << cache.size()
        << " samples, " << cache.num_classes() << " classes, backbones:";
    for (const auto& [id, m] : cache.features) out << " " << id << "(d=" << m.dims() << ")";
    out << (cache.has_ground_truth() ? ", with ground truth" : "") << "\n";
    report("cache", validate(cache));
  }
  if (!rc.classifier.empty()) {
    TextClassifier text = load_classifier(rc.classifier, false);
    out << "classifier " << rc.classifier << ": " << text.num_classes() << " classes, "
        << text.prompt_templates.size() << " template(s), backbones:";
    for (const auto& [id, m] : text.features) out << " " << id << "(d=" << m.dims() << ")";
    out << "\n";
    report("classifier", validate(text));
  }
  if (!rc.cache.empty() && !rc.classifier.empty()) {
    EmbeddingCache cache = load_cache(rc.cache, false);
    TextClassifier text = load_classifier(rc.classifier, false);
    try {
      require_same_classes(text.class_names, cache.class_names, "cache vs classifier");
    } catch (const ValidationError& e) {
      out << "pair: [class_names] " << e.what() << "\n";
      ++total;
    }
  }
  out << (total == 0 ? "OK: no violations" : std::to_string(total) + " violation(s)") << "\n";
  return total == 0 ? kExitOk : kExitInvalid;
}

int cmd_pseudo_label(RunConfig& rc, std::ostream& out) {
  EmbeddingCache cache = load_cache(rc.cache);
  TextClassifier text = load_classifier(rc.classifier);
  PseudoLabelSet labels = select_training_samples(cache, text, rc.pipeline);
  save_pseudo_labels(labels, rc.out);

  std::optional<PrecisionReport> precision;
  if (cache.has_ground_truth()) precision = pseudo_label_precision(labels, cache);
  for (std::size_t c = 0; c < labels.per_class.size(); ++c) {
    out << std::setw(4) << c << "  " << cache.class_names[c] << ": "
        << labels.per_class[c].size() << " selected";
    if (precision) out << ", precision " << percent(precision->per_class[c]);
    out << "\n";
  }
  out << "total selected: " << labels.total_selected() << " (k=" << labels.k << ", "
      << labels.num_classes() << " classes)";
  if (precision) out << ", overall precision " << percent(precision->overall);
  out << "\nwrote " << rc.out << "\n";
  return kExitOk;
}

int cmd_prototypes(RunConfig& rc, std::ostream& out) {
  EmbeddingCache cache = load_cache(rc.cache);
  PseudoLabelSet labels = load_pseudo_labels(rc.pseudolabels);
  std::optional<TextClassifier> text;
  PrototypeOptions options;
  if (rc.pipeline.text_fallback) {
    if (rc.classifier.empty()) throw ValidationError("--text-fallback requires --classifier");
    text = load_classifier(rc.classifier);
    options.empty_class_fallback = &*text;
  }
  PrototypeBank bank = estimate_prototypes(cache, labels, rc.pipeline.model_backbone, options);
  save_prototypes(bank, rc.out);
  for (std::size_t c = 0; c < bank.k_used.size(); ++c) {
    out << std::setw(4) << c << "  " << bank.class_names[c] << ": averaged " << bank.k_used[c]
        << (bank.k_used[c] == 0 ? " (text fallback)" : "") << "\n";
  }
  out << "wrote " << rc.out << " (" << bank.prototypes.rows() << "x" << bank.prototypes.cols()
      << ", backbone " << bank.source_backbone << ")\n";
  return kExitOk;
}

int cmd_train(RunConfig& rc, std::ostream& out) {
  EmbeddingCache cache = load_cache(rc.cache);
  TextClassifier text = load_classifier(rc.classifier);
  const fs::path out_dir = rc.out;
  ensure_dir(out_dir);

  PseudoLabelSet labels;
  PrototypeBank bank;
  if (rc.run_pipeline) {
    labels = select_training_samples(cache, text, rc.pipeline);
    bank = build_prototypes(cache, labels, text, rc.pipeline);
    // Train from the values written to disk so a staged rerun matches.
    bank.prototypes = quantize_f32(bank.prototypes);
    save_pseudo_labels(labels, out_dir / "pseudolabels.json");
    save_prototypes(bank, out_dir / "prototypes");
  } else {
    if (rc.pseudolabels.empty() || rc.prototypes.empty()) {
      throw ValidationError("train needs --pseudolabels and --prototypes, or --pipeline");
    }
    labels = load_pseudo_labels(rc.pseudolabels);
    bank = load_prototypes(rc.prototypes);
  }
  require_same_classes(text.class_names, cache.class_names, "cache vs classifier");
  TrainResult result = fit_adapter(cache, labels, bank, text, rc.pipeline);
  save_adapter(result.model, out_dir);
  payload::write_text(out_dir / "history.csv", result.history.to_csv());

  const auto flat = labels.flatten();
  const Matrix train_features = gather_rows(cache.backbone(rc.pipeline.model_backbone).data, flat.samples);
  const auto pred = predict(result.model, train_features,
                            text.backbone(rc.pipeline.model_backbone).data, LogitMode::kFused);
  EvalReport train_report = top1_accuracy(pred, flat.labels, cache.num_classes());
  const auto& last = result.history.epochs.back();
  out << "trained " << result.model.trained_epochs << " epochs on " << flat.samples.size()
      << " samples; final epoch loss " << last.loss << "\n";
  out << "final train accuracy " << percent(train_report.top1) << "\n";
  out << "wrote " << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_predict(RunConfig& rc, std::ostream& out) {
  AdapterModel model = load_adapter(rc.adapter);
  EmbeddingCache cache = load_cache(rc.cache);
  TextClassifier text = load_classifier(rc.classifier);
  require_same_classes(text.class_names, cache.class_names, "cache vs classifier");
  const auto pred = predict(model, cache.backbone(rc.pipeline.model_backbone).data,
                            text.backbone(rc.pipeline.model_backbone).data,
                            parse_logit_mode(rc.mode));
  std::ostringstream csv;
  csv << "sample_id,prediction,class_name\n";
  for (std::size_t i = 0; i < pred.size(); ++i) {
    csv << cache.sample_ids[i] << ',' << pred[i] << ','
        << text.class_names[static_cast<std::size_t>(pred[i])] << "\n";
  }
  payload::write_text(rc.out, csv.str());
  out << "wrote " << pred.size() << " predictions to " << rc.out << "\n";
  return kExitOk;
}

int cmd_eval(RunConfig& rc, std::ostream& out) {
  AdapterModel model = load_adapter(rc.adapter);
  EmbeddingCache target = load_cache(rc.cache);
  TextClassifier text = load_classifier(rc.classifier);
  std::vector<std::string> source_classes = text.class_names;
  if (!rc.source_cache.empty()) source_classes = load_cache(rc.source_cache).class_names;
  EvalReport report = eval_cross_cache(model, target, source_classes, text,
                                       rc.pipeline.model_backbone, parse_logit_mode(rc.mode));
  report.label = target.dataset_name;
  report.config = {{"adapter", rc.adapter},
                   {"cache", rc.cache},
                   {"model_backbone", rc.pipeline.model_backbone},
                   {"eta", std::to_string(model.eta)},
                   {"beta", std::to_string(model.beta)},
                   {"trained_epochs", std::to_string(model.trained_epochs)}};
  const std::vector<EvalReport> reports{report};
  out << format_reports_text(reports);
  for (std::size_t c = 0; c < report.per_class_acc.size(); ++c) {
    out << "  " << target.class_names[c] << ": " << percent(report.per_class_acc[c]) << "\n";
  }
  if (!rc.out.empty()) {
    const fs::path dir = rc.out;
    ensure_dir(dir);
    payload::write_text(dir / "eval.txt", format_reports_text(reports));
    payload::write_text(dir / "eval.csv", reports_to_csv(reports));
    payload::write_text(dir / "eval.json", reports_to_json(reports));
  }
  return kExitOk;
}

// Loads the train cache, optional separate eval cache, and classifier.
struct Inputs {
  EmbeddingCache train;
  std::optional<EmbeddingCache> eval;
  TextClassifier text;

  const EmbeddingCache& eval_cache() const { return eval ? *eval : train; }
};

Inputs load_inputs(const RunConfig& rc) {
  Inputs in{load_cache(rc.cache), std::nullopt, load_classifier(rc.classifier)};
  if (!rc.eval_cache.empty()) in.eval = load_cache(rc.eval_cache);
  return in;
}

int cmd_ablate(RunConfig& rc, std::ostream& out) {
  Inputs in = load_inputs(rc);
  auto reports = run_ablation(in.train, in.eval_cache(), in.text, rc.pipeline, rc.jobs);
  out << format_reports_text(reports);
  const fs::path dir = rc.out;
  ensure_dir(dir);
  payload::write_text(dir / "ablation.txt", format_reports_text(reports));
  payload::write_text(dir / "ablation.csv", reports_to_csv(reports));
  payload::write_text(dir / "ablation.json", reports_to_json(reports));
  return kExitOk;
}

int cmd_sweep(RunConfig& rc, std::ostream& out) {
  Inputs in = load_inputs(rc);
  auto rows = run_k_sweep(in.train, in.eval_cache(), in.text, rc.k_values, rc.pipeline, rc.jobs);
  out << format_sweep_text(rows);
  const fs::path dir = rc.out;
  ensure_dir(dir);
  payload::write_text(dir / "sweep.txt", format_sweep_text(rows));
  payload::write_text(dir / "sweep.csv", sweep_to_csv(rows));
  payload::write_text(dir / "sweep.json", sweep_to_json(rows));
  return kExitOk;
}

int cmd_synth(RunConfig& rc, std::ostream& out) {
  rc.synth.backbones = rc.synth_backbones;
  SyntheticData data = generate_synthetic(rc.synth);
  save_cache(data.cache, rc.out);
  if (!rc.classifier_out.empty()) save_classifier(data.text, rc.classifier_out);
  out << "wrote cache " << rc.out << ": " << data.cache.size() << " samples, "
      << data.cache.num_classes() << " classes\n";
  for (const auto& id : rc.synth.backbones) {
    const auto pred = argmax_labels(
        similarity_matrix(data.cache.backbone(id), data.text.backbone(id)));
    out << "  zero-shot top-1 [" << id << "]: "
        << percent(top1_accuracy(pred, data.cache.gt_labels, data.cache.num_classes()).top1)
        << "\n";
  }
  if (!rc.classifier_out.empty()) out << "wrote classifier " << rc.classifier_out << "\n";
  return kExitOk;
}

std::vector<CommandSpec> commands() {
  return {
      {"validate", "Check cache and/or classifier invariants",
       [](CLI::App& app, RunConfig& rc) {
         add_cache_option(app, rc, false);
         add_classifier_option(app, rc, false);
       },
       cmd_validate},
      {"pseudo-label", "Zero-shot pseudo-label a cache and keep the top-k per class",
       [](CLI::App& app, RunConfig& rc) {
         add_cache_option(app, rc, true);
         add_classifier_option(app, rc, true);
         app.add_option("--out", rc.out, "Output pseudolabels.json path")->required();
         add_selection_options(app, rc);
         app.add_option("--seed", rc.pipeline.train.seed, "Seed (ground_truth label source)");
       },
       cmd_pseudo_label},
      {"prototypes", "Average selected features into class prototypes",
       [](CLI::App& app, RunConfig& rc) {
         add_cache_option(app, rc, true);
         add_classifier_option(app, rc, false);
         app.add_option("--pseudolabels", rc.pseudolabels, "pseudolabels.json path")->required();
         app.add_option("--out", rc.out, "Output prototype directory")->required();
         app.add_option("--model-backbone", rc.pipeline.model_backbone,
                        "Backbone whose features are averaged");
         app.add_flag("--text-fallback", rc.pipeline.text_fallback,
                      "Use the text feature for classes with no selections");
       },
       cmd_prototypes},
      {"train", "Train the prototype adapter",
       [](CLI::App& app, RunConfig& rc) {
         add_cache_option(app, rc, true);
         add_classifier_option(app, rc, true);
         app.add_option("--out", rc.out, "Output directory for the adapter and history")
             ->required();
         app.add_option("--pseudolabels", rc.pseudolabels, "pseudolabels.json path");
         app.add_option("--prototypes", rc.prototypes, "Prototype directory");
         app.add_flag("--pipeline", rc.run_pipeline,
                      "Generate pseudo-labels and prototypes in-process");
         add_pipeline_options(app, rc);
       },
       cmd_train},
      {"predict", "Write per-sample predictions as CSV",
       [](CLI::App& app, RunConfig& rc) {
         app.add_option("--adapter", rc.adapter, "Adapter directory")->required();
         add_cache_option(app, rc, true);
         add_classifier_option(app, rc, true);
         app.add_option("--out", rc.out, "Output CSV path")->required();
         app.add_option("--model-backbone", rc.pipeline.model_backbone, "Inference backbone");
         add_mode_option(app, rc);
       },
       cmd_predict},
      {"eval", "Top-1 accuracy of a trained adapter, possibly on a shifted cache",
       [](CLI::App& app, RunConfig& rc) {
         app.add_option("--adapter", rc.adapter, "Adapter directory")->required();
         add_cache_option(app, rc, true);
         add_classifier_option(app, rc, true);
         app.add_option("--source-cache", rc.source_cache,
                        "Training cache whose class list the target must match");
         app.add_option("--out", rc.out, "Report directory");
         app.add_option("--model-backbone", rc.pipeline.model_backbone, "Inference backbone");
         add_mode_option(app, rc);
       },
       cmd_eval},
      {"ablate", "Component ablation: zero-shot, adapter-only, training-free, no-init, full",
       [](CLI::App& app, RunConfig& rc) {
         add_cache_option(app, rc, true);
         add_classifier_option(app, rc, true);
         app.add_option("--eval-cache", rc.eval_cache, "Held-out cache (defaults to --cache)");
         app.add_option("--out", rc.out, "Report directory")->required();
         app.add_option("--jobs", rc.jobs, "Parallel cells")->check(CLI::PositiveNumber);
         add_pipeline_options(app, rc);
       },
       cmd_ablate},
      {"sweep", "Full pipeline once per k",
       [](CLI::App& app, RunConfig& rc) {
         add_cache_option(app, rc, true);
         add_classifier_option(app, rc, true);
         app.add_option("--eval-cache", rc.eval_cache, "Held-out cache (defaults to --cache)");
         app.add_option("--out", rc.out, "Report directory")->required();
         app.add_option("--k-values", rc.k_values, "Comma-separated k values")->delimiter(',');
         app.add_option("--jobs", rc.jobs, "Parallel cells")->check(CLI::PositiveNumber);
         add_pipeline_options(app, rc);
       },
       cmd_sweep},
      {"synth", "Generate a synthetic cache and text classifier",
       [](CLI::App& app, RunConfig& rc) {
         app.add_option("--out", rc.out, "Output cache directory")->required();
         app.add_option("--classifier-out", rc.classifier_out, "Output classifier directory");
         app.add_option("--classes", rc.synth.num_classes, "Class count")
             ->check(CLI::PositiveNumber);
         app.add_option("--dims", rc.synth.dims, "Feature dimensionality")
             ->check(CLI::Range(2, 1 << 20));
         app.add_option("--concentration", rc.synth.concentration, "Cluster concentration")
             ->check(CLI::PositiveNumber);
         app.add_option("--samples-per-class", rc.synth.samples_per_class, "Samples per class")
             ->check(CLI::PositiveNumber);
         app.add_option("--text-angle", rc.synth.text_angle,
                        "Angle in radians between class mean and text feature");
         app.add_option("--seed", rc.synth.seed, "Seed for class means and text features");
         app.add_option("--split", rc.synth.split, "Sample split (0 train, 1 test, ...)");
         app.add_option("--backbones", rc.synth_backbones, "Comma-separated backbone ids")
             ->delimiter(',');
         app.add_option("--name", rc.synth.dataset_name, "Dataset name");
       },
       cmd_synth},
  };
}

std::string usage(const std::string& program) {
  std::ostringstream out;
  out << "usage: " << program << " <command> [options]\n\ncommands:\n";
  for (const auto& cmd : commands()) {
    out << "  " << std::left << std::setw(14) << cmd.name << cmd.description << "\n";
  }
  out << "\nRun '" << program << " <command> --help' for the options of a command.\n"
      << "Exit codes: 0 success, 1 runtime or I/O failure, 2 invalid input or config.\n";
  return out.str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const std::string program = args.empty() ? "protoadapt" : fs::path(args[0]).filename().string();
  if (args.size() < 2) {
    err << usage(program);
    return kExitInvalid;
  }
  if (args[1] == "--help" || args[1] == "-h" || args[1] == "help") {
    out << usage(program);
    return kExitOk;
  }
  const auto specs = commands();
  auto it = std::find_if(specs.begin(), specs.end(),
                         [&](const CommandSpec& c) { return c.name == args[1]; });
  if (it == specs.end()) {
    err << "error: unknown command '" << args[1] << "'\n" << usage(program);
    return kExitInvalid;
  }

  RunConfig rc;
  CLI::App app(it->description, program + " " + it->name);
  app.option_defaults()->always_capture_default();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "Flat JSON file of flag values (command line wins)");
  app.allow_config_extras(CLI::config_extras_mode::error);
  it->options(app, rc);

  try {
    // CLI11 consumes a reversed argument vector.
    std::vector<std::string> rest(args.rbegin(), args.rend() - 2);
    app.parse(rest);
    finalize(rc);
    return it->action(rc, out);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << it->name << ": " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ValidationError& e) {
    err << "error: " << it->name << ": " << e.what() << "\n";
    return kExitInvalid;
  } catch (const IoError& e) {
    err << "error: " << it->name << ": " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << it->name << ": " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace protoadapt::cli
