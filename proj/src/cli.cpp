#include "brits/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "brits/baselines.hpp"
#include "brits/io.hpp"
#include "brits/metrics.hpp"
#include "brits/train.hpp"

namespace brits {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct Options {
  // generate
  std::size_t n = 100;
  SyntheticConfig synthetic;
  std::string plot_csv;
  // shared
  std::string data;
  std::string out;
  std::string checkpoint;
  std::string space = "normalized";
  std::string kind = "mean";
  // train
  std::string model = "brits-i";
  std::string task = "none";
  bool no_clip = false;
  TrainConfig train;
};

// Flag values that fail domain checks are usage errors, not data errors.
template <typename F>
auto as_usage(const char* flag, F&& f) {
  try {
    return f();
  } catch (const DataError& e) {
    throw CLI::ValidationError(flag, e.what());
  }
}

bool original_space(const Options& o) {
  if (o.space == "normalized") return false;
  if (o.space == "original") return true;
  throw CLI::ValidationError("--space", "expected normalized or original");
}

void emit(const Options& o, const std::string& text, std::ostream& out) {
  if (o.out.empty() || o.out == "-") {
    out << text;
  } else {
    write_text_file(o.out, text);
  }
}

int cmd_generate(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw CLI::ValidationError("--out", "required");
  as_usage("generate", [&] { o.synthetic.validate(); return 0; });
  const Dataset dataset = generate_synthetic_dataset(o.synthetic, o.n);
  save_dataset(o.out, dataset);
  if (!o.plot_csv.empty()) {
    std::ofstream csv(o.plot_csv, std::ios::binary);
    if (!csv) throw DataError("cannot write " + o.plot_csv);
    csv << "sample_id,t,d,truth,observed,was_eval\n";
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& s = dataset[i];
      for (std::size_t t = 0; t < s.length(); ++t) {
        for (std::size_t d = 0; d < s.features(); ++d) {
          const bool eval = s.eval_masks(t, d) == 1.0;
          const bool seen = s.masks(t, d) == 1.0;
          csv << i << ',' << t << ',' << d << ',';
          if (eval) csv << s.eval_values(t, d);
          if (seen) csv << s.values(t, d);
          csv << ',';
          if (seen) csv << s.values(t, d);
          csv << ',' << (eval ? 1 : 0) << '\n';
        }
      }
    }
  }
  out << "wrote " << dataset.size() << " samples to " << o.out << '\n';
  return kExitOk;
}

int cmd_train(Options o, std::ostream& out) {
  if (o.out.empty()) throw CLI::ValidationError("--out", "required");
  o.train.model = as_usage("--model", [&] { return parse_model(o.model); });
  o.train.task = as_usage("--task", [&] { return parse_task(o.task); });
  if (o.no_clip) o.train.clip_norm = 0.0;
  as_usage("train", [&] { o.train.validate(); return 0; });
  const Dataset dataset = load_dataset(o.data);
  fs::create_directories(o.out);
  const fs::path dir(o.out);

  auto save = [&](const fs::path& path, const Model& model, const NormalizationStats& stats) {
    save_checkpoint(path.string(), Checkpoint{model.config(), stats, model.parameters()});
  };
  auto write_curve = [&](const std::vector<EpochRecord>& curve) {
    std::ostringstream csv;
    write_curve_csv(csv, curve);
    write_text_file((dir / "curve.csv").string(), csv.str());
  };

  json report;
  report["model"] = model_name(o.train.model);
  report["task"] = task_name(o.train.task);
  report["seed"] = o.train.seed;
  if (o.train.task == Task::none) {
    const ImputationRun run = train_imputation(dataset, o.train);
    save(dir / "checkpoint.json", run.model, run.stats);
    write_curve(run.metrics.per_epoch_validation);
    report["best_epoch"] = run.best_epoch;
    report["epochs_run"] = run.epochs_run;
    report["validation"] = metrics_to_json(run.metrics);
  } else {
    const ClassificationRun run = train_classification(dataset, o.train);
    save(dir / "checkpoint.json", run.pretrain.model, run.pretrain.stats);
    for (std::size_t f = 0; f < run.fold_models.size(); ++f) {
      save(dir / ("fold" + std::to_string(f) + ".json"), run.fold_models[f], run.pretrain.stats);
    }
    write_curve(run.pretrain.metrics.per_epoch_validation);
    report["best_epoch"] = run.pretrain.best_epoch;
    report["epochs_run"] = run.pretrain.epochs_run;
    report["validation"] = metrics_to_json(run.metrics);
    json folds = json::array();
    for (const auto& f : run.folds) {
      json jf;
      jf["fold"] = f.fold;
      jf["size"] = f.size;
      if (f.accuracy) jf["accuracy"] = *f.accuracy;
      if (f.auc) jf["auc"] = *f.auc;
      if (f.label_mae) jf["label_mae"] = *f.label_mae;
      folds.push_back(std::move(jf));
    }
    report["folds"] = std::move(folds);
  }
  write_text_file((dir / "metrics.json").string(), report.dump(2) + "\n");
  out << "trained " << model_name(o.train.model) << ", validation MAE "
      << report["validation"]["mae"].get<double>() << '\n';
  return kExitOk;
}

struct Loaded {
  Dataset raw;
  Dataset normalized;
  NormalizationStats stats;
  Model model;
};

Loaded load_for_inference(const Options& o) {
  const Checkpoint cp = load_checkpoint(o.checkpoint);
  Dataset raw = load_dataset(o.data);
  Model model = model_from_checkpoint(cp, raw.front().features());
  Dataset normalized = apply_normalization(raw, cp.stats);
  return Loaded{std::move(raw), std::move(normalized), cp.stats, std::move(model)};
}

std::vector<Tensor> to_original(std::vector<Tensor> imputations, const NormalizationStats& stats) {
  for (auto& m : imputations) m = denormalize(m, stats);
  return imputations;
}

int cmd_impute(const Options& o, std::ostream& out) {
  Loaded l = load_for_inference(o);
  std::vector<Tensor> imputations = impute_dataset(l.model, prepare(l.normalized));
  std::ostringstream csv;
  if (original_space(o)) {
    write_imputation_csv(csv, l.raw, to_original(std::move(imputations), l.stats));
  } else {
    write_imputation_csv(csv, l.normalized, imputations);
  }
  emit(o, csv.str(), out);
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  Loaded l = load_for_inference(o);
  const std::vector<PreparedSample> prepared = prepare(l.normalized);
  std::vector<Tensor> imputations = impute_dataset(l.model, prepared);
  const bool original = original_space(o);
  const ImputationScore score =
      original ? score_eval_entries(l.raw, to_original(std::move(imputations), l.stats))
               : score_eval_entries(l.normalized, imputations);
  json report;
  report["model"] = model_name(l.model.config().kind);
  report["space"] = o.space;
  report["count"] = score.count;
  report["mae"] = score.mae;
  report["mre"] = score.mre;

  bool labeled = true;
  for (const auto& s : l.raw) labeled = labeled && s.label.has_value();
  if (labeled && l.model.config().task == Task::classify) {
    std::vector<std::size_t> predicted, truth;
    std::vector<double> scores, binary;
    for (std::size_t i = 0; i < prepared.size(); ++i) {
      Tape tape;
      const Tensor logits = *l.model.forward(tape, prepared[i]).prediction;
      predicted.push_back(argmax(logits));
      truth.push_back(static_cast<std::size_t>(*l.raw[i].label));
      if (logits.size() == 2) {
        scores.push_back(softmax(logits)[1]);
        binary.push_back(*l.raw[i].label);
      }
    }
    report["accuracy"] = accuracy(predicted, truth);
    if (!scores.empty()) {
      try {
        report["auc"] = auc(scores, binary);
      } catch (const DataError&) {
        // single class present: AUC undefined
      }
    }
  }
  emit(o, report.dump(2) + "\n", out);
  return kExitOk;
}

int cmd_baseline(const Options& o, std::ostream& out) {
  const BaselineKind kind = as_usage("--kind", [&] { return parse_baseline(o.kind); });
  const Dataset raw = load_dataset(o.data);
  const bool original = original_space(o);
  NormalizationStats stats;
  const Dataset normalized = normalize(raw, &stats);
  const Dataset& scored = original ? raw : normalized;
  const ImputationScore score = score_eval_entries(scored, baseline_impute(scored, kind));
  json report;
  report["baseline"] = baseline_name(kind);
  report["space"] = o.space;
  report["count"] = score.count;
  report["mae"] = score.mae;
  report["mre"] = score.mre;
  emit(o, report.dump(2) + "\n", out);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"BRITS-family time series imputation"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "write a synthetic state-space dataset");
  gen->add_option("--n", o.n, "number of series")->check(CLI::PositiveNumber);
  gen->add_option("--length", o.synthetic.length, "steps per series");
  gen->add_option("--missing", o.synthetic.missing_fraction, "fraction eliminated as eval entries");
  gen->add_option("--season", o.synthetic.season, "seasonal period");
  gen->add_option("--noise", o.synthetic.noise_std, "disturbance standard deviation");
  gen->add_option("--seed", o.synthetic.seed);
  gen->add_option("--out", o.out, "NDJSON output path")->required();
  gen->add_option("--plot-csv", o.plot_csv, "CSV of truth vs masked input");

  auto* train = app.add_subcommand("train", "train a model and write checkpoint, curve and report");
  train->add_option("--data", o.data)->required()->check(CLI::ExistingFile);
  train->add_option("--out", o.out, "output directory")->required();
  train->add_option("--model", o.model, "rits-i | brits-i | rits | brits");
  train->add_option("--hidden", o.train.hidden);
  train->add_option("--lr", o.train.learning_rate);
  train->add_option("--batch", o.train.batch_size);
  train->add_option("--epochs", o.train.max_epochs);
  train->add_option("--patience", o.train.patience);
  train->add_option("--seed", o.train.seed);
  train->add_flag("--cut-gradient", o.train.cut_gradient, "detach estimates from the graph");
  train->add_option("--task", o.task, "none | classify | regress");
  train->add_option("--val-fraction", o.train.validation_fraction);
  train->add_option("--folds", o.train.folds);
  train->add_option("--finetune-epochs", o.train.finetune_epochs);
  train->add_flag("--no-clip", o.no_clip, "disable gradient-norm clipping");

  auto* imp = app.add_subcommand("impute", "write per-entry imputations as CSV");
  auto* eval = app.add_subcommand("evaluate", "score a checkpoint on the eval entries");
  for (auto* sub : {imp, eval}) {
    sub->add_option("--data", o.data)->required()->check(CLI::ExistingFile);
    sub->add_option("--checkpoint", o.checkpoint)->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output path (default stdout)");
    sub->add_option("--space", o.space, "normalized | original");
  }

  auto* base = app.add_subcommand("baseline", "score a non-learned imputation");
  base->add_option("--data", o.data)->required()->check(CLI::ExistingFile);
  base->add_option("--kind", o.kind, "mean | locf");
  base->add_option("--out", o.out, "output path (default stdout)");
  base->add_option("--space", o.space, "normalized | original");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (imp->parsed()) return cmd_impute(o, out);
    if (eval->parsed()) return cmd_evaluate(o, out);
    return cmd_baseline(o, out);
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace brits
