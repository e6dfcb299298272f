#include "brits/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace brits {

namespace {

// Streams derived from the run seed so that model init, shuffling and the
// validation carve never share random numbers.
constexpr std::uint64_t kInitStream = 0x1b873593u;
constexpr std::uint64_t kShuffleStream = 0xcc9e2d51u;
constexpr std::uint64_t kValidationStream = 0x85ebca6bu;
constexpr std::uint64_t kFoldStream = 0xc2b2ae35u;

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

ModelConfig model_config(const TrainConfig& config, std::size_t input_dim, std::size_t output_dim,
                         Task task) {
  ModelConfig mc;
  mc.kind = config.model;
  mc.input_dim = input_dim;
  mc.hidden_dim = config.hidden;
  mc.output_dim = output_dim;
  mc.task = task;
  return mc;
}

}  // namespace

void TrainConfig::validate() const {
  if (hidden == 0) throw DataError("hidden size must be positive");
  if (!(learning_rate > 0.0)) throw DataError("learning rate must be positive");
  if (batch_size == 0) throw DataError("batch size must be positive");
  if (max_epochs == 0) throw DataError("max epochs must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw DataError("validation fraction must lie in (0, 1)");
  }
  if (folds < 2) throw DataError("cross validation needs at least 2 folds");
}

std::size_t output_dim_for(const Dataset& dataset, Task task) {
  if (task != Task::classify) return 1;
  double max_label = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& label = dataset[i].label;
    if (!label) throw DataError("sample " + std::to_string(i) + " has no label");
    if (*label < 0.0 || std::round(*label) != *label) {
      throw DataError("sample " + std::to_string(i) + " has a non-integer class label");
    }
    max_label = std::max(max_label, *label);
  }
  return std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
}

std::size_t argmax(const Tensor& v) {
  return static_cast<std::size_t>(std::max_element(v.data().begin(), v.data().end()) -
                                  v.data().begin());
}

double train_epoch(Model& model, Adam& optimizer, const std::vector<PreparedSample>& data,
                   std::vector<std::size_t>& order, std::mt19937_64& rng,
                   const TrainConfig& config) {
  std::shuffle(order.begin(), order.end(), rng);
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    const double weight = 1.0 / static_cast<double>(end - start);
    model.parameters().zero_grad();
    for (std::size_t k = start; k < end; ++k) {
      Tape tape;
      ModelOutput out = model.forward(tape, data[order[k]], config.cut_gradient);
      loss_sum += tape.scalar(out.loss);
      tape.backward(tape.scale(out.loss, weight));
    }
    if (config.clip_norm > 0.0) clip_grad_norm(model.parameters(), config.clip_norm);
    optimizer.step(model.parameters());
    model.enforce_constraints();
  }
  return loss_sum / static_cast<double>(order.size());
}

std::vector<Tensor> impute_dataset(Model& model, const std::vector<PreparedSample>& data) {
  std::vector<Tensor> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    Tape tape;
    ModelOutput result = model.forward(tape, s);
    out.push_back(impute(s.forward, result.estimates));
  }
  return out;
}

std::vector<Tensor> predict_outputs(Model& model, const std::vector<PreparedSample>& data) {
  std::vector<Tensor> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    Tape tape;
    out.push_back(*model.forward(tape, s).prediction);
  }
  return out;
}

namespace {

ImputationRun run_imputation(const Dataset& dataset, const TrainConfig& config,
                             std::size_t output_dim, const EpochCallback& on_epoch) {
  config.validate();
  validate(dataset);
  const Task task = config.task;

  NormalizationStats stats;
  const Dataset normalized = normalize(dataset, &stats);
  HoldOutResult carve = hold_out_with_report(strip_eval(normalized), config.validation_fraction,
                                             derive(config.seed, kValidationStream));
  if (carve.eliminated == 0) throw DataError("validation split is empty; dataset too small");
  const std::vector<PreparedSample> prepared = prepare(carve.dataset);

  Model model(model_config(config, dataset.front().features(), output_dim, task),
              derive(config.seed, kInitStream));
  Adam optimizer(model.parameters(), AdamConfig{config.learning_rate});
  std::mt19937_64 shuffle_rng(derive(config.seed, kShuffleStream));
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), 0);

  Metrics metrics;
  std::vector<Tensor> initial = model.parameters().snapshot();
  std::vector<Tensor> best_params = initial;
  ImputationScore best_score{};
  double best_mae = INFINITY;
  std::size_t best_epoch = 0, since_best = 0, epoch = 0;
  while (epoch < config.max_epochs) {
    ++epoch;
    double train_loss = 0.0;
    ImputationScore score;
    try {
      train_loss = train_epoch(model, optimizer, prepared, order, shuffle_rng, config);
      score = score_eval_entries(carve.dataset, impute_dataset(model, prepared));
    } catch (const NumericError& e) {
      throw NumericError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
    }
    const EpochRecord record{epoch, train_loss, score.mae};
    metrics.per_epoch_validation.push_back(record);
    if (on_epoch) on_epoch(record);

    if (score.mae < best_mae) {
      best_mae = score.mae;
      best_score = score;
      best_epoch = epoch;
      best_params = model.parameters().snapshot();
      since_best = 0;
    } else if (++since_best > config.patience) {
      break;
    }
  }

  model.parameters().restore(best_params);
  metrics.mae = best_score.mae;
  metrics.mre = best_score.mre;
  return ImputationRun{std::move(model), std::move(stats), std::move(metrics), best_epoch, epoch,
                       std::move(carve.dataset), std::move(initial)};
}

}  // namespace

ImputationRun train_imputation(const Dataset& dataset, const TrainConfig& config,
                               const EpochCallback& on_epoch) {
  return run_imputation(dataset, config, output_dim_for(dataset, config.task), on_epoch);
}

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t k,
                                                      std::uint64_t seed) {
  if (k < 2 || k > n) {
    throw DataError("cannot split " + std::to_string(n) + " samples into " + std::to_string(k) +
                    " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(order[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

ClassificationRun train_classification(const Dataset& dataset, const TrainConfig& config,
                                       const EpochCallback& on_epoch) {
  config.validate();
  if (config.task == Task::none) throw DataError("train_classification needs a task");
  validate(dataset);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (!dataset[i].label) throw DataError("sample " + std::to_string(i) + " has no label");
  }
  const std::size_t output_dim = output_dim_for(dataset, config.task);

  // Phase 1: imputation only. The head is sized for the task so the
  // parameters carry over unchanged.
  TrainConfig pretrain_config = config;
  pretrain_config.task = Task::none;
  ClassificationRun run{run_imputation(dataset, pretrain_config, output_dim, on_epoch), {}, {}, {}};

  const Dataset normalized = apply_normalization(dataset, run.pretrain.stats);
  const std::vector<PreparedSample> prepared = prepare(normalized);
  const auto folds = kfold_partition(dataset.size(), config.folds, derive(config.seed, kFoldStream));

  std::vector<double> accuracies, aucs, label_maes;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<PreparedSample> train_set, test_set;
    std::vector<double> test_labels;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      for (std::size_t i : folds[g]) {
        if (g == f) {
          test_set.push_back(prepared[i]);
          test_labels.push_back(*dataset[i].label);
        } else {
          train_set.push_back(prepared[i]);
        }
      }
    }

    ModelConfig mc = run.pretrain.model.config();
    mc.task = config.task;
    Model model(mc, run.pretrain.model.parameters());
    Adam optimizer(model.parameters(), AdamConfig{config.learning_rate});
    std::mt19937_64 rng(derive(config.seed + f + 1, kShuffleStream));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t e = 0; e < config.finetune_epochs; ++e) {
      try {
        train_epoch(model, optimizer, train_set, order, rng, config);
      } catch (const NumericError& err) {
        throw NumericError("fold " + std::to_string(f) + " diverged in epoch " +
                           std::to_string(e + 1) + ": " + err.what());
      }
    }

    FoldResult result;
    result.fold = f;
    result.size = test_set.size();
    const std::vector<Tensor> outputs = predict_outputs(model, test_set);
    if (config.task == Task::classify) {
      std::vector<std::size_t> predicted, truth;
      std::vector<double> scores, binary;
      for (std::size_t i = 0; i < outputs.size(); ++i) {
        predicted.push_back(argmax(outputs[i]));
        truth.push_back(static_cast<std::size_t>(test_labels[i]));
        if (output_dim == 2) {
          scores.push_back(softmax(outputs[i])[1]);
          binary.push_back(test_labels[i]);
        }
      }
      result.accuracy = accuracy(predicted, truth);
      accuracies.push_back(*result.accuracy);
      const bool both_classes = std::count(binary.begin(), binary.end(), 1.0) > 0 &&
                                std::count(binary.begin(), binary.end(), 0.0) > 0;
      if (output_dim == 2 && both_classes) {
        result.auc = auc(scores, binary);
        aucs.push_back(*result.auc);
      }
    } else {
      double err = 0.0;
      for (std::size_t i = 0; i < outputs.size(); ++i) err += std::fabs(outputs[i][0] - test_labels[i]);
      result.label_mae = err / static_cast<double>(outputs.size());
      label_maes.push_back(*result.label_mae);
    }
    run.folds.push_back(result);
    run.fold_models.push_back(std::move(model));
  }

  run.metrics.mae = run.pretrain.metrics.mae;
  run.metrics.mre = run.pretrain.metrics.mre;
  run.metrics.per_epoch_validation = run.pretrain.metrics.per_epoch_validation;
  if (!accuracies.empty()) {
    run.metrics.accuracy_spread = mean_std(accuracies);
    run.metrics.accuracy = run.metrics.accuracy_spread->mean;
  }
  if (!aucs.empty()) {
    run.metrics.auc_spread = mean_std(aucs);
    run.metrics.auc = run.metrics.auc_spread->mean;
  }
  if (!label_maes.empty()) {
    run.metrics.label_mae_spread = mean_std(label_maes);
    run.metrics.label_mae = run.metrics.label_mae_spread->mean;
  }
  return run;
}

}  // namespace brits
