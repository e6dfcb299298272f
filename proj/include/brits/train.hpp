#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "brits/brits.hpp"
#include "brits/data.hpp"
#include "brits/metrics.hpp"
#include "brits/optim.hpp"

namespace brits {

struct TrainConfig {
  ModelKind model = ModelKind::brits_i;
  std::size_t hidden = 64;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  /// Epochs without validation improvement tolerated before stopping.
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  bool cut_gradient = false;
  Task task = Task::none;
  double validation_fraction = 0.10;
  std::size_t folds = 5;
  /// Joint imputation + task epochs per fold after pretraining.
  std::size_t finetune_epochs = 30;
  /// Global gradient-norm bound; <= 0 disables clipping.
  double clip_norm = 5.0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_mae = 0.0;
};

struct Metrics {
  double mae = 0.0;
  double mre = 0.0;
  std::optional<double> auc;
  std::optional<double> accuracy;
  std::optional<double> label_mae;  // regression task
  std::optional<MeanStd> auc_spread;
  std::optional<MeanStd> accuracy_spread;
  std::optional<MeanStd> label_mae_spread;
  std::vector<EpochRecord> per_epoch_validation;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

struct ImputationRun {
  Model model;  // parameters of the best validation epoch
  NormalizationStats stats;
  Metrics metrics;  // validation MAE / MRE of the best epoch
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  /// Normalized training view: eval arrays hold the carved validation entries.
  Dataset validation_split;
  /// Parameter values before the first update.
  std::vector<Tensor> initial_parameters;
};

/// Normalizes, carves `validation_fraction` of the observed entries for early
/// stopping, and trains with Adam on mini-batches. Existing eval entries of
/// `dataset` are never used.
ImputationRun train_imputation(const Dataset& dataset, const TrainConfig& config,
                               const EpochCallback& on_epoch = {});

struct FoldResult {
  std::size_t fold = 0;
  std::size_t size = 0;
  std::optional<double> accuracy;
  std::optional<double> auc;
  std::optional<double> label_mae;
};

struct ClassificationRun {
  ImputationRun pretrain;
  std::vector<Model> fold_models;
  std::vector<FoldResult> folds;
  Metrics metrics;  // task metrics as fold mean, plus spreads
};

/// Pretrains on imputation alone, then runs k-fold cross validation where each
/// fold continues from the pretrained parameters and optimizes imputation and
/// task losses together.
ClassificationRun train_classification(const Dataset& dataset, const TrainConfig& config,
                                       const EpochCallback& on_epoch = {});

/// Shuffled partition of [0, n) into k nearly equal folds.
std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t k,
                                                      std::uint64_t seed);

/// Number of output units the task needs for this dataset.
std::size_t output_dim_for(const Dataset& dataset, Task task);

/// One pass of mini-batch training; returns the mean per-sample loss.
double train_epoch(Model& model, Adam& optimizer, const std::vector<PreparedSample>& data,
                   std::vector<std::size_t>& order, std::mt19937_64& rng,
                   const TrainConfig& config);

/// Completed matrices (observed values kept, missing entries estimated) in
/// the space of `data`.
std::vector<Tensor> impute_dataset(Model& model, const std::vector<PreparedSample>& data);

/// Pre-activation task outputs, averaged over directions.
std::vector<Tensor> predict_outputs(Model& model, const std::vector<PreparedSample>& data);

std::size_t argmax(const Tensor& v);

}  // namespace brits
