#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "brits/brits.hpp"
#include "brits/data.hpp"
#include "brits/train.hpp"

namespace brits {

// Dataset: one JSON object per line with keys values, masks, timestamps,
// eval_values, eval_masks, label. Matrices are arrays of T rows of D numbers.
void write_ndjson(std::ostream& out, const Dataset& dataset);
Dataset read_ndjson(std::istream& in);
void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

/// `sample_id,t,d,truth,imputed,was_eval`, T x D rows per sample. truth is the
/// eval value for eval entries, the observed value for observed entries and
/// empty otherwise.
void write_imputation_csv(std::ostream& out, const Dataset& dataset,
                          const std::vector<Tensor>& imputations);

/// `epoch,train_loss,val_mae`
void write_curve_csv(std::ostream& out, const std::vector<EpochRecord>& curve);

struct Checkpoint {
  ModelConfig config;
  NormalizationStats stats;
  ParameterSet params;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

/// Rebuilds the model; throws DataError when D differs from `expected_dim`.
Model model_from_checkpoint(const Checkpoint& checkpoint, std::size_t expected_dim);

nlohmann::ordered_json metrics_to_json(const Metrics& metrics);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace brits
