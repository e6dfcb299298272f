#include "brits/brits.hpp"

#include <algorithm>

#include "brits/correlated.hpp"

namespace brits {

BidirectionalOutput run_bidirectional(Tape& tape, const PreparedSample& sample,
                                      const CellVars& fwd_cell, const CellVars& bwd_cell,
                                      bool cut_gradient) {
  if (!(fwd_cell.shape == bwd_cell.shape)) {
    throw DataError("forward and backward cells have different shapes");
  }
  BidirectionalOutput out;
  out.fwd = forward_sequence(tape, sample.forward, fwd_cell, cut_gradient);
  out.bwd = forward_sequence(tape, sample.backward, bwd_cell, cut_gradient);

  const std::size_t T = sample.forward.length();
  out.bwd_aligned.assign(out.bwd.estimates.rbegin(), out.bwd.estimates.rend());
  out.fwd_estimates = out.fwd.estimate_values(tape);
  const Tensor reversed = out.bwd.estimate_values(tape);
  out.bwd_estimates = Tensor(T, reversed.cols());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < reversed.cols(); ++d) out.bwd_estimates(t, d) = reversed(T - 1 - t, d);
  }
  out.combined = out.fwd_estimates;
  for (std::size_t i = 0; i < out.combined.size(); ++i) {
    out.combined[i] = (out.fwd_estimates[i] + out.bwd_estimates[i]) / 2.0;
  }

  out.fwd_loss = out.fwd.imputation_loss;
  out.bwd_loss = out.bwd.imputation_loss;
  out.consistency = consistency_loss(tape, out.fwd.estimates, out.bwd_aligned);
  out.fwd_prediction = predict_label(tape, out.fwd.hiddens, fwd_cell);
  out.bwd_prediction = predict_label(tape, out.bwd.hiddens, bwd_cell);
  return out;
}

Var consistency_loss(Tape& tape, std::span<const Var> fwd_estimates,
                     std::span<const Var> bwd_estimates) {
  if (fwd_estimates.size() != bwd_estimates.size() || fwd_estimates.empty()) {
    throw DataError("consistency_loss: estimate sequences differ in length");
  }
  Var diff = tape.sub(tape.concat(fwd_estimates), tape.concat(bwd_estimates));
  return tape.mean(tape.square(diff));
}

Var bidirectional_total_loss(Tape& tape, const BidirectionalOutput& out,
                             std::optional<double> label, Task task) {
  Var loss = tape.add(tape.add(out.fwd_loss, out.bwd_loss), out.consistency);
  if (task == Task::none) return loss;
  if (!label) throw DataError(std::string("task '") + task_name(task) + "' requires a label");
  Var fwd = output_loss(tape, out.fwd_prediction, *label, task);
  Var bwd = output_loss(tape, out.bwd_prediction, *label, task);
  return tape.add(loss, tape.scale(tape.add(fwd, bwd), 0.5));
}

Tensor impute(const SequenceInput& sample, const Tensor& estimates,
              const NormalizationStats* stats) {
  if (!estimates.same_shape(sample.values)) {
    throw DataError("impute: estimates " + estimates.shape_string() + " do not match sample " +
                    sample.values.shape_string());
  }
  Tensor out(estimates.rows(), estimates.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = sample.masks[i] == 1.0 ? sample.values[i] : estimates[i];
  }
  return stats != nullptr ? denormalize(out, *stats) : out;
}

const char* model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::rits_i: return "rits-i";
    case ModelKind::brits_i: return "brits-i";
    case ModelKind::rits: return "rits";
    case ModelKind::brits: return "brits";
  }
  return "?";
}

ModelKind parse_model(const std::string& name) {
  std::string n = name;
  std::replace(n.begin(), n.end(), '_', '-');
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
  if (n == "rits-i") return ModelKind::rits_i;
  if (n == "brits-i") return ModelKind::brits_i;
  if (n == "rits") return ModelKind::rits;
  if (n == "brits") return ModelKind::brits;
  throw DataError("unknown model '" + name + "' (expected rits-i, brits-i, rits or brits)");
}

bool is_bidirectional(ModelKind kind) {
  return kind == ModelKind::brits_i || kind == ModelKind::brits;
}

CellKind cell_kind(ModelKind kind) {
  return kind == ModelKind::rits || kind == ModelKind::brits ? CellKind::correlated
                                                             : CellKind::uncorrelated;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  std::mt19937_64 rng(seed);
  fwd_ = add_cell_params(params_, "fwd.", config.cell_shape(), rng);
  if (is_bidirectional(config.kind)) bwd_ = add_cell_params(params_, "bwd.", config.cell_shape(), rng);
}

Model::Model(const ModelConfig& config, ParameterSet params)
    : config_(config), params_(std::move(params)) {
  fwd_ = bind_cell_params(params_, "fwd.", config.cell_shape());
  if (is_bidirectional(config.kind)) {
    bwd_ = bind_cell_params(params_, "bwd.", config.cell_shape());
  }
}

ModelOutput Model::forward(Tape& tape, const PreparedSample& sample, bool cut_gradient) {
  if (sample.forward.features() != config_.input_dim) {
    throw DataError("sample has " + std::to_string(sample.forward.features()) +
                    " features, model expects " + std::to_string(config_.input_dim));
  }
  if (config_.task != Task::none && !sample.label) {
    throw DataError(std::string("task '") + task_name(config_.task) + "' requires labeled samples");
  }
  const CellVars fwd = record_cell(tape, params_, fwd_);
  ModelOutput out;

  if (!bwd_) {
    SequenceOutput seq = forward_sequence(tape, sample.forward, fwd, cut_gradient);
    Var prediction = predict_label(tape, seq.hiddens, fwd);
    out.imputation_loss = seq.imputation_loss;
    out.loss = total_loss(tape, seq.imputation_loss, prediction, sample.label, config_.task);
    out.estimates = seq.estimate_values(tape);
    out.fwd_estimates = out.estimates;
    out.prediction = tape.value(prediction);
    out.fwd_estimate_vars = seq.estimates;
    out.unidirectional = std::move(seq);
    return out;
  }

  const CellVars bwd = record_cell(tape, params_, *bwd_);
  BidirectionalOutput bi = run_bidirectional(tape, sample, fwd, bwd, cut_gradient);
  out.imputation_loss = tape.add(tape.add(bi.fwd_loss, bi.bwd_loss), bi.consistency);
  out.loss = bidirectional_total_loss(tape, bi, sample.label, config_.task);
  out.estimates = bi.combined;
  out.fwd_estimates = bi.fwd_estimates;
  out.bwd_estimates = bi.bwd_estimates;
  Tensor prediction = tape.value(bi.fwd_prediction);
  const Tensor& other = tape.value(bi.bwd_prediction);
  for (std::size_t i = 0; i < prediction.size(); ++i) prediction[i] = (prediction[i] + other[i]) / 2.0;
  out.prediction = std::move(prediction);
  out.fwd_estimate_vars = bi.fwd.estimates;
  out.bwd_estimate_vars = bi.bwd_aligned;
  out.bidirectional = std::move(bi);
  return out;
}

void Model::enforce_constraints() {
  zero_feature_diagonal(params_, fwd_);
  if (bwd_) zero_feature_diagonal(params_, *bwd_);
}

bool Model::constraints_hold() const {
  return feature_diagonal_is_zero(params_, fwd_) && (!bwd_ || feature_diagonal_is_zero(params_, *bwd_));
}

}  // namespace brits
