#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "brits/autodiff.hpp"
#include "brits/data.hpp"
#include "brits/rits.hpp"

namespace brits {

/// Forward and backward passes over one sample. Backward-direction
/// quantities are re-reversed so index t refers to the same time step in both.
struct BidirectionalOutput {
  SequenceOutput fwd;
  SequenceOutput bwd;                // in reversed time order, as computed
  std::vector<Var> bwd_aligned;      // bwd.estimates in forward time order
  Tensor fwd_estimates;              // T x D
  Tensor bwd_estimates;              // T x D, forward time order
  Tensor combined;                   // (fwd + bwd) / 2
  Var fwd_loss;
  Var bwd_loss;
  Var consistency;
  Var fwd_prediction;
  Var bwd_prediction;
};

/// Runs `fwd_cell` over the sample and `bwd_cell` over its reversal. Both
/// cells must have identical shapes; the cell kind is taken from them.
BidirectionalOutput run_bidirectional(Tape& tape, const PreparedSample& sample,
                                      const CellVars& fwd_cell, const CellVars& bwd_cell,
                                      bool cut_gradient = false);

/// Mean over all T x D entries of (fwd - bwd)^2.
Var consistency_loss(Tape& tape, std::span<const Var> fwd_estimates,
                     std::span<const Var> bwd_estimates);

/// fwd loss + bwd loss + consistency (+ mean of the two output losses).
Var bidirectional_total_loss(Tape& tape, const BidirectionalOutput& out,
                             std::optional<double> label, Task task);

/// Observed entries keep their values; missing entries take `estimates`.
/// With `stats`, the result is mapped back to the original units.
Tensor impute(const SequenceInput& sample, const Tensor& estimates,
              const NormalizationStats* stats = nullptr);

enum class ModelKind { rits_i, brits_i, rits, brits };

const char* model_name(ModelKind kind);
/// Accepts "rits-i", "brits-i", "rits", "brits" (underscores also accepted).
ModelKind parse_model(const std::string& name);
bool is_bidirectional(ModelKind kind);
CellKind cell_kind(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::brits_i;
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 64;
  std::size_t output_dim = 1;
  Task task = Task::none;

  CellShape cell_shape() const { return {input_dim, hidden_dim, output_dim, cell_kind(kind)}; }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Everything a forward pass produces for training and inference.
struct ModelOutput {
  Var loss;                      // total objective for the configured task
  Var imputation_loss;           // estimation (+ consistency) part only
  Tensor estimates;              // T x D final estimates (combined for bidirectional)
  Tensor fwd_estimates;
  std::optional<Tensor> bwd_estimates;
  std::optional<Tensor> prediction;  // pre-activation output, averaged over directions
  std::vector<Var> fwd_estimate_vars;
  std::vector<Var> bwd_estimate_vars;  // aligned to forward time
  std::optional<BidirectionalOutput> bidirectional;
  std::optional<SequenceOutput> unidirectional;
};

/// One of the four imputation models with its parameters.
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);
  /// Adopts existing parameters (e.g. from a checkpoint); shapes are checked.
  Model(const ModelConfig& config, ParameterSet params);

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const CellParams& forward_cell() const { return fwd_; }
  const std::optional<CellParams>& backward_cell() const { return bwd_; }
  bool bidirectional() const { return bwd_.has_value(); }

  /// Records the full computation for one sample on `tape`. The label is only
  /// required when the task is not none.
  ModelOutput forward(Tape& tape, const PreparedSample& sample, bool cut_gradient = false);

  /// Re-zeroes the W_z diagonal of correlated cells.
  void enforce_constraints();
  bool constraints_hold() const;

 private:
  ModelConfig config_;
  ParameterSet params_;
  CellParams fwd_;
  std::optional<CellParams> bwd_;
};

}  // namespace brits
