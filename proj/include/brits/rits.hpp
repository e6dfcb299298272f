#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "brits/autodiff.hpp"
#include "brits/data.hpp"

namespace brits {

enum class CellKind { uncorrelated, correlated };
enum class Task { none, classify, regress };

struct CellShape {
  std::size_t input_dim = 0;   // D
  std::size_t hidden_dim = 0;  // H
  std::size_t output_dim = 1;  // classes, or 1 for regression
  CellKind kind = CellKind::uncorrelated;

  friend bool operator==(const CellShape&, const CellShape&) = default;
};

/// Positions of one recurrent cell's parameters inside a ParameterSet.
///
/// Matrices map column vectors, so a weight with shape (out x in) is applied
/// as W * v. The LSTM block stacks the input, forget, candidate and output
/// gates (in that order) over the input [decayed hidden; complement; mask].
struct CellParams {
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  CellShape shape;
  std::size_t W_x = kNone, b_x = kNone;                    // D x H, D
  std::size_t W_gamma_h = kNone, b_gamma_h = kNone;        // H x D, H
  std::size_t W_lstm = kNone, b_lstm = kNone;              // 4H x (H + 2D), 4H
  std::size_t W_out = kNone, b_out = kNone;                // K x H, K
  // Correlated cell only.
  std::size_t W_z = kNone, b_z = kNone;                    // D x D (zero diagonal), D
  std::size_t W_beta = kNone, b_beta = kNone;              // D x 2D, D
  std::size_t W_gamma_x = kNone, b_gamma_x = kNone;        // D x D, D
};

/// Registers a freshly initialized cell under `prefix` (e.g. "fwd.").
///
/// Weights are uniform in +-1/sqrt(fan_in), biases zero except the LSTM
/// forget gate bias, which starts at 1. W_z starts with a zero diagonal.
CellParams add_cell_params(ParameterSet& params, const std::string& prefix,
                           const CellShape& shape, std::mt19937_64& rng);

/// Looks up an existing cell under `prefix`, checking every shape.
CellParams bind_cell_params(const ParameterSet& params, const std::string& prefix,
                            const CellShape& shape);

/// Tape leaves for one cell, recorded once per tape.
struct CellVars {
  CellShape shape;
  Var W_x, b_x, W_gamma_h, b_gamma_h, W_lstm, b_lstm, W_out, b_out;
  Var W_z, W_z_masked, b_z, W_beta, b_beta, W_gamma_x, b_gamma_x;
};

CellVars record_cell(Tape& tape, ParameterSet& params, const CellParams& cell);

/// x_hat = W_x h + b_x
Var regress_history(Tape& tape, const CellVars& cell, Var hidden_prev);

/// m * x + (1 - m) * estimate
Var complement(Tape& tape, const Tensor& x, const Tensor& m, Var estimate);

/// exp(-max(0, W delta + b)), componentwise in (0, 1].
Var temporal_decay(Tape& tape, Var delta, Var W, Var b);

/// <m, |x - estimate|> / max(1, sum(m))
Var masked_abs_error(Tape& tape, const Tensor& x, const Tensor& m, Var estimate);

struct LstmState {
  Var h;
  Var c;
};

LstmState zero_state(Tape& tape, std::size_t hidden_dim);

/// One step's inputs as column vectors.
struct StepInput {
  Tensor x;
  Tensor m;
  Tensor delta;
};

StepInput step_input(const SequenceInput& seq, std::size_t t);

struct StepOutput {
  Var x_hat;     // history-based estimate
  Var x_comp;    // complement fed to the recurrence
  Var hidden;    // h_t
  Var step_loss;
  Var estimate;  // final estimate of this step: x_hat, or c_hat for the correlated cell
  // Correlated cell only.
  std::optional<Var> z_hat;
  std::optional<Var> beta;
  std::optional<Var> c_hat;
};

/// LSTM update from the (already decayed) hidden state and the gate input.
LstmState lstm_update(Tape& tape, const CellVars& cell, Var decayed_hidden, Var input,
                      Var cell_state);

/// Uncorrelated step. With `cut_gradient` the estimate enters the complement
/// detached, so later losses cannot reach it through its value.
std::pair<LstmState, StepOutput> step(Tape& tape, const LstmState& state, const StepInput& in,
                                      const CellVars& cell, bool cut_gradient = false);

struct SequenceOutput {
  std::vector<StepOutput> steps;
  std::vector<Var> estimates;
  std::vector<Var> hiddens;
  Var imputation_loss;  // mean of the step losses

  /// T x D values of `estimates`.
  Tensor estimate_values(const Tape& tape) const;
};

/// Unrolls the cell over a whole sequence from a zero state. Dispatches on
/// the cell kind.
SequenceOutput forward_sequence(Tape& tape, const SequenceInput& seq, const CellVars& cell,
                                bool cut_gradient = false);

/// Affine head over the mean-pooled hidden states; returns pre-activation
/// outputs (logits for classification).
Var predict_label(Tape& tape, std::span<const Var> hiddens, const CellVars& cell);

Tensor softmax(const Tensor& logits);

/// Cross-entropy (classify) or squared error (regress) of one prediction.
Var output_loss(Tape& tape, Var prediction, double label, Task task);

/// imputation_loss + output loss; task none returns imputation_loss.
Var total_loss(Tape& tape, Var imputation_loss, std::optional<Var> prediction,
               std::optional<double> label, Task task);

const char* task_name(Task task);
Task parse_task(const std::string& name);

}  // namespace brits
