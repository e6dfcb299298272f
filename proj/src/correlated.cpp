#include "brits/correlated.hpp"

namespace brits {

Var feature_regression(Tape& tape, Var x_comp, const CellVars& cell) {
  const Tensor& W = tape.value(cell.W_z);
  for (std::size_t d = 0; d < W.rows(); ++d) {
    if (W(d, d) != 0.0) {
      throw DataError("feature regression weight has a nonzero diagonal entry at " +
                      std::to_string(d));
    }
  }
  return tape.add(tape.matmul(cell.W_z_masked, x_comp), cell.b_z);
}

Var combine_weights(Tape& tape, Var gamma_x, const Tensor& m, const CellVars& cell) {
  const Var parts[] = {gamma_x, tape.constant(m)};
  return tape.sigmoid(tape.add(tape.matmul(cell.W_beta, tape.concat(parts)), cell.b_beta));
}

Var combine_estimates(Tape& tape, Var z_hat, Var x_hat, Var beta) {
  const Tensor& b = tape.value(beta);
  Var one_minus_beta = tape.sub(tape.constant(Tensor(b.rows(), b.cols(), 1.0)), beta);
  return tape.add(tape.mul(beta, z_hat), tape.mul(one_minus_beta, x_hat));
}

std::pair<LstmState, StepOutput> correlated_step(Tape& tape, const LstmState& state,
                                                 const StepInput& in, const CellVars& cell,
                                                 bool cut_gradient) {
  const std::size_t D = cell.shape.input_dim;
  if (cell.shape.kind != CellKind::correlated) {
    throw DataError("correlated_step: cell has no feature-regression parameters");
  }
  if (in.x.rows() != D || in.m.rows() != D || in.delta.rows() != D) {
    throw DataError("correlated_step: input has " + std::to_string(in.x.rows()) +
                    " features, cell expects " + std::to_string(D));
  }
  auto maybe_cut = [&](Var v) { return cut_gradient ? tape.detach(v) : v; };

  StepOutput out;
  out.x_hat = regress_history(tape, cell, state.h);
  out.x_comp = complement(tape, in.x, in.m, maybe_cut(out.x_hat));
  Var z_hat = feature_regression(tape, out.x_comp, cell);

  Var delta = tape.constant(in.delta);
  Var gamma_x = temporal_decay(tape, delta, cell.W_gamma_x, cell.b_gamma_x);
  Var gamma_h = temporal_decay(tape, delta, cell.W_gamma_h, cell.b_gamma_h);
  Var beta = combine_weights(tape, gamma_x, in.m, cell);
  Var c_hat = combine_estimates(tape, z_hat, out.x_hat, beta);
  Var c_comp = complement(tape, in.x, in.m, maybe_cut(c_hat));

  Var decayed = tape.mul(state.h, gamma_h);
  const Var input_parts[] = {c_comp, tape.constant(in.m)};
  LstmState next = lstm_update(tape, cell, decayed, tape.concat(input_parts), state.c);

  Var loss = tape.add(masked_abs_error(tape, in.x, in.m, out.x_hat),
                      masked_abs_error(tape, in.x, in.m, z_hat));
  out.step_loss = tape.add(loss, masked_abs_error(tape, in.x, in.m, c_hat));
  out.hidden = next.h;
  out.estimate = c_hat;
  out.z_hat = z_hat;
  out.beta = beta;
  out.c_hat = c_hat;
  return {next, out};
}

void zero_feature_diagonal(ParameterSet& params, const CellParams& cell) {
  if (cell.W_z == CellParams::kNone) return;
  Tensor& W = params[cell.W_z].value;
  for (std::size_t d = 0; d < W.rows(); ++d) W(d, d) = 0.0;
}

bool feature_diagonal_is_zero(const ParameterSet& params, const CellParams& cell) {
  if (cell.W_z == CellParams::kNone) return true;
  const Tensor& W = params[cell.W_z].value;
  for (std::size_t d = 0; d < W.rows(); ++d) {
    if (W(d, d) != 0.0) return false;
  }
  return true;
}

}  // namespace brits
