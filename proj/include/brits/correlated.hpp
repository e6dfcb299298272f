#pragma once

#include <utility>

#include "brits/rits.hpp"

namespace brits {

/// z_hat = W_z x_comp + b_z with the diagonal of W_z masked out, so z_hat[d]
/// never depends on x_comp[d]. Throws DataError if the stored diagonal is
/// not exactly zero.
Var feature_regression(Tape& tape, Var x_comp, const CellVars& cell);

/// beta = sigmoid(W_beta [gamma_x; m] + b_beta)
Var combine_weights(Tape& tape, Var gamma_x, const Tensor& m, const CellVars& cell);

/// beta * z_hat + (1 - beta) * x_hat
Var combine_estimates(Tape& tape, Var z_hat, Var x_hat, Var beta);

/// Feature-correlated step. The step loss adds the masked errors of x_hat,
/// z_hat and c_hat. With `cut_gradient` both x_hat and c_hat enter their
/// complements detached.
std::pair<LstmState, StepOutput> correlated_step(Tape& tape, const LstmState& state,
                                                 const StepInput& in, const CellVars& cell,
                                                 bool cut_gradient = false);

/// Sets the diagonal of W_z to exactly zero.
void zero_feature_diagonal(ParameterSet& params, const CellParams& cell);
bool feature_diagonal_is_zero(const ParameterSet& params, const CellParams& cell);

}  // namespace brits
