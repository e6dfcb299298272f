#include "brits/rits.hpp"

#include <algorithm>
#include <cmath>

#include "brits/correlated.hpp"

namespace brits {

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

void expect_shape(const ParameterSet& params, const std::string& name, std::size_t rows,
                  std::size_t cols) {
  const Tensor& v = params.at(name).value;
  if (v.rows() != rows || v.cols() != cols) {
    throw DataError("parameter '" + name + "' has shape " + v.shape_string() + ", expected " +
                    std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

CellParams add_cell_params(ParameterSet& params, const std::string& prefix,
                           const CellShape& shape, std::mt19937_64& rng) {
  const std::size_t D = shape.input_dim, H = shape.hidden_dim, K = shape.output_dim;
  if (D == 0 || H == 0 || K == 0) throw DataError("cell dimensions must be positive");

  CellParams c;
  c.shape = shape;
  c.W_x = params.add(prefix + "W_x", uniform_matrix(D, H, rng));
  c.b_x = params.add(prefix + "b_x", Tensor(D, 1));
  c.W_gamma_h = params.add(prefix + "W_gamma_h", uniform_matrix(H, D, rng));
  c.b_gamma_h = params.add(prefix + "b_gamma_h", Tensor(H, 1));
  c.W_lstm = params.add(prefix + "W_lstm", uniform_matrix(4 * H, H + 2 * D, rng));
  Tensor b_lstm(4 * H, 1);
  for (std::size_t i = H; i < 2 * H; ++i) b_lstm[i] = 1.0;
  c.b_lstm = params.add(prefix + "b_lstm", std::move(b_lstm));
  c.W_out = params.add(prefix + "W_out", uniform_matrix(K, H, rng));
  c.b_out = params.add(prefix + "b_out", Tensor(K, 1));

  if (shape.kind == CellKind::correlated) {
    Tensor W_z = uniform_matrix(D, D, rng);
    for (std::size_t d = 0; d < D; ++d) W_z(d, d) = 0.0;
    c.W_z = params.add(prefix + "W_z", std::move(W_z));
    c.b_z = params.add(prefix + "b_z", Tensor(D, 1));
    c.W_beta = params.add(prefix + "W_beta", uniform_matrix(D, 2 * D, rng));
    c.b_beta = params.add(prefix + "b_beta", Tensor(D, 1));
    c.W_gamma_x = params.add(prefix + "W_gamma_x", uniform_matrix(D, D, rng));
    c.b_gamma_x = params.add(prefix + "b_gamma_x", Tensor(D, 1));
  }
  return c;
}

CellParams bind_cell_params(const ParameterSet& params, const std::string& prefix,
                            const CellShape& shape) {
  const std::size_t D = shape.input_dim, H = shape.hidden_dim, K = shape.output_dim;
  CellParams c;
  c.shape = shape;
  auto bind = [&](const char* name, std::size_t rows, std::size_t cols) {
    const std::string full = prefix + name;
    expect_shape(params, full, rows, cols);
    return params.index_of(full);
  };
  c.W_x = bind("W_x", D, H);
  c.b_x = bind("b_x", D, 1);
  c.W_gamma_h = bind("W_gamma_h", H, D);
  c.b_gamma_h = bind("b_gamma_h", H, 1);
  c.W_lstm = bind("W_lstm", 4 * H, H + 2 * D);
  c.b_lstm = bind("b_lstm", 4 * H, 1);
  c.W_out = bind("W_out", K, H);
  c.b_out = bind("b_out", K, 1);
  if (shape.kind == CellKind::correlated) {
    c.W_z = bind("W_z", D, D);
    c.b_z = bind("b_z", D, 1);
    c.W_beta = bind("W_beta", D, 2 * D);
    c.b_beta = bind("b_beta", D, 1);
    c.W_gamma_x = bind("W_gamma_x", D, D);
    c.b_gamma_x = bind("b_gamma_x", D, 1);
  }
  return c;
}

CellVars record_cell(Tape& tape, ParameterSet& params, const CellParams& cell) {
  CellVars v;
  v.shape = cell.shape;
  v.W_x = tape.parameter(params[cell.W_x]);
  v.b_x = tape.parameter(params[cell.b_x]);
  v.W_gamma_h = tape.parameter(params[cell.W_gamma_h]);
  v.b_gamma_h = tape.parameter(params[cell.b_gamma_h]);
  v.W_lstm = tape.parameter(params[cell.W_lstm]);
  v.b_lstm = tape.parameter(params[cell.b_lstm]);
  v.W_out = tape.parameter(params[cell.W_out]);
  v.b_out = tape.parameter(params[cell.b_out]);
  if (cell.shape.kind == CellKind::correlated) {
    const std::size_t D = cell.shape.input_dim;
    v.W_z = tape.parameter(params[cell.W_z]);
    Tensor off_diagonal(D, D, 1.0);
    for (std::size_t d = 0; d < D; ++d) off_diagonal(d, d) = 0.0;
    v.W_z_masked = tape.mul(v.W_z, tape.constant(std::move(off_diagonal)));
    v.b_z = tape.parameter(params[cell.b_z]);
    v.W_beta = tape.parameter(params[cell.W_beta]);
    v.b_beta = tape.parameter(params[cell.b_beta]);
    v.W_gamma_x = tape.parameter(params[cell.W_gamma_x]);
    v.b_gamma_x = tape.parameter(params[cell.b_gamma_x]);
  }
  return v;
}

Var regress_history(Tape& tape, const CellVars& cell, Var hidden_prev) {
  return tape.add(tape.matmul(cell.W_x, hidden_prev), cell.b_x);
}

Var complement(Tape& tape, const Tensor& x, const Tensor& m, Var estimate) {
  Tensor observed(x.rows(), 1);
  Tensor missing(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    observed[i] = m[i] * x[i];
    missing[i] = 1.0 - m[i];
  }
  return tape.add(tape.constant(std::move(observed)),
                  tape.mul(tape.constant(std::move(missing)), estimate));
}

Var temporal_decay(Tape& tape, Var delta, Var W, Var b) {
  return tape.exp(tape.negate(tape.relu(tape.add(tape.matmul(W, delta), b))));
}

Var masked_abs_error(Tape& tape, const Tensor& x, const Tensor& m, Var estimate) {
  double observed = 0.0;
  for (double v : m.data()) observed += v;
  Var err = tape.abs(tape.sub(tape.constant(x), estimate));
  Var masked = tape.sum(tape.mul(tape.constant(m), err));
  return tape.scale(masked, 1.0 / std::max(1.0, observed));
}

LstmState zero_state(Tape& tape, std::size_t hidden_dim) {
  return {tape.constant(Tensor(hidden_dim, 1)), tape.constant(Tensor(hidden_dim, 1))};
}

StepInput step_input(const SequenceInput& seq, std::size_t t) {
  const std::size_t D = seq.features();
  StepInput in{Tensor(D, 1), Tensor(D, 1), Tensor(D, 1)};
  for (std::size_t d = 0; d < D; ++d) {
    in.x[d] = seq.values(t, d);
    in.m[d] = seq.masks(t, d);
    in.delta[d] = seq.deltas(t, d);
  }
  return in;
}

LstmState lstm_update(Tape& tape, const CellVars& cell, Var decayed_hidden, Var input,
                      Var cell_state) {
  const std::size_t H = cell.shape.hidden_dim;
  const Var parts[] = {decayed_hidden, input};
  Var gates = tape.add(tape.matmul(cell.W_lstm, tape.concat(parts)), cell.b_lstm);
  Var i = tape.sigmoid(tape.slice(gates, 0, H));
  Var f = tape.sigmoid(tape.slice(gates, H, H));
  Var g = tape.tanh(tape.slice(gates, 2 * H, H));
  Var o = tape.sigmoid(tape.slice(gates, 3 * H, H));
  Var c = tape.add(tape.mul(f, cell_state), tape.mul(i, g));
  Var h = tape.mul(o, tape.tanh(c));
  return {h, c};
}

std::pair<LstmState, StepOutput> step(Tape& tape, const LstmState& state, const StepInput& in,
                                      const CellVars& cell, bool cut_gradient) {
  const std::size_t D = cell.shape.input_dim;
  if (in.x.rows() != D || in.m.rows() != D || in.delta.rows() != D) {
    throw DataError("step: input has " + std::to_string(in.x.rows()) + " features, cell expects " +
                    std::to_string(D));
  }
  StepOutput out;
  out.x_hat = regress_history(tape, cell, state.h);
  out.x_comp = complement(tape, in.x, in.m, cut_gradient ? tape.detach(out.x_hat) : out.x_hat);

  Var gamma_h = temporal_decay(tape, tape.constant(in.delta), cell.W_gamma_h, cell.b_gamma_h);
  Var decayed = tape.mul(state.h, gamma_h);
  const Var input_parts[] = {out.x_comp, tape.constant(in.m)};
  LstmState next = lstm_update(tape, cell, decayed, tape.concat(input_parts), state.c);

  out.hidden = next.h;
  out.step_loss = masked_abs_error(tape, in.x, in.m, out.x_hat);
  out.estimate = out.x_hat;
  return {next, out};
}

Tensor SequenceOutput::estimate_values(const Tape& tape) const {
  if (estimates.empty()) return {};
  const std::size_t D = tape.value(estimates.front()).rows();
  Tensor out(estimates.size(), D);
  for (std::size_t t = 0; t < estimates.size(); ++t) {
    const Tensor& e = tape.value(estimates[t]);
    for (std::size_t d = 0; d < D; ++d) out(t, d) = e[d];
  }
  return out;
}

SequenceOutput forward_sequence(Tape& tape, const SequenceInput& seq, const CellVars& cell,
                                bool cut_gradient) {
  const std::size_t T = seq.length();
  if (T == 0) throw DataError("forward_sequence: empty sequence");
  if (seq.features() != cell.shape.input_dim) {
    throw DataError("sequence has " + std::to_string(seq.features()) +
                    " features, model expects " + std::to_string(cell.shape.input_dim));
  }

  SequenceOutput out;
  out.steps.reserve(T);
  LstmState state = zero_state(tape, cell.shape.hidden_dim);
  std::vector<Var> losses;
  losses.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const StepInput in = step_input(seq, t);
    auto [next, step_out] = cell.shape.kind == CellKind::correlated
                                ? correlated_step(tape, state, in, cell, cut_gradient)
                                : step(tape, state, in, cell, cut_gradient);
    state = next;
    out.estimates.push_back(step_out.estimate);
    out.hiddens.push_back(step_out.hidden);
    losses.push_back(step_out.step_loss);
    out.steps.push_back(step_out);
  }
  out.imputation_loss = tape.scale(tape.sum(tape.concat(losses)), 1.0 / static_cast<double>(T));
  return out;
}

Var predict_label(Tape& tape, std::span<const Var> hiddens, const CellVars& cell) {
  if (hiddens.empty()) throw DataError("predict_label: no hidden states");
  Var pooled = hiddens.front();
  for (std::size_t i = 1; i < hiddens.size(); ++i) pooled = tape.add(pooled, hiddens[i]);
  if (hiddens.size() > 1) pooled = tape.scale(pooled, 1.0 / static_cast<double>(hiddens.size()));
  return tape.add(tape.matmul(cell.W_out, pooled), cell.b_out);
}

Tensor softmax(const Tensor& logits) {
  Tensor out = logits;
  if (out.empty()) return out;
  const double zmax = *std::max_element(out.data().begin(), out.data().end());
  double s = 0.0;
  for (double& v : out.data()) {
    v = std::exp(v - zmax);
    s += v;
  }
  for (double& v : out.data()) v /= s;
  return out;
}

Var output_loss(Tape& tape, Var prediction, double label, Task task) {
  switch (task) {
    case Task::classify: {
      const double rounded = std::round(label);
      if (rounded < 0.0 || rounded != label) {
        throw DataError("classification label must be a nonnegative integer, got " +
                        std::to_string(label));
      }
      return tape.softmax_cross_entropy(prediction, static_cast<std::size_t>(rounded));
    }
    case Task::regress: {
      const Tensor& p = tape.value(prediction);
      Var err = tape.sub(prediction, tape.constant(Tensor(p.rows(), p.cols(), label)));
      return tape.mean(tape.square(err));
    }
    case Task::none:
      break;
  }
  throw DataError("output_loss: task none has no output loss");
}

Var total_loss(Tape& tape, Var imputation_loss, std::optional<Var> prediction,
               std::optional<double> label, Task task) {
  if (task == Task::none) return imputation_loss;
  if (!label) throw DataError(std::string("task '") + task_name(task) + "' requires a label");
  if (!prediction) throw DataError("total_loss: missing prediction");
  return tape.add(imputation_loss, output_loss(tape, *prediction, *label, task));
}

const char* task_name(Task task) {
  switch (task) {
    case Task::none: return "none";
    case Task::classify: return "classify";
    case Task::regress: return "regress";
  }
  return "?";
}

Task parse_task(const std::string& name) {
  if (name == "none") return Task::none;
  if (name == "classify") return Task::classify;
  if (name == "regress") return Task::regress;
  throw DataError("unknown task '" + name + "'");
}

}  // namespace brits
