#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "brits/brits.hpp"
#include "brits/correlated.hpp"
#include "brits/data.hpp"

namespace brits::testing {

// Random sample with irregular timestamps and roughly `missing` entries masked.
inline TimeSeriesSample random_sample(std::size_t T, std::size_t D, std::mt19937_64& rng,
                                      double missing = 0.3,
                                      std::optional<double> label = std::nullopt) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tensor values(T, D), masks(T, D);
  std::vector<double> ts(T);
  double clock = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    clock += 0.5 + 2.0 * unit(rng);
    ts[t] = clock;
    for (std::size_t d = 0; d < D; ++d) {
      values(t, d) = normal(rng);
      masks(t, d) = unit(rng) < missing ? 0.0 : 1.0;
    }
  }
  return TimeSeriesSample::from_observations(std::move(values), std::move(masks), std::move(ts),
                                             label);
}

// Overwrites every parameter with N(0, scale^2) draws. Nonzero biases keep
// relu and abs away from their kinks.
inline void randomize(Model& model, std::mt19937_64& rng, double scale = 0.5) {
  std::normal_distribution<double> normal(0.0, scale);
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    for (double& v : model.parameters()[i].value.data()) v = normal(rng);
  }
  model.enforce_constraints();
}

inline double loss_value(Model& model, const PreparedSample& sample, bool cut = false) {
  Tape tape;
  return tape.scalar(model.forward(tape, sample, cut).loss);
}

struct GradCheck {
  double max_rel = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

// Central differences over every parameter entry. Relative error uses
// max(|analytic|, |numeric|, floor) as the denominator.
inline GradCheck finite_difference_check(Model& model, const PreparedSample& sample,
                                         double step = 1e-5, double floor = 1e-6) {
  model.parameters().zero_grad();
  {
    Tape tape;
    tape.backward(model.forward(tape, sample).loss);
  }
  GradCheck out;
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    Parameter& p = model.parameters()[i];
    const Tensor analytic = p.grad;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      if (p.name.find("W_z") != std::string::npos && k / p.value.cols() == k % p.value.cols()) {
        continue;  // diagonal is structurally fixed at zero
      }
      const double saved = p.value[k];
      p.value[k] = saved + step;
      const double up = loss_value(model, sample);
      p.value[k] = saved - step;
      const double down = loss_value(model, sample);
      p.value[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double rel = std::fabs(analytic[k] - numeric) /
                         std::max({std::fabs(analytic[k]), std::fabs(numeric), floor});
      ++out.checked;
      if (rel > out.max_rel) {
        out.max_rel = rel;
        out.worst = p.name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return out;
}

// One feature, steps 5..7 (1-based) missing in a series of 8.
inline TimeSeriesSample example_one_sample() {
  const std::size_t T = 8;
  Tensor values(T, 1), masks(T, 1, 1.0);
  std::vector<double> ts(T);
  for (std::size_t t = 0; t < T; ++t) {
    ts[t] = static_cast<double>(t);
    values(t, 0) = std::sin(0.7 * static_cast<double>(t)) + 0.1 * static_cast<double>(t);
  }
  for (std::size_t t = 4; t <= 6; ++t) masks(t, 0) = 0.0;
  return TimeSeriesSample::from_observations(std::move(values), std::move(masks), std::move(ts));
}

// d l_8 / d x_hat_5 for a unidirectional cell, read off the tape.
inline double delayed_gradient(Model& model, bool cut) {
  const PreparedSample sample = prepare(example_one_sample());
  Tape tape;
  ModelOutput out = model.forward(tape, sample, cut);
  const SequenceOutput& seq = *out.unidirectional;
  tape.backward(seq.steps[7].step_loss);
  return tape.grad(seq.steps[4].x_hat)[0];
}

}  // namespace brits::testing
