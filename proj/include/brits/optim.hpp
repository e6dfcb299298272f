#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "brits/autodiff.hpp"

namespace brits {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of `value` in place. `step` counts from 1.
void adam_update(std::span<double> value, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::size_t step, const AdamConfig& config);

class Adam {
 public:
  Adam(const ParameterSet& params, AdamConfig config);

  /// Applies one update from the gradients currently stored in `params`.
  void step(ParameterSet& params);

  std::size_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::size_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

double global_grad_norm(const ParameterSet& params);

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterSet& params, double max_norm);

}  // namespace brits
