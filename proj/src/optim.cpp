#include "brits/optim.hpp"

#include <cmath>

namespace brits {

void adam_update(std::span<double> value, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::size_t step, const AdamConfig& config) {
  if (grad.size() != value.size() || m.size() != value.size() || v.size() != value.size()) {
    throw DataError("adam_update: moment buffers do not match the parameter");
  }
  const double t = static_cast<double>(step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < value.size(); ++i) {
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    value[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

Adam::Adam(const ParameterSet& params, AdamConfig config) : config_(config) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = params[i].value;
    m_.emplace_back(p.rows(), p.cols());
    v_.emplace_back(p.rows(), p.cols());
  }
}

void Adam::step(ParameterSet& params) {
  if (params.size() != m_.size()) throw DataError("Adam: parameter set changed size");
  ++step_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    adam_update(p.value.data(), p.grad.data(), m_[i].data(), v_[i].data(), step_, config_);
  }
}

double global_grad_norm(const ParameterSet& params) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (double g : params[i].grad.data()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(ParameterSet& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (double& g : params[i].grad.data()) g *= factor;
    }
  }
  return norm;
}

}  // namespace brits
