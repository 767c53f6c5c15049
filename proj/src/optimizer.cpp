#include "fedmcp/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace fedmcp {

void OptimizerConfig::validate() const {
  // A zero rate is allowed here so no-op update paths stay testable; the
  // experiment config layer enforces the strictly positive default.
  if (learning_rate < 0.0) throw std::invalid_argument("optimizer: learning_rate must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw std::invalid_argument("optimizer: betas must lie in [0, 1)");
  }
  if (eps <= 0.0) throw std::invalid_argument("optimizer: eps must be > 0");
  if (batch_size == 0) throw std::invalid_argument("optimizer: batch_size must be > 0");
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamOptimizer::step() {
  ++step_;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    const std::vector<double>& g = p.grad();
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bias1;
      const double vhat = v[j] / bias2;
      p.at(j) -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (Tensor& p : params_) p.drop_grad();
}

}  // namespace fedmcp
