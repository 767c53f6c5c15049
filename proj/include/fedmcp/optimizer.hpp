#pragma once

#include <cstddef>
#include <vector>

#include "fedmcp/tensor.hpp"

namespace fedmcp {

struct OptimizerConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 16;

  void validate() const;
};

/// Adam over a fixed list of parameter tensors. Moment buffers are keyed by
/// position, so the parameter list must stay stable for the optimizer's
/// lifetime (true here: adapters are overwritten in place each round, never
/// replaced).
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, OptimizerConfig config);

  /// One update from the gradients currently on the parameters. Parameters
  /// without a gradient buffer (not touched by the last backward) are left
  /// unchanged but still advance the shared step counter.
  void step();

  /// Clears gradient buffers so the next backward starts from zero.
  void zero_grad();

  std::size_t step_count() const { return step_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  OptimizerConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t step_ = 0;
};

}  // namespace fedmcp
