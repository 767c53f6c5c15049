#include "fedmcp/losses.hpp"

#include <stdexcept>

#include "fedmcp/ops.hpp"

namespace fedmcp {

void LossWeights::validate() const {
  if (gamma < 0.0 || gamma > 1.0) {
    throw std::invalid_argument("loss weights: gamma must lie in [0, 1]");
  }
  if (mu < 0.0) throw std::invalid_argument("loss weights: mu must be non-negative");
}

Tensor loss_a(Tape& tape, const Tensor& logits_a, const std::vector<int>& labels) {
  return cross_entropy(tape, logits_a, labels);
}

Tensor loss_b(Tape& tape, const Tensor& logits_b, const std::vector<int>& labels) {
  return cross_entropy(tape, logits_b, labels);
}

Tensor loss_c(Tape& tape, const RepresentationBatch& x, const RepresentationBatch& y,
              const RepresentationBatch& z, const SimilarityMetric& metric) {
  Tensor pull_apart = similarity(tape, metric, x.values, y.values);
  Tensor pull_together = similarity(tape, metric, x.values, z.values);
  return sub(tape, pull_apart, pull_together);
}

LossBreakdown total_loss(Tape& tape, const Tensor& la, const Tensor& lb, const Tensor& lc,
                         const LossWeights& weights) {
  weights.validate();
  Tensor total = add(tape, scale(tape, la, 1.0 - weights.gamma),
                     add(tape, scale(tape, lb, weights.gamma), scale(tape, lc, weights.mu)));
  LossBreakdown breakdown;
  breakdown.l_a = la.value();
  breakdown.l_b = lb.value();
  breakdown.l_c = lc.value();
  breakdown.total = total.value();
  breakdown.total_tensor = total;
  return breakdown;
}

}  // namespace fedmcp
