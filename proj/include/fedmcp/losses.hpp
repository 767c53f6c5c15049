#pragma once

#include <vector>

#include "fedmcp/model.hpp"
#include "fedmcp/similarity.hpp"
#include "fedmcp/tensor.hpp"

namespace fedmcp {

/// Mixing weights of the client objective
///   L = (1 - gamma) * L_a + gamma * L_b + mu * L_c.
struct LossWeights {
  double gamma = 0.5;
  double mu = 0.05;

  void validate() const;
};

/// Per-term values of one training step, plus the scalar total kept on the
/// tape so one backward covers every component.
struct LossBreakdown {
  double l_a = 0.0;
  double l_b = 0.0;
  double l_c = 0.0;
  double total = 0.0;
  Tensor total_tensor;
};

/// Cross-entropy of the full-path logits.
Tensor loss_a(Tape& tape, const Tensor& logits_a, const std::vector<int>& labels);

/// Cross-entropy of the global-only-path logits.
Tensor loss_b(Tape& tape, const Tensor& logits_b, const std::vector<int>& labels);

/// Contrastive term Sim(x, y) - Sim(x, z). The caller decides which
/// representation plays which role (the anchor configuration); with the
/// global anchor the metric's symmetry lets Sim(x,y) - Sim(y,z) be expressed
/// as loss_c(y, x, z).
Tensor loss_c(Tape& tape, const RepresentationBatch& x, const RepresentationBatch& y,
              const RepresentationBatch& z, const SimilarityMetric& metric);

/// Weighted sum of precomputed component scalars.
LossBreakdown total_loss(Tape& tape, const Tensor& la, const Tensor& lb, const Tensor& lc,
                         const LossWeights& weights);

}  // namespace fedmcp
