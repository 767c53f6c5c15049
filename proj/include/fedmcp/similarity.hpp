#pragma once

#include "fedmcp/model.hpp"
#include "fedmcp/tensor.hpp"

namespace fedmcp {

enum class SimilarityKind { CKA, CosineMean };

struct SimilarityMetric {
  SimilarityKind kind = SimilarityKind::CKA;
  double eps = 1e-12;
};

/// HSIC(K, L) = tr(K H L H) / (n - 1)^2 with H = I - (1/n) 11^T.
/// K and L are n x n Gram matrices; requires n >= 2.
Tensor hsic(Tape& tape, const Tensor& k, const Tensor& l);

/// Linear CKA: HSIC(K, L) / sqrt(HSIC(K, K) HSIC(L, L)) with K = XX^T,
/// L = YY^T. When the denominator falls below eps (constant features on both
/// sides), returns a constant 0 and logs a warning instead of emitting NaN.
Tensor cka(Tape& tape, const Tensor& x, const Tensor& y, double eps = 1e-12);

/// Mean over rows of cos(x_i, y_i); norms are clamped away from zero by eps.
Tensor cosine_mean(Tape& tape, const Tensor& x, const Tensor& y, double eps = 1e-12);

/// Dispatch on the configured metric.
Tensor similarity(Tape& tape, const SimilarityMetric& metric, const Tensor& x,
                  const Tensor& y);

}  // namespace fedmcp
