#include "fedmcp/similarity.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "fedmcp/ops.hpp"

namespace fedmcp {

namespace {

Tensor centering_matrix(std::size_t n) {
  Tensor h = Tensor::zeros({n, n});
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) h.at(i, j) = (i == j ? 1.0 : 0.0) - inv_n;
  return h;
}

}  // namespace

Tensor hsic(Tape& tape, const Tensor& k, const Tensor& l) {
  if (k.rank() != 2 || k.dim(0) != k.dim(1) || l.rank() != 2 || l.dim(0) != l.dim(1) ||
      k.dim(0) != l.dim(0)) {
    throw std::invalid_argument("hsic: expects two n x n matrices, got " +
                                shape_to_string(k.shape()) + " and " +
                                shape_to_string(l.shape()));
  }
  const std::size_t n = k.dim(0);
  if (n < 2) throw std::invalid_argument("hsic: degenerate batch, need n >= 2");
  Tensor h = centering_matrix(n);
  Tensor khlh = matmul(tape, matmul(tape, matmul(tape, k, h), l), h);
  const double denom = static_cast<double>(n - 1) * static_cast<double>(n - 1);
  return scale(tape, trace(tape, khlh), 1.0 / denom);
}

Tensor cka(Tape& tape, const Tensor& x, const Tensor& y, double eps) {
  if (x.rank() != 2 || y.rank() != 2 || x.dim(0) != y.dim(0)) {
    throw std::invalid_argument("cka: expects [n, h] and [n, h'], got " +
                                shape_to_string(x.shape()) + " and " +
                                shape_to_string(y.shape()));
  }
  Tensor k = matmul(tape, x, transpose(tape, x));
  Tensor l = matmul(tape, y, transpose(tape, y));
  Tensor kl = hsic(tape, k, l);
  Tensor kk = hsic(tape, k, k);
  Tensor ll = hsic(tape, l, l);
  if (std::sqrt(kk.value() * ll.value()) < eps) {
    // Constant features on both sides: no variation means no measurable
    // similarity, and returning 0 keeps training NaN-free.
    std::cerr << "[fedmcp] warning: cka denominator below eps; returning 0\n";
    return Tensor::scalar(0.0);
  }
  return div(tape, kl, sqrt_elem(tape, mul(tape, kk, ll)));
}

Tensor cosine_mean(Tape& tape, const Tensor& x, const Tensor& y, double eps) {
  if (x.rank() != 2 || y.rank() != 2 || x.shape() != y.shape()) {
    throw std::invalid_argument("cosine_mean: shape mismatch " + shape_to_string(x.shape()) +
                                " vs " + shape_to_string(y.shape()));
  }
  Tensor dots = row_sum(tape, mul(tape, x, y));
  Tensor nx = sqrt_elem(tape, row_sum(tape, mul(tape, x, x)));
  Tensor ny = sqrt_elem(tape, row_sum(tape, mul(tape, y, y)));
  Tensor denom = clamp_min(tape, mul(tape, nx, ny), eps);
  return mean_all(tape, div(tape, dots, denom));
}

Tensor similarity(Tape& tape, const SimilarityMetric& metric, const Tensor& x,
                  const Tensor& y) {
  if (metric.kind == SimilarityKind::CKA) return cka(tape, x, y, metric.eps);
  return cosine_mean(tape, x, y, metric.eps);
}

}  // namespace fedmcp
