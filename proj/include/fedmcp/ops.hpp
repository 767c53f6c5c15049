#pragma once

#include <vector>

#include "fedmcp/tensor.hpp"

namespace fedmcp {

// Differentiable operations. Each computes its forward result and, when any
// input requires a gradient, records a backward rule on the tape. Gradients
// are accumulated only into inputs with requires_grad set, so frozen leaves
// never allocate gradient buffers.

/// a: [..., k] (rank 2 or 3, leading dims collapsed), b: [k, n].
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

/// 2D transpose.
Tensor transpose(Tape& tape, const Tensor& a);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor div(Tape& tape, const Tensor& a, const Tensor& b);

/// Adds bias (length h) to every row of a [..., h] tensor.
Tensor add_bias(Tape& tape, const Tensor& a, const Tensor& bias);

/// Multiplication by a compile-time constant (no gradient w.r.t. c).
Tensor scale(Tape& tape, const Tensor& a, double c);

/// Exact GeLU: x * Phi(x) with Phi the standard normal CDF (erf form).
Tensor gelu(Tape& tape, const Tensor& x);

Tensor sqrt_elem(Tape& tape, const Tensor& x);

/// max(x, c) elementwise; gradient passes where x >= c.
Tensor clamp_min(Tape& tape, const Tensor& x, double c);

/// Per-row normalization over the last dimension, then affine by gain/bias.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

/// Stable softmax over the last dimension.
Tensor softmax_rows(Tape& tape, const Tensor& x);

/// Mean negative log-softmax of the true class. labels[i] in [0, c).
Tensor cross_entropy(Tape& tape, const Tensor& logits, const std::vector<int>& labels);

/// [n, s, h] -> [n, h], mean over the sequence axis.
Tensor mean_pool_rows(Tape& tape, const Tensor& x);

/// [n, s, h] -> [n, h], representation of token position t in every sample.
Tensor select_token(Tape& tape, const Tensor& x, std::size_t t);

/// [n, s, h] -> [s, h], one sample.
Tensor slice_batch(Tape& tape, const Tensor& x, std::size_t i);

/// 2D column slice [c0, c1).
Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t c0, std::size_t c1);

/// Concatenate 2D tensors with equal row counts along columns.
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);

/// Stack n tensors of shape [s, h] into [n, s, h].
Tensor stack_batch(Tape& tape, const std::vector<Tensor>& parts);

/// Trace of a square matrix.
Tensor trace(Tape& tape, const Tensor& x);

Tensor sum(Tape& tape, const Tensor& x);
Tensor mean_all(Tape& tape, const Tensor& x);

/// [m, n] -> [m], sum over columns.
Tensor row_sum(Tape& tape, const Tensor& x);

}  // namespace fedmcp
