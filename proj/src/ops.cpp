#include "fedmcp/ops.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fedmcp {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_to_string(a.shape()) + " vs " +
                                      shape_to_string(b.shape()));
}

bool any_grad(const Tensor& a) { return a.requires_grad(); }
bool any_grad(const Tensor& a, const Tensor& b) { return a.requires_grad() || b.requires_grad(); }

double norm_cdf(double x) { return 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }
double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 || a.rank() == 3, "matmul: lhs must be rank 2 or 3, got " +
                                              shape_to_string(a.shape()));
  require(b.rank() == 2, "matmul: rhs must be rank 2, got " + shape_to_string(b.shape()));
  const std::size_t k = a.shape().back();
  require(k == b.dim(0), "matmul: inner dimensions disagree, " + shape_to_string(a.shape()) +
                             " vs " + shape_to_string(b.shape()));
  const std::size_t rows = a.numel() / k;
  const std::size_t n = b.dim(1);

  Shape out_shape = a.shape();
  out_shape.back() = n;
  Tensor out = Tensor::zeros(out_shape);
  {
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    double* po = out.values().data();
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = pa[i * k + kk];
        const double* pbr = pb + kk * n;
        double* por = po + i * n;
        for (std::size_t j = 0; j < n; ++j) por[j] += aik * pbr[j];
      }
    }
  }
  if (any_grad(a, b)) {
    out.set_requires_grad(true);
    tape.record({a, b}, out, [a, b, out, rows, k, n]() mutable {
      const std::vector<double>& go = out.grad();
      if (a.requires_grad()) {
        if (!a.has_grad()) a.accumulate_grad(std::vector<double>(a.numel(), 0.0));
        double* ga = a.grad().data();
        const double* pb = b.values().data();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            const double* gor = go.data() + i * n;
            const double* pbr = pb + kk * n;
            for (std::size_t j = 0; j < n; ++j) acc += gor[j] * pbr[j];
            ga[i * k + kk] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        if (!b.has_grad()) b.accumulate_grad(std::vector<double>(b.numel(), 0.0));
        double* gb = b.grad().data();
        const double* pa = a.values().data();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = pa[i * k + kk];
            const double* gor = go.data() + i * n;
            double* gbr = gb + kk * n;
            for (std::size_t j = 0; j < n; ++j) gbr[j] += aik * gor[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require(a.rank() == 2, "transpose: expects rank 2, got " + shape_to_string(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  if (any_grad(a)) {
    out.set_requires_grad(true);
    tape.record({a}, out, [a, out, m, n]() mutable {
      const std::vector<double>& go = out.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) a.accumulate_grad_at(i * n + j, go[j * m + i]);
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) + b.at(i);
  if (any_grad(a, b)) {
    out.set_requires_grad(true);
    tape.record({a, b}, out, [a, b, out]() mutable {
      const std::vector<double>& go = out.grad();
      if (a.requires_grad()) a.accumulate_grad(go);
      if (b.requires_grad()) b.accumulate_grad(go);
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) - b.at(i);
  if (any_grad(a, b)) {
    out.set_requires_grad(true);
    tape.record({a, b}, out, [a, b, out]() mutable {
      const std::vector<double>& go = out.grad();
      if (a.requires_grad()) a.accumulate_grad(go);
      if (b.requires_grad()) {
        for (std::size_t i = 0; i < go.size(); ++i) b.accumulate_grad_at(i, -go[i]);
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) * b.at(i);
  if (any_grad(a, b)) {
    out.set_requires_grad(true);
    tape.record({a, b}, out, [a, b, out]() mutable {
      const std::vector<double>& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (a.requires_grad()) a.accumulate_grad_at(i, go[i] * b.at(i));
        if (b.requires_grad()) b.accumulate_grad_at(i, go[i] * a.at(i));
      }
    });
  }
  return out;
}

Tensor div(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) / b.at(i);
  if (any_grad(a, b)) {
    out.set_requires_grad(true);
    tape.record({a, b}, out, [a, b, out]() mutable {
      const std::vector<double>& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double bi = b.at(i);
        if (a.requires_grad()) a.accumulate_grad_at(i, go[i] / bi);
        if (b.requires_grad()) b.accumulate_grad_at(i, -go[i] * a.at(i) / (bi * bi));
      }
    });
  }
  return out;
}

Tensor add_bias(Tape& tape, const Tensor& a, const Tensor& bias) {
  require(bias.rank() == 1, "add_bias: bias must be rank 1, got " +
                                shape_to_string(bias.shape()));
  const std::size_t h = bias.dim(0);
  require(a.shape().back() == h, "add_bias: last dim mismatch " + shape_to_string(a.shape()) +
                                     " vs " + shape_to_string(bias.shape()));
  const std::size_t rows = a.numel() / h;
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < h; ++j) out.at(r * h + j) = a.at(r * h + j) + bias.at(j);
  if (any_grad(a, bias)) {
    out.set_requires_grad(true);
    tape.record({a, bias}, out, [a, bias, out, rows, h]() mutable {
      const std::vector<double>& go = out.grad();
      if (a.requires_grad()) a.accumulate_grad(go);
      if (bias.requires_grad()) {
        for (std::size_t j = 0; j < h; ++j) {
          double acc = 0.0;
          for (std::size_t r = 0; r < rows; ++r) acc += go[r * h + j];
          bias.accumulate_grad_at(j, acc);
        }
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = c * a.at(i);
  if (any_grad(a)) {
    out.set_requires_grad(true);
    tape.record({a}, out, [a, out, c]() mutable {
      const std::vector<double>& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) a.accumulate_grad_at(i, c * go[i]);
    });
  }
  return out;
}

Tensor gelu(Tape& tape, const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x.at(i);
    out.at(i) = v * norm_cdf(v);
  }
  if (any_grad(x)) {
    out.set_requires_grad(true);
    tape.record({x}, out, [x, out]() mutable {
      const std::vector<double>& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double v = x.at(i);
        x.accumulate_grad_at(i, go[i] * (norm_cdf(v) + v * norm_pdf(v)));
      }
    });
  }
  return out;
}

Tensor sqrt_elem(Tape& tape, const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out.at(i) = std::sqrt(x.at(i));
  if (any_grad(x)) {
    out.set_requires_grad(true);
    tape.record({x}, out, [x, out]() mutable {
      const std::vector<double>& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i)
        x.accumulate_grad_at(i, go[i] * 0.5 / out.at(i));
    });
  }
  return out;
}

Tensor clamp_min(Tape& tape, const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out.at(i) = std::max(x.at(i), c);
  if (any_grad(x)) {
    out.set_requires_grad(true);
    tape.record({x}, out, [x, out, c]() mutable {
      const std::vector<double>& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (x.at(i) >= c) x.accumulate_grad_at(i, go[i]);
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require(eps > 0.0, "layer_norm: eps must be positive");
  require(gain.rank() == 1 && bias.rank() == 1, "layer_norm: gain/bias must be rank 1");
  const std::size_t h = x.shape().back();
  require(gain.dim(0) == h && bias.dim(0) == h,
          "layer_norm: affine shape mismatch " + shape_to_string(x.shape()) + " vs " +
              shape_to_string(gain.shape()));
  const std::size_t rows = x.numel() / h;

  Tensor out = Tensor::zeros(x.shape());
  // Cache normalized values and inverse stddev per row for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t j = 0; j < h; ++j) mean += x.at(r * h + j);
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      const double d = x.at(r * h + j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(h);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t j = 0; j < h; ++j) {
      const double xh = (x.at(r * h + j) - mean) * inv;
      (*xhat)[r * h + j] = xh;
      out.at(r * h + j) = gain.at(j) * xh + bias.at(j);
    }
  }
  if (x.requires_grad() || gain.requires_grad() || bias.requires_grad()) {
    out.set_requires_grad(true);
    tape.record({x, gain, bias}, out, [x, gain, bias, out, xhat, inv_std, rows, h]() mutable {
      const std::vector<double>& go = out.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        if (x.requires_grad()) {
          double mean_g = 0.0, mean_gx = 0.0;
          for (std::size_t j = 0; j < h; ++j) {
            const double g = go[r * h + j] * gain.at(j);
            mean_g += g;
            mean_gx += g * (*xhat)[r * h + j];
          }
          mean_g /= static_cast<double>(h);
          mean_gx /= static_cast<double>(h);
          for (std::size_t j = 0; j < h; ++j) {
            const double g = go[r * h + j] * gain.at(j);
            const double dx = ((*inv_std)[r]) * (g - mean_g - (*xhat)[r * h + j] * mean_gx);
            x.accumulate_grad_at(r * h + j, dx);
          }
        }
        for (std::size_t j = 0; j < h; ++j) {
          if (gain.requires_grad())
            gain.accumulate_grad_at(j, go[r * h + j] * (*xhat)[r * h + j]);
          if (bias.requires_grad()) bias.accumulate_grad_at(j, go[r * h + j]);
        }
      }
    });
  }
  return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.numel() / k;
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = x.at(r * k);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, x.at(r * k + j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double e = std::exp(x.at(r * k + j) - mx);
      out.at(r * k + j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < k; ++j) out.at(r * k + j) /= z;
  }
  if (any_grad(x)) {
    out.set_requires_grad(true);
    tape.record({x}, out, [x, out, rows, k]() mutable {
      const std::vector<double>& go = out.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < k; ++j) dot += go[r * k + j] * out.at(r * k + j);
        for (std::size_t j = 0; j < k; ++j)
          x.accumulate_grad_at(r * k + j, out.at(r * k + j) * (go[r * k + j] - dot));
      }
    });
  }
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, const std::vector<int>& labels) {
  require(logits.rank() == 2, "cross_entropy: logits must be rank 2, got " +
                                  shape_to_string(logits.shape()));
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  require(labels.size() == n, "cross_entropy: " + std::to_string(labels.size()) +
                                  " labels for " + std::to_string(n) + " rows");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[i]) +
                              " outside [0, " + std::to_string(c) + ") at row " +
                              std::to_string(i));
    }
  }
  // Cache softmax for the backward rule.
  auto probs = std::make_shared<std::vector<double>>(n * c);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(logits.at(i, j) - mx);
      (*probs)[i * c + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] /= z;
    total += (mx + std::log(z)) - logits.at(i, static_cast<std::size_t>(labels[i]));
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  if (any_grad(logits)) {
    out.set_requires_grad(true);
    tape.record({logits}, out, [logits, out, probs, labels, n, c]() mutable {
      const double go = out.grad()[0];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          double g = (*probs)[i * c + j];
          if (j == static_cast<std::size_t>(labels[i])) g -= 1.0;
          logits.accumulate_grad_at(i * c + j, go * g / static_cast<double>(n));
        }
      }
    });
  }
  return out;
}

Tensor mean_pool_rows(Tape& tape, const Tensor& x) {
  require(x.rank() == 3, "mean_pool_rows: expects [n, s, h], got " +
                             shape_to_string(x.shape()));
  const std::size_t n = x.dim(0), s = x.dim(1), h = x.dim(2);
  require(s >= 1, "mean_pool_rows: empty sequence axis");
  Tensor out = Tensor::zeros({n, h});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < s; ++t)
      for (std::size_t j = 0; j < h; ++j) out.at(i, j) += x.at((i * s + t) * h + j);
  const double inv = 1.0 / static_cast<double>(s);
  for (double& v : out.values()) v *= inv;
  if (any_grad(x)) {
    out.set_requires_grad(true);
    tape.record({x}, out, [x, out, n, s, h, inv]() mutable {
      const std::vector<double>& go = out.grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < s; ++t)
          for (std::size_t j = 0; j < h; ++j)
            x.accumulate_grad_at((i * s + t) * h + j, go[i * h + j] * inv);
    });
  }
  return out;
}

Tensor select_token(Tape& tape, const Tensor& x, std::size_t t) {
  require(x.rank() == 3, "select_token: expects [n, s, h], got " + shape_to_string(x.shape()));
  const std::size_t n = x.dim(0), s = x.dim(1), h = x.dim(2);
  require(t < s, "select_token: position " + std::to_string(t) + " outside sequence length " +
                     std::to_string(s));
  Tensor out = Tensor::zeros({n, h});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h; ++j) out.at(i, j) = x.at((i * s + t) * h + j);
  if (any_grad(x)) {
    out.set_requires_grad(true);
    tape.record({x}, out, [x, out, n, s, h, t]() mutable {
      const std::vector<double>& go = out.grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < h; ++j)
          x.accumulate_grad_at((i * s + t) * h + j, go[i * h + j]);
    });
  }
  return out;
}

Tensor slice_batch(Tape& tape, const Tensor& x, std::size_t i) {
  require(x.rank() == 3, "slice_batch: expects [n, s, h], got " + shape_to_string(x.shape()));
  const std::size_t n = x.dim(0), s = x.dim(1), h = x.dim(2);
  require(i < n, "slice_batch: sample " + std::to_string(i) + " outside batch " +
                     std::to_string(n));
  Tensor out = Tensor::zeros({s, h});
  for (std::size_t t = 0; t < s; ++t)
    for (std::size_t j = 0; j < h; ++j) out.at(t, j) = x.at((i * s + t) * h + j);
  if (any_grad(x)) {
    out.set_requires_grad(true);
    tape.record({x}, out, [x, out, i, s, h]() mutable {
      const std::vector<double>& go = out.grad();
      for (std::size_t t = 0; t < s; ++t)
        for (std::size_t j = 0; j < h; ++j)
          x.accumulate_grad_at((i * s + t) * h + j, go[t * h + j]);
    });
  }
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t c0, std::size_t c1) {
  require(x.rank() == 2, "slice_cols: expects rank 2, got " + shape_to_string(x.shape()));
  const std::size_t m = x.dim(0), n = x.dim(1);
  require(c0 < c1 && c1 <= n, "slice_cols: range [" + std::to_string(c0) + ", " +
                                  std::to_string(c1) + ") invalid for " +
                                  shape_to_string(x.shape()));
  const std::size_t w = c1 - c0;
  Tensor out = Tensor::zeros({m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out.at(i, j) = x.at(i, c0 + j);
  if (any_grad(x)) {
    out.set_requires_grad(true);
    tape.record({x}, out, [x, out, m, n, c0, w]() mutable {
      const std::vector<double>& go = out.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j)
          x.accumulate_grad_at(i * n + c0 + j, go[i * w + j]);
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  const std::size_t m = parts[0].dim(0);
  std::size_t total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require(p.rank() == 2 && p.dim(0) == m, "concat_cols: row count mismatch");
    total += p.dim(1);
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({m, total});
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out.at(i, off + j) = p.at(i, j);
    off += w;
  }
  if (rg) {
    out.set_requires_grad(true);
    std::vector<Tensor> inputs = parts;
    tape.record(inputs, out, [parts, out, m, total]() mutable {
      const std::vector<double>& go = out.grad();
      std::size_t off = 0;
      for (Tensor& p : parts) {
        const std::size_t w = p.dim(1);
        if (p.requires_grad()) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j)
              p.accumulate_grad_at(i * w + j, go[i * total + off + j]);
        }
        off += w;
      }
    });
  }
  return out;
}

Tensor stack_batch(Tape& tape, const std::vector<Tensor>& parts) {
  require(!parts.empty(), "stack_batch: no parts");
  const std::size_t s = parts[0].dim(0), h = parts[0].dim(1);
  bool rg = false;
  for (const Tensor& p : parts) {
    require(p.rank() == 2 && p.dim(0) == s && p.dim(1) == h, "stack_batch: shape mismatch");
    rg = rg || p.requires_grad();
  }
  const std::size_t n = parts.size();
  Tensor out = Tensor::zeros({n, s, h});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t e = 0; e < s * h; ++e) out.at(i * s * h + e) = parts[i].at(e);
  if (rg) {
    out.set_requires_grad(true);
    std::vector<Tensor> inputs = parts;
    tape.record(inputs, out, [parts, out, s, h]() mutable {
      const std::vector<double>& go = out.grad();
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!parts[i].requires_grad()) continue;
        for (std::size_t e = 0; e < s * h; ++e)
          parts[i].accumulate_grad_at(e, go[i * s * h + e]);
      }
    });
  }
  return out;
}

Tensor trace(Tape& tape, const Tensor& x) {
  require(x.rank() == 2 && x.dim(0) == x.dim(1),
          "trace: expects square matrix, got " + shape_to_string(x.shape()));
  const std::size_t n = x.dim(0);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x.at(i, i);
  Tensor out = Tensor::scalar(acc);
  if (any_grad(x)) {
    out.set_requires_grad(true);
    tape.record({x}, out, [x, out, n]() mutable {
      const double go = out.grad()[0];
      for (std::size_t i = 0; i < n; ++i) x.accumulate_grad_at(i * n + i, go);
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (any_grad(x)) {
    out.set_requires_grad(true);
    tape.record({x}, out, [x, out]() mutable {
      const double go = out.grad()[0];
      for (std::size_t i = 0; i < x.numel(); ++i) x.accumulate_grad_at(i, go);
    });
  }
  return out;
}

Tensor mean_all(Tape& tape, const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  Tensor out = Tensor::scalar(acc * inv);
  if (any_grad(x)) {
    out.set_requires_grad(true);
    tape.record({x}, out, [x, out, inv]() mutable {
      const double go = out.grad()[0];
      for (std::size_t i = 0; i < x.numel(); ++i) x.accumulate_grad_at(i, go * inv);
    });
  }
  return out;
}

Tensor row_sum(Tape& tape, const Tensor& x) {
  require(x.rank() == 2, "row_sum: expects rank 2, got " + shape_to_string(x.shape()));
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += x.at(i, j);
    out.at(i) = acc;
  }
  if (any_grad(x)) {
    out.set_requires_grad(true);
    tape.record({x}, out, [x, out, m, n]() mutable {
      const std::vector<double>& go = out.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) x.accumulate_grad_at(i * n + j, go[i]);
    });
  }
  return out;
}

}  // namespace fedmcp
