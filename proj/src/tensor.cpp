#include "fedmcp/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fedmcp {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto d = std::make_shared<Data>();
  d->data.assign(shape_numel(shape), 0.0);
  d->shape = std::move(shape);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.values()) v = value;
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor: shape " + shape_to_string(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
  auto d = std::make_shared<Data>();
  d->shape = std::move(shape);
  d->data = std::move(values);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

double Tensor::value() const {
  if (!is_scalar()) {
    throw std::logic_error("tensor: value() called on non-scalar of shape " +
                           shape_to_string(shape()));
  }
  return d_->data[0];
}

std::vector<double>& Tensor::grad() {
  if (d_->grad.empty()) throw std::logic_error("tensor: no gradient present on '" + d_->name + "'");
  return d_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (d_->grad.empty()) throw std::logic_error("tensor: no gradient present on '" + d_->name + "'");
  return d_->grad;
}

void Tensor::accumulate_grad(const std::vector<double>& g) {
  if (g.size() != d_->data.size()) throw std::logic_error("tensor: gradient size mismatch");
  if (d_->grad.empty()) d_->grad.assign(d_->data.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) d_->grad[i] += g[i];
}

void Tensor::accumulate_grad_at(std::size_t i, double g) {
  if (d_->grad.empty()) d_->grad.assign(d_->data.size(), 0.0);
  d_->grad[i] += g;
}

void Tensor::zero_grad() {
  if (!d_->grad.empty()) d_->grad.assign(d_->data.size(), 0.0);
}

void Tensor::drop_grad() { d_->grad.clear(); }

Tensor Tensor::clone() const {
  Tensor t = from_values(d_->shape, d_->data, d_->requires_grad);
  t.set_name(d_->name);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : d_->data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tape::record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward) {
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || !loss.is_scalar()) {
    throw std::logic_error("tape: backward() requires a scalar loss");
  }
  if (nodes_.empty()) throw std::logic_error("tape: backward() on empty tape");
  Tensor seed = loss;
  seed.accumulate_grad({1.0});
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
}

}  // namespace fedmcp
