#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace fedmcp {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense n-dimensional tensor of 64-bit floats, row-major flat storage.
///
/// Tensor is a shared handle: copying a Tensor aliases the same storage,
/// which is what lets tape nodes refer to the values they must update during
/// the backward sweep. The gradient buffer is allocated lazily on first
/// accumulation; tensors with requires_grad == false never acquire one.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(d_); }

  const Shape& shape() const { return d_->shape; }
  std::size_t rank() const { return d_->shape.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape[i]; }
  std::size_t numel() const { return d_->data.size(); }
  bool is_scalar() const { return d_->data.size() == 1; }

  std::vector<double>& values() { return d_->data; }
  const std::vector<double>& values() const { return d_->data; }

  double& at(std::size_t i) { return d_->data[i]; }
  double at(std::size_t i) const { return d_->data[i]; }
  // 2D accessors (row-major).
  double& at(std::size_t r, std::size_t c) { return d_->data[r * d_->shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return d_->data[r * d_->shape[1] + c]; }
  double value() const;  // scalar tensors only

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool v) { d_->requires_grad = v; }

  bool has_grad() const { return !d_->grad.empty(); }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  /// Adds g into the gradient buffer, allocating zeros on first touch.
  void accumulate_grad(const std::vector<double>& g);
  void accumulate_grad_at(std::size_t i, double g);
  void zero_grad();
  void drop_grad();

  const std::string& name() const { return d_->name; }
  void set_name(std::string name) { d_->name = std::move(name); }

  /// Deep copy of values (grad not copied).
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

  bool all_finite() const;

 private:
  struct Data {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::string name;
  };
  explicit Tensor(std::shared_ptr<Data> d) : d_(std::move(d)) {}
  std::shared_ptr<Data> d_;
};

/// Wengert list for reverse-mode differentiation.
///
/// Operations append nodes in execution order, so the list is topologically
/// sorted by construction; backward() replays it exactly once in reverse.
/// A node whose output never received a gradient is off every path to the
/// loss and is skipped.
class Tape {
 public:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  void record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward);

  /// Seeds d(loss)/d(loss) = 1 and runs the reverse sweep. Requires a scalar.
  void backward(const Tensor& loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

 private:
  std::vector<Node> nodes_;
};

}  // namespace fedmcp
