#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "capgen/errors.hpp"

namespace capgen {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

namespace detail {

struct Storage {
  std::vector<double> data;
  std::vector<double> grad;  // empty until touched by backward
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Row-major n-d array of doubles. The value (storage) is shared on copy;
// reshape produces a view over the same storage. Data is treated as
// immutable once an op has consumed it; parameters are the one exception
// (the optimizer writes in place between steps).
class Tensor {
 public:
  Tensor() : st_(std::make_shared<detail::Storage>()) {}

  explicit Tensor(Shape shape) : st_(std::make_shared<detail::Storage>()), shape_(std::move(shape)) {
    st_->data.assign(shape_numel(shape_), 0.0);
  }

  Tensor(Shape shape, std::vector<double> values)
      : st_(std::make_shared<detail::Storage>()), shape_(std::move(shape)) {
    if (values.size() != shape_numel(shape_)) {
      throw ShapeError("tensor init: " + std::to_string(values.size()) + " values for shape " +
                       shape_str(shape_));
    }
    st_->data = std::move(values);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.st_->data) x = v;
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return st_->data.size(); }

  double* data() { return st_->data.data(); }
  const double* data() const { return st_->data.data(); }
  std::vector<double>& vec() { return st_->data; }
  const std::vector<double>& vec() const { return st_->data; }

  double item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape_));
    return st_->data[0];
  }

  bool requires_grad() const { return st_->requires_grad; }
  Tensor& set_requires_grad(bool v = true) {
    st_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !st_->grad.empty(); }
  const std::vector<double>& grad() const { return st_->grad; }
  std::vector<double>& grad_buf() {
    st_->ensure_grad();
    return st_->grad;
  }
  void zero_grad() { st_->grad.clear(); }

  // View with a different shape over the same storage (and gradient).
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != size()) {
      throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
    }
    Tensor t;
    t.st_ = st_;
    t.shape_ = std::move(shape);
    return t;
  }

  std::shared_ptr<detail::Storage> storage() const { return st_; }

 private:
  std::shared_ptr<detail::Storage> st_;
  Shape shape_;
};

// Ordered record of the backward closures of every differentiable op, in
// execution order. backward() replays them once, in reverse, then clears.
class Tape {
 public:
  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

  std::size_t size() const { return ops_.size(); }

  void backward(Tensor& loss) {
    if (loss.size() != 1) {
      throw ContractError("backward root must be scalar, got " + shape_str(loss.shape()));
    }
    loss.grad_buf()[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

  void clear() { ops_.clear(); }

  static Tape*& current() {
    thread_local Tape* cur = nullptr;
    return cur;
  }

 private:
  std::vector<std::function<void()>> ops_;
};

// RAII activation of a tape for the enclosed forward pass.
class TapeScope {
 public:
  explicit TapeScope(Tape& t) : prev_(Tape::current()) { Tape::current() = &t; }
  ~TapeScope() { Tape::current() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

}  // namespace capgen
