#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace accnn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

/// Dense row-major tensor handle. Copies alias the same storage, so an op's
/// backward closure can capture its operands cheaply. Gradient buffers are
/// allocated eagerly for requires_grad tensors and accumulate until
/// zero_grad().
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : s_(std::make_shared<Storage>()) {
    for (std::size_t e : shape) {
      if (e == 0) throw std::invalid_argument("Tensor: zero extent in shape " + shape_str(shape));
    }
    s_->shape = std::move(shape);
    const std::size_t n = shape_numel(s_->shape);
    s_->values.assign(n, T(0));
    s_->requires_grad = requires_grad;
    if (requires_grad) s_->grad.assign(n, T(0));
  }

  static Tensor from(Shape shape, std::vector<T> vals, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    if (vals.size() != t.numel()) {
      throw std::invalid_argument("Tensor::from: " + std::to_string(vals.size()) +
                                  " values for shape " + shape_str(t.shape()));
    }
    std::copy(vals.begin(), vals.end(), t.values().begin());
    return t;
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), value);
    return t;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return full({1}, value, requires_grad);
  }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t numel() const { return s_->values.size(); }
  bool is_scalar() const { return numel() == 1; }
  bool requires_grad() const { return s_->requires_grad; }

  std::span<T> values() { return {s_->values.data(), s_->values.size()}; }
  std::span<const T> values() const { return {s_->values.data(), s_->values.size()}; }

  std::span<T> grad() {
    ensure_grad();
    return {s_->grad.data(), s_->grad.size()};
  }
  std::span<const T> grad() const {
    ensure_grad();
    return {s_->grad.data(), s_->grad.size()};
  }

  void zero_grad() {
    if (s_->requires_grad) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
  }

  /// Stable identity of the underlying storage; two handles alias iff equal.
  const void* id() const { return s_.get(); }

  T& operator[](std::size_t i) { return s_->values[i]; }
  const T& operator[](std::size_t i) const { return s_->values[i]; }

  /// Flat index for a rank-3 (H, W, C) tensor.
  std::size_t at3(std::size_t h, std::size_t w, std::size_t c) const {
    return (h * s_->shape[1] + w) * s_->shape[2] + c;
  }

  bool all_finite() const {
    for (T v : s_->values) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // same length as values when requires_grad
    bool requires_grad = false;
  };

  void ensure_grad() const {
    if (!s_->requires_grad) {
      throw std::logic_error("Tensor: grad requested on tensor without requires_grad");
    }
  }

  std::shared_ptr<Storage> s_;
};

/// Records one backward closure per forward operation, in creation order.
/// backward() seeds the scalar loss with 1 and replays the closures in
/// reverse creation order, which is a valid reverse-topological order of the
/// compute graph with the creation index as tie-break.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  void record(std::function<void()> backward_fn) {
    if (recording_) nodes_.push_back(std::move(backward_fn));
  }

  std::size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  void backward(Tensor<T>& loss) {
    if (consumed_) throw std::logic_error("Tape::backward: graph already consumed");
    if (!loss.is_scalar()) {
      throw std::invalid_argument("Tape::backward: loss must be scalar, got shape " +
                                  shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
      throw std::invalid_argument("Tape::backward: loss does not require grad");
    }
    consumed_ = true;
    loss.grad()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool recording_ = true;
  bool consumed_ = false;
};

}  // namespace accnn
