#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "oddity/error.hpp"

namespace oddity {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Dense row-major tensor with an optional gradient buffer.
///
/// Value type with a shared payload: copies are cheap handles onto the same
/// storage. Data written by an operation is treated as immutable afterwards;
/// only leaf parameters are updated in place (by the optimizer, after the
/// tape that read them has been consumed). The gradient buffer has the same
/// shape as the data and is allocated lazily on first accumulation.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value);
  static Tensor from(Shape shape, std::vector<T> values,
                     bool requires_grad = false);
  static Tensor scalar(T value);

  bool defined() const { return p_ != nullptr; }
  const Shape& shape() const { return p_->shape; }
  int rank() const { return static_cast<int>(p_->shape.size()); }
  int dim(int i) const { return p_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(p_->data.size()); }

  T* data() { return p_->data.data(); }
  const T* data() const { return p_->data.data(); }
  std::vector<T>& vec() { return p_->data; }
  const std::vector<T>& vec() const { return p_->data; }

  /// Multi-index access, row-major. Bounds are not checked.
  template <typename... Ix>
  T& at(Ix... ix) {
    return p_->data[offset(ix...)];
  }
  template <typename... Ix>
  const T& at(Ix... ix) const {
    return p_->data[offset(ix...)];
  }

  bool requires_grad() const { return p_->requires_grad; }
  void set_requires_grad(bool v) { p_->requires_grad = v; }

  /// True once this tensor was produced by an operation recorded on a tape.
  bool on_tape() const { return p_->on_tape; }
  void mark_on_tape() { p_->on_tape = true; }

  /// Whether gradients must flow through this tensor.
  bool needs_grad() const { return p_->requires_grad || p_->on_tape; }

  bool has_grad() const { return !p_->grad.empty(); }
  /// Gradient buffer, allocated to zeros on first use.
  T* grad() {
    if (p_->grad.empty()) p_->grad.assign(p_->data.size(), T(0));
    return p_->grad.data();
  }
  const T* grad() const { return p_->grad.data(); }
  const std::vector<T>& grad_vec() const { return p_->grad; }

  void zero_grad() {
    if (!p_->grad.empty()) p_->grad.assign(p_->data.size(), T(0));
  }
  void drop_grad() {
    p_->grad.clear();
    p_->grad.shrink_to_fit();
  }

  /// Deep copy of data (grad is not copied).
  Tensor clone() const;

  /// True when the payloads are the same object.
  bool same_storage(const Tensor& other) const { return p_ == other.p_; }

  /// Throws ValueError if any stored value is NaN or infinite.
  void check_finite(const char* what) const;

 private:
  struct Payload {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    bool on_tape = false;
  };

  template <typename... Ix>
  int64_t offset(Ix... ix) const {
    const Shape& s = p_->shape;
    int64_t off = 0;
    size_t d = 0;
    ((off = off * s[d++] + static_cast<int64_t>(ix)), ...);
    return off;
  }

  std::shared_ptr<Payload> p_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Named view of a model parameter (or state buffer) for optimizers,
/// checkpoints and gradient checks.
template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
using ParamList = std::vector<NamedTensor<T>>;

template <typename T>
int64_t total_param_count(const ParamList<T>& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p.tensor->size();
  return n;
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace oddity
