#include "oddity/tensor.hpp"

#include <cmath>
#include <sstream>

namespace oddity {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ShapeError("shape dimensions must be positive, got " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.p_ = std::make_shared<Payload>();
  int64_t n = shape_numel(shape);
  t.p_->shape = std::move(shape);
  t.p_->data.assign(static_cast<size_t>(n), T(0));
  t.p_->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor t = zeros(std::move(shape));
  for (auto& v : t.p_->data) v = value;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values,
                          bool requires_grad) {
  int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(values.size()))
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  Tensor t;
  t.p_ = std::make_shared<Payload>();
  t.p_->shape = std::move(shape);
  t.p_->data = std::move(values);
  t.p_->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return from({1}, {value});
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor t;
  t.p_ = std::make_shared<Payload>();
  t.p_->shape = p_->shape;
  t.p_->data = p_->data;
  t.p_->requires_grad = p_->requires_grad;
  return t;
}

template <typename T>
void Tensor<T>::check_finite(const char* what) const {
  for (const T& v : p_->data)
    if (!std::isfinite(static_cast<double>(v)))
      throw ValueError(std::string(what) + ": non-finite value in tensor");
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace oddity
