#include "oddity/adam.hpp"

#include <cmath>

namespace oddity {

template <typename T>
void Adam<T>::step(const ParamList<T>& params) {
  ++t_;
  const T lr = static_cast<T>(config_.lr);
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T eps = static_cast<T>(config_.eps);
  const T c1 = T(1) - static_cast<T>(std::pow(config_.beta1,
                                              static_cast<double>(t_)));
  const T c2 = T(1) - static_cast<T>(std::pow(config_.beta2,
                                              static_cast<double>(t_)));
  for (const auto& p : params) {
    Tensor<T>& w = *p.tensor;
    auto& slot = slots_[p.name];
    const size_t n = static_cast<size_t>(w.size());
    if (slot.m.size() != n) {
      slot.m.assign(n, T(0));
      slot.v.assign(n, T(0));
    }
    const bool has_grad = w.has_grad();
    const T* g = has_grad ? w.grad() : nullptr;
    T* data = w.data();
    for (size_t i = 0; i < n; ++i) {
      const T gi = has_grad ? g[i] : T(0);
      slot.m[i] = b1 * slot.m[i] + (T(1) - b1) * gi;
      slot.v[i] = b2 * slot.v[i] + (T(1) - b2) * gi * gi;
      const T mhat = slot.m[i] / c1;
      const T vhat = slot.v[i] / c2;
      data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace oddity
