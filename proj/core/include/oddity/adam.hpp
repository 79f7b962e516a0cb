#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "oddity/tensor.hpp"

namespace oddity {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moment slots are keyed by parameter name so the
/// optimizer state can round-trip through checkpoints.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// One update: reads each parameter's accumulated gradient (missing
  /// buffers count as zero) and applies the update in place.
  void step(const ParamList<T>& params);

  void zero_grad(const ParamList<T>& params) {
    for (const auto& p : params) p.tensor->zero_grad();
  }

  int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }

  struct Slot {
    std::vector<T> m, v;
  };
  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  AdamConfig config_;
  std::map<std::string, Slot> slots_;
  int64_t t_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace oddity
