#pragma once

#include <functional>
#include <string>
#include <vector>

#include "oddity/tape.hpp"
#include "oddity/tensor.hpp"

namespace oddity {

/// Per-parameter-block result of a finite-difference comparison.
template <typename T>
struct GradCheckReport {
  struct Entry {
    std::string name;
    T max_rel_err = 0;
    int64_t checked = 0;
  };
  std::vector<Entry> entries;

  T worst() const {
    T w = 0;
    for (const auto& e : entries) w = std::max(w, e.max_rel_err);
    return w;
  }
  bool passed(T tol) const { return worst() < tol; }
  std::string summary() const;
};

/// Compares reverse-mode gradients against central finite differences.
///
/// `build_loss` must rebuild the forward pass from scratch on the given tape
/// (or without one, when called with nullptr for the numeric evaluations)
/// and return a scalar loss. It must be pure given fixed parameter values:
/// any dropout inside must draw from an RngStream reseeded identically on
/// every call so the masks stay frozen during the check.
///
/// The relative error per element is |a - n| / max(1, |a|, |n|), so tiny
/// gradients are compared absolutely.
template <typename T>
GradCheckReport<T> gradient_check(
    const std::function<Tensor<T>(Tape<T>*)>& build_loss,
    const ParamList<T>& params, T step = T(1e-5));

extern template struct GradCheckReport<float>;
extern template struct GradCheckReport<double>;
extern template GradCheckReport<float> gradient_check(
    const std::function<Tensor<float>(Tape<float>*)>&, const ParamList<float>&,
    float);
extern template GradCheckReport<double> gradient_check(
    const std::function<Tensor<double>(Tape<double>*)>&,
    const ParamList<double>&, double);

}  // namespace oddity
