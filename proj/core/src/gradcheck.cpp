#include "oddity/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace oddity {

template <typename T>
std::string GradCheckReport<T>::summary() const {
  std::ostringstream os;
  for (const auto& e : entries)
    os << e.name << ": max rel err " << e.max_rel_err << " over " << e.checked
       << " elements\n";
  return os.str();
}

template <typename T>
GradCheckReport<T> gradient_check(
    const std::function<Tensor<T>(Tape<T>*)>& build_loss,
    const ParamList<T>& params, T step) {
  // Analytic pass.
  for (const auto& p : params) p.tensor->zero_grad();
  Tape<T> tape;
  Tensor<T> loss = build_loss(&tape);
  tape.backward(loss);

  std::vector<std::vector<T>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    Tensor<T>& w = *p.tensor;
    std::vector<T> g(static_cast<size_t>(w.size()), T(0));
    if (w.has_grad())
      for (size_t i = 0; i < g.size(); ++i) g[i] = w.grad()[i];
    analytic.push_back(std::move(g));
  }

  GradCheckReport<T> report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T>& w = *params[pi].tensor;
    typename GradCheckReport<T>::Entry entry;
    entry.name = params[pi].name;
    entry.checked = w.size();
    for (int64_t i = 0; i < w.size(); ++i) {
      const T saved = w.data()[i];
      w.data()[i] = saved + step;
      const T up = build_loss(nullptr).data()[0];
      w.data()[i] = saved - step;
      const T down = build_loss(nullptr).data()[0];
      w.data()[i] = saved;
      const T numeric = (up - down) / (T(2) * step);
      const T a = analytic[pi][static_cast<size_t>(i)];
      const T denom = std::max(T(1), std::max(std::abs(a), std::abs(numeric)));
      entry.max_rel_err =
          std::max(entry.max_rel_err, std::abs(a - numeric) / denom);
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

template struct GradCheckReport<float>;
template struct GradCheckReport<double>;
template GradCheckReport<float> gradient_check(
    const std::function<Tensor<float>(Tape<float>*)>&, const ParamList<float>&,
    float);
template GradCheckReport<double> gradient_check(
    const std::function<Tensor<double>(Tape<double>*)>&,
    const ParamList<double>&, double);

}  // namespace oddity
