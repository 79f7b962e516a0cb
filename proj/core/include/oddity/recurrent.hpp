#pragma once

#include <memory>
#include <string>

#include "oddity/ops.hpp"
#include "oddity/rng.hpp"
#include "oddity/tape.hpp"
#include "oddity/tensor.hpp"

namespace oddity {

enum class RecurrentKind { snn, ssnu, ssnu_r, lstm };

const char* recurrent_kind_name(RecurrentKind k);
RecurrentKind recurrent_kind_from_name(const std::string& name);

/// Per-episode temporal state, batched [B,N]. For SNU cells `s` is the
/// membrane potential and `y` the previous output; for LSTM `s` is the cell
/// and `y` the hidden vector. reset() zeroes both.
template <typename T>
struct RecurrentState {
  Tensor<T> s;
  Tensor<T> y;
};

/// Common interface of the reasoning cells.
template <typename T>
class RecurrentCell {
 public:
  virtual ~RecurrentCell() = default;

  virtual RecurrentState<T> initial_state(int batch) const = 0;

  /// Advances one time step: consumes x_t [B,Din], replaces `state`, and
  /// returns y_t [B,N].
  virtual Tensor<T> step(Tape<T>* tape, const Tensor<T>& x,
                         RecurrentState<T>& state) const = 0;

  virtual int units() const = 0;
  virtual void visit_params(const std::string& prefix, ParamList<T>& out) = 0;
};

/// Spiking neural unit layer:
///   s_t = g(W x_t + H y_{t-1} + leak * s_{t-1} * (1 - y_{t-1}))
///   y_t = h(s_t + b)
/// with g = identity. The SNN variant uses the Heaviside step for h (with a
/// triangular surrogate gradient); the soft variants use the sigmoid. H is
/// present only for the "-R" variant. leak and b are fixed hyperparameters,
/// not trained; b initializes to -1.
template <typename T>
class SNULayer : public RecurrentCell<T> {
 public:
  SNULayer(int input_dim, int units, bool with_recurrence, Act output_act,
           RngStream& init_rng, T leak = T(0.8), T bias_init = T(-1),
           SurrogateSpec surrogate = {});

  RecurrentState<T> initial_state(int batch) const override;
  Tensor<T> step(Tape<T>* tape, const Tensor<T>& x,
                 RecurrentState<T>& state) const override;
  int units() const override { return units_; }
  void visit_params(const std::string& prefix, ParamList<T>& out) override;

  const Tensor<T>& input_weights() const { return w_; }
  Tensor<T>& input_weights() { return w_; }
  bool recurrent() const { return h_.defined(); }
  T leak() const { return leak_; }

 private:
  int input_dim_;
  int units_;
  Tensor<T> w_;  // [Din, N]
  Tensor<T> h_;  // [N, N] when recurrent
  Tensor<T> b_;  // [N], fixed
  T leak_;
  Act output_act_;
  SurrogateSpec surrogate_;
};

/// Standard LSTM cell with fused gate weights (order i, f, g, o) and
/// forget-gate bias initialized to +1.
template <typename T>
class LSTMLayer : public RecurrentCell<T> {
 public:
  LSTMLayer(int input_dim, int units, RngStream& init_rng);

  RecurrentState<T> initial_state(int batch) const override;
  Tensor<T> step(Tape<T>* tape, const Tensor<T>& x,
                 RecurrentState<T>& state) const override;
  int units() const override { return units_; }
  void visit_params(const std::string& prefix, ParamList<T>& out) override;

 private:
  int input_dim_;
  int units_;
  Tensor<T> wx_;  // [Din, 4N]
  Tensor<T> wh_;  // [N, 4N]
  Tensor<T> b_;   // [4N]
};

/// Factory for the reasoning-layer variants.
template <typename T>
std::unique_ptr<RecurrentCell<T>> make_recurrent_cell(RecurrentKind kind,
                                                      int input_dim, int units,
                                                      RngStream& init_rng,
                                                      T leak = T(0.8));

extern template class SNULayer<float>;
extern template class SNULayer<double>;
extern template class LSTMLayer<float>;
extern template class LSTMLayer<double>;
extern template std::unique_ptr<RecurrentCell<float>> make_recurrent_cell(
    RecurrentKind, int, int, RngStream&, float);
extern template std::unique_ptr<RecurrentCell<double>> make_recurrent_cell(
    RecurrentKind, int, int, RngStream&, double);

}  // namespace oddity
