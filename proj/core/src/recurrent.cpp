#include "oddity/recurrent.hpp"

#include "oddity/init.hpp"

namespace oddity {

const char* recurrent_kind_name(RecurrentKind k) {
  switch (k) {
    case RecurrentKind::snn: return "snn";
    case RecurrentKind::ssnu: return "ssnu";
    case RecurrentKind::ssnu_r: return "ssnu_r";
    case RecurrentKind::lstm: return "lstm";
  }
  return "?";
}

RecurrentKind recurrent_kind_from_name(const std::string& name) {
  if (name == "snn") return RecurrentKind::snn;
  if (name == "ssnu") return RecurrentKind::ssnu;
  if (name == "ssnu_r" || name == "ssnu-r") return RecurrentKind::ssnu_r;
  if (name == "lstm") return RecurrentKind::lstm;
  throw ValueError("unknown recurrent kind '" + name + "'");
}

// ---- SNU -------------------------------------------------------------------

template <typename T>
SNULayer<T>::SNULayer(int input_dim, int units, bool with_recurrence,
                      Act output_act, RngStream& init_rng, T leak, T bias_init,
                      SurrogateSpec surrogate)
    : input_dim_(input_dim),
      units_(units),
      leak_(leak),
      output_act_(output_act),
      surrogate_(surrogate) {
  if (leak < T(0) || leak > T(1))
    throw ValueError("SNULayer: leak must lie in [0,1]");
  if (output_act != Act::step && output_act != Act::sigmoid)
    throw ValueError("SNULayer: output activation must be step or sigmoid");
  w_ = glorot_uniform<T>({input_dim, units}, input_dim, units, init_rng);
  if (with_recurrence)
    h_ = glorot_uniform<T>({units, units}, units, units, init_rng);
  b_ = Tensor<T>::full({units}, bias_init);
}

template <typename T>
RecurrentState<T> SNULayer<T>::initial_state(int batch) const {
  return {Tensor<T>::zeros({batch, units_}), Tensor<T>::zeros({batch, units_})};
}

template <typename T>
Tensor<T> SNULayer<T>::step(Tape<T>* tape, const Tensor<T>& x,
                            RecurrentState<T>& state) const {
  if (x.rank() != 2 || x.dim(1) != input_dim_)
    throw ShapeError("SNULayer: input " + shape_str(x.shape()) +
                     " vs expected [*," + std::to_string(input_dim_) + "]");
  Tensor<T> drive = matmul(tape, x, w_);
  if (h_.defined()) drive = add(tape, drive, matmul(tape, state.y, h_));
  // Carried potential: leak * s_{t-1} * (1 - y_{t-1}); a full spike resets
  // the accumulated state.
  Tensor<T> keep = affine(tape, state.y, T(-1), T(1));
  Tensor<T> carry = affine(tape, mul(tape, state.s, keep), leak_, T(0));
  Tensor<T> s_t = add(tape, drive, carry);
  Tensor<T> y_t =
      activation(tape, add_row_bias(tape, s_t, b_), output_act_, surrogate_);
  state.s = s_t;
  state.y = y_t;
  return y_t;
}

template <typename T>
void SNULayer<T>::visit_params(const std::string& prefix, ParamList<T>& out) {
  out.push_back({prefix + ".w", &w_});
  if (h_.defined()) out.push_back({prefix + ".h", &h_});
}

// ---- LSTM ------------------------------------------------------------------

template <typename T>
LSTMLayer<T>::LSTMLayer(int input_dim, int units, RngStream& init_rng)
    : input_dim_(input_dim), units_(units) {
  wx_ = glorot_uniform<T>({input_dim, 4 * units}, input_dim, units, init_rng);
  wh_ = glorot_uniform<T>({units, 4 * units}, units, units, init_rng);
  b_ = Tensor<T>::zeros({4 * units}, /*requires_grad=*/true);
  // Forget-gate bias +1 keeps early memory open.
  for (int i = units; i < 2 * units; ++i) b_.data()[i] = T(1);
}

template <typename T>
RecurrentState<T> LSTMLayer<T>::initial_state(int batch) const {
  return {Tensor<T>::zeros({batch, units_}), Tensor<T>::zeros({batch, units_})};
}

template <typename T>
Tensor<T> LSTMLayer<T>::step(Tape<T>* tape, const Tensor<T>& x,
                             RecurrentState<T>& state) const {
  if (x.rank() != 2 || x.dim(1) != input_dim_)
    throw ShapeError("LSTMLayer: input " + shape_str(x.shape()) +
                     " vs expected [*," + std::to_string(input_dim_) + "]");
  Tensor<T> gates = add_row_bias(
      tape, add(tape, matmul(tape, x, wx_), matmul(tape, state.y, wh_)), b_);
  Tensor<T> in_gate = sigmoid(tape, slice_cols(tape, gates, 0, units_));
  Tensor<T> forget = sigmoid(tape, slice_cols(tape, gates, units_, units_));
  Tensor<T> cand =
      activation(tape, slice_cols(tape, gates, 2 * units_, units_), Act::tanh);
  Tensor<T> out_gate =
      sigmoid(tape, slice_cols(tape, gates, 3 * units_, units_));
  Tensor<T> cell =
      add(tape, mul(tape, forget, state.s), mul(tape, in_gate, cand));
  Tensor<T> hidden = mul(tape, out_gate, activation(tape, cell, Act::tanh));
  state.s = cell;
  state.y = hidden;
  return hidden;
}

template <typename T>
void LSTMLayer<T>::visit_params(const std::string& prefix, ParamList<T>& out) {
  out.push_back({prefix + ".wx", &wx_});
  out.push_back({prefix + ".wh", &wh_});
  out.push_back({prefix + ".b", &b_});
}

template <typename T>
std::unique_ptr<RecurrentCell<T>> make_recurrent_cell(RecurrentKind kind,
                                                      int input_dim, int units,
                                                      RngStream& init_rng,
                                                      T leak) {
  switch (kind) {
    case RecurrentKind::snn:
      return std::make_unique<SNULayer<T>>(input_dim, units, false, Act::step,
                                           init_rng, leak);
    case RecurrentKind::ssnu:
      return std::make_unique<SNULayer<T>>(input_dim, units, false,
                                           Act::sigmoid, init_rng, leak);
    case RecurrentKind::ssnu_r:
      return std::make_unique<SNULayer<T>>(input_dim, units, true,
                                           Act::sigmoid, init_rng, leak);
    case RecurrentKind::lstm:
      return std::make_unique<LSTMLayer<T>>(input_dim, units, init_rng);
  }
  throw ValueError("make_recurrent_cell: bad kind");
}

template class SNULayer<float>;
template class SNULayer<double>;
template class LSTMLayer<float>;
template class LSTMLayer<double>;
template std::unique_ptr<RecurrentCell<float>> make_recurrent_cell(
    RecurrentKind, int, int, RngStream&, float);
template std::unique_ptr<RecurrentCell<double>> make_recurrent_cell(
    RecurrentKind, int, int, RngStream&, double);

}  // namespace oddity
