#pragma once

#include <vector>

#include "oddity/rng.hpp"
#include "oddity/tape.hpp"
#include "oddity/tensor.hpp"

namespace oddity {

/// Elementwise activations. `step` is the Heaviside convention
/// step(z) = 1 iff z > 0; its backward pass uses a surrogate
/// pseudo-derivative (see SurrogateSpec).
enum class Act { identity, relu, sigmoid, tanh, step };

/// Pseudo-derivative substituted for the step function's zero-almost-
/// everywhere derivative. The triangular kind evaluates to
/// max(0, 1 - |z| / width) / 1 at pre-activation z, so gradients flow only
/// within `width` of the firing threshold.
struct SurrogateSpec {
  enum class Kind { triangular };
  Kind kind = Kind::triangular;
  double width = 1.0;
};

// ---- elementwise and linear algebra -------------------------------------

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
/// y = scale * x + shift, elementwise with scalar constants.
template <typename T>
Tensor<T> affine(Tape<T>* tape, const Tensor<T>& x, T scale, T shift);

/// Row-major matrix product: a[M,K] x b[K,N] -> [M,N].
template <typename T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

/// x[R,C] + bias[C], broadcast over rows.
template <typename T>
Tensor<T> add_row_bias(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& b);

/// Affine map x[B,Din] * w[Din,Dout] + bias[Dout].
template <typename T>
Tensor<T> dense(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                const Tensor<T>& b);

template <typename T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape shape);

/// [R,Ca] ++ [R,Cb] -> [R,Ca+Cb] along columns.
template <typename T>
Tensor<T> concat_cols(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> slice_cols(Tape<T>* tape, const Tensor<T>& x, int start, int len);

/// out[i,:] = x[idx[i],:]; backward scatter-adds into the source rows.
template <typename T>
Tensor<T> gather_rows(Tape<T>* tape, const Tensor<T>& x,
                      const std::vector<int>& idx);

/// Sums each consecutive block of `group` rows: [G*group,C] -> [G,C].
/// Within a block the rows are accumulated in an order determined by their
/// content (lexicographic), so the result is exactly invariant under any
/// permutation of the block members — the aggregation is a true set
/// operation, testable at tolerance zero.
template <typename T>
Tensor<T> group_sum_rows(Tape<T>* tape, const Tensor<T>& x, int group);

template <typename T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& x);

template <typename T>
Tensor<T> activation(Tape<T>* tape, const Tensor<T>& x, Act kind,
                     const SurrogateSpec& surrogate = {});

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  return activation(tape, x, Act::relu);
}
template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x) {
  return activation(tape, x, Act::sigmoid);
}

// ---- neural-network layers ----------------------------------------------

/// Valid (no padding) stride-1 convolution.
/// x[B,H,W,Cin] * k[kh,kw,Cin,Cout] + bias[Cout] -> [B,H-kh+1,W-kw+1,Cout].
template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& k,
                 const Tensor<T>& bias);

/// Per-channel batch normalization over [B,H,W,C].
/// Training mode normalizes by batch statistics and folds them into the
/// moving averages (in place; the buffers never participate in the tape);
/// inference mode uses the moving averages.
template <typename T>
Tensor<T> batchnorm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, Tensor<T>& moving_mean,
                    Tensor<T>& moving_var, bool training, T momentum, T eps);

/// 2x2 max pooling, stride 2, zero padding at the borders: output spatial
/// dims are ceil(dim/2) and a window reaching past the edge includes an
/// implicit 0. Backward routes the gradient to the argmax position (none
/// when the zero pad won).
template <typename T>
Tensor<T> maxpool2x2(Tape<T>* tape, const Tensor<T>& x);

/// Inverted dropout: training zeroes each element with probability `rate`
/// and scales survivors by 1/(1-rate); inference (or rate 0) returns the
/// input unchanged.
template <typename T>
Tensor<T> dropout(Tape<T>* tape, const Tensor<T>& x, double rate,
                  bool training, RngStream* rng);

// ---- losses ---------------------------------------------------------------

/// Mean of -log softmax(scores_row)[label] over the batch; numerically
/// stable fused formulation. labels[i] must lie in [0, C).
template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>* tape, const Tensor<T>& scores,
                                const std::vector<int>& labels);

/// Inference softmax over each row, computed with a content-ordered
/// denominator so probabilities permute exactly with the scores. No tape.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& scores);

/// Binary cross-entropy over beliefs[B,S] vs targets[B,S] in {0,1}, with a
/// shared step mask[S] in {0,1}: per row sum(mask*bce)/sum(mask), then the
/// mean over rows. Probabilities are clamped to [1e-7, 1-1e-7] before the
/// log. An all-zero mask is an error (undefined mean).
template <typename T>
Tensor<T> masked_binary_cross_entropy(Tape<T>* tape, const Tensor<T>& beliefs,
                                      const Tensor<T>& targets,
                                      const Tensor<T>& mask);

/// Argmax with lowest-index tie break.
template <typename T>
int argmax_row(const T* row, int n);

#define ODDITY_EXTERN_OPS(T)                                                   \
  extern template Tensor<T> add(Tape<T>*, const Tensor<T>&, const Tensor<T>&); \
  extern template Tensor<T> sub(Tape<T>*, const Tensor<T>&, const Tensor<T>&); \
  extern template Tensor<T> mul(Tape<T>*, const Tensor<T>&, const Tensor<T>&); \
  extern template Tensor<T> affine(Tape<T>*, const Tensor<T>&, T, T);          \
  extern template Tensor<T> matmul(Tape<T>*, const Tensor<T>&,                 \
                                   const Tensor<T>&);                          \
  extern template Tensor<T> add_row_bias(Tape<T>*, const Tensor<T>&,           \
                                         const Tensor<T>&);                    \
  extern template Tensor<T> dense(Tape<T>*, const Tensor<T>&,                  \
                                  const Tensor<T>&, const Tensor<T>&);         \
  extern template Tensor<T> reshape(Tape<T>*, const Tensor<T>&, Shape);        \
  extern template Tensor<T> concat_cols(Tape<T>*, const Tensor<T>&,            \
                                        const Tensor<T>&);                     \
  extern template Tensor<T> slice_cols(Tape<T>*, const Tensor<T>&, int, int);  \
  extern template Tensor<T> gather_rows(Tape<T>*, const Tensor<T>&,            \
                                        const std::vector<int>&);              \
  extern template Tensor<T> group_sum_rows(Tape<T>*, const Tensor<T>&, int);   \
  extern template Tensor<T> sum_all(Tape<T>*, const Tensor<T>&);               \
  extern template Tensor<T> activation(Tape<T>*, const Tensor<T>&, Act,        \
                                       const SurrogateSpec&);                  \
  extern template Tensor<T> conv2d(Tape<T>*, const Tensor<T>&,                 \
                                   const Tensor<T>&, const Tensor<T>&);        \
  extern template Tensor<T> batchnorm(Tape<T>*, const Tensor<T>&,              \
                                      const Tensor<T>&, const Tensor<T>&,      \
                                      Tensor<T>&, Tensor<T>&, bool, T, T);     \
  extern template Tensor<T> maxpool2x2(Tape<T>*, const Tensor<T>&);            \
  extern template Tensor<T> dropout(Tape<T>*, const Tensor<T>&, double, bool,  \
                                    RngStream*);                               \
  extern template Tensor<T> softmax_cross_entropy(Tape<T>*, const Tensor<T>&,  \
                                                  const std::vector<int>&);    \
  extern template Tensor<T> softmax_rows(const Tensor<T>&);                    \
  extern template Tensor<T> masked_binary_cross_entropy(                       \
      Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);         \
  extern template int argmax_row(const T*, int);

ODDITY_EXTERN_OPS(float)
ODDITY_EXTERN_OPS(double)
#undef ODDITY_EXTERN_OPS

}  // namespace oddity
