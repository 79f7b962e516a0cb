#include "oddity/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "gemm.hpp"

namespace oddity {

namespace {

template <typename T>
void require_rank(const Tensor<T>& t, int rank, const char* op,
                  const char* arg) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": " + arg + " must have rank " +
                     std::to_string(rank) + ", got " + shape_str(t.shape()));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
T stable_sigmoid(T z) {
  if (z >= T(0)) {
    T e = std::exp(-z);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(z);
  return e / (T(1) + e);
}

/// Fills the im2col buffer for one image.
/// col has one row per output position (oy,ox), laid out (ky,kx,ci).
template <typename T>
void im2col(const T* img, int h, int w, int ci, int kh, int kw, T* col) {
  const int ho = h - kh + 1;
  const int wo = w - kw + 1;
  const int run = kw * ci;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      T* row = col + (static_cast<int64_t>(oy) * wo + ox) * kh * run;
      for (int ky = 0; ky < kh; ++ky) {
        const T* src = img + (static_cast<int64_t>(oy + ky) * w + ox) * ci;
        std::memcpy(row + ky * run, src, sizeof(T) * static_cast<size_t>(run));
      }
    }
  }
}

/// Scatter-add inverse of im2col.
template <typename T>
void col2im_add(const T* col, int h, int w, int ci, int kh, int kw, T* img) {
  const int ho = h - kh + 1;
  const int wo = w - kw + 1;
  const int run = kw * ci;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const T* row = col + (static_cast<int64_t>(oy) * wo + ox) * kh * run;
      for (int ky = 0; ky < kh; ++ky) {
        T* dst = img + (static_cast<int64_t>(oy + ky) * w + ox) * ci;
        const T* src = row + ky * run;
        for (int i = 0; i < run; ++i) dst[i] += src[i];
      }
    }
  }
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0, n = a.size(); i < n; ++i) po[i] = pa[i] + pb[i];
  if (tape && (a.needs_grad() || b.needs_grad())) {
    Tensor<T> ac = a, bc = b, oc = out;
    tape->record(
        [ac, bc, oc]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          int64_t n = oc.size();
          if (ac.needs_grad()) {
            T* ga = ac.grad();
            for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
          }
          if (bc.needs_grad()) {
            T* gb = bc.grad();
            for (int64_t i = 0; i < n; ++i) gb[i] += g[i];
          }
        },
        {out});
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0, n = a.size(); i < n; ++i) po[i] = pa[i] - pb[i];
  if (tape && (a.needs_grad() || b.needs_grad())) {
    Tensor<T> ac = a, bc = b, oc = out;
    tape->record(
        [ac, bc, oc]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          int64_t n = oc.size();
          if (ac.needs_grad()) {
            T* ga = ac.grad();
            for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
          }
          if (bc.needs_grad()) {
            T* gb = bc.grad();
            for (int64_t i = 0; i < n; ++i) gb[i] -= g[i];
          }
        },
        {out});
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0, n = a.size(); i < n; ++i) po[i] = pa[i] * pb[i];
  if (tape && (a.needs_grad() || b.needs_grad())) {
    Tensor<T> ac = a, bc = b, oc = out;
    tape->record(
        [ac, bc, oc]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          int64_t n = oc.size();
          if (ac.needs_grad()) {
            T* ga = ac.grad();
            const T* pb2 = bc.data();
            for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * pb2[i];
          }
          if (bc.needs_grad()) {
            T* gb = bc.grad();
            const T* pa2 = ac.data();
            for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * pa2[i];
          }
        },
        {out});
  }
  return out;
}

template <typename T>
Tensor<T> affine(Tape<T>* tape, const Tensor<T>& x, T scale, T shift) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0, n = x.size(); i < n; ++i) po[i] = scale * px[i] + shift;
  if (tape && x.needs_grad()) {
    Tensor<T> xc = x, oc = out;
    tape->record(
        [xc, oc, scale]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          T* gx = xc.grad();
          for (int64_t i = 0, n = oc.size(); i < n; ++i)
            gx[i] += g[i] * scale;
        },
        {out});
  }
  return out;
}

// ---- linear algebra ---------------------------------------------------------

template <typename T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul", "lhs");
  require_rank(b, 2, "matmul", "rhs");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner axes disagree, lhs cols " +
                     std::to_string(k) + " vs rhs rows " +
                     std::to_string(b.dim(0)));
  Tensor<T> out = Tensor<T>::zeros({m, n});
  detail::gemm(a.data(), b.data(), out.data(), m, k, n);
  if (tape && (a.needs_grad() || b.needs_grad())) {
    Tensor<T> ac = a, bc = b, oc = out;
    tape->record(
        [ac, bc, oc, m, k, n]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          if (ac.needs_grad())
            detail::gemm_tb(g, bc.data(), ac.grad(), m, n, k, true);
          if (bc.needs_grad())
            detail::gemm_ta(ac.data(), g, bc.grad(), k, m, n, true);
        },
        {out});
  }
  return out;
}

template <typename T>
Tensor<T> add_row_bias(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& b) {
  require_rank(x, 2, "add_row_bias", "input");
  require_rank(b, 1, "add_row_bias", "bias");
  const int rows = x.dim(0), cols = x.dim(1);
  if (b.dim(0) != cols)
    throw ShapeError("add_row_bias: bias length " + std::to_string(b.dim(0)) +
                     " vs input cols " + std::to_string(cols));
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      po[static_cast<int64_t>(r) * cols + c] =
          px[static_cast<int64_t>(r) * cols + c] + pb[c];
  if (tape && (x.needs_grad() || b.needs_grad())) {
    Tensor<T> xc = x, bc = b, oc = out;
    tape->record(
        [xc, bc, oc, rows, cols]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          if (xc.needs_grad()) {
            T* gx = xc.grad();
            for (int64_t i = 0, n = oc.size(); i < n; ++i) gx[i] += g[i];
          }
          if (bc.needs_grad()) {
            T* gb = bc.grad();
            for (int r = 0; r < rows; ++r)
              for (int c = 0; c < cols; ++c)
                gb[c] += g[static_cast<int64_t>(r) * cols + c];
          }
        },
        {out});
  }
  return out;
}

template <typename T>
Tensor<T> dense(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                const Tensor<T>& b) {
  return add_row_bias(tape, matmul(tape, x, w), b);
}

template <typename T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " +
                     shape_str(shape) + " changes element count");
  Tensor<T> out = Tensor<T>::from(std::move(shape), x.vec());
  if (tape && x.needs_grad()) {
    Tensor<T> xc = x, oc = out;
    tape->record(
        [xc, oc]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          T* gx = xc.grad();
          for (int64_t i = 0, n = oc.size(); i < n; ++i) gx[i] += g[i];
        },
        {out});
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "concat_cols", "lhs");
  require_rank(b, 2, "concat_cols", "rhs");
  if (a.dim(0) != b.dim(0))
    throw ShapeError("concat_cols: row counts differ, " +
                     std::to_string(a.dim(0)) + " vs " +
                     std::to_string(b.dim(0)));
  const int rows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  Tensor<T> out = Tensor<T>::zeros({rows, ca + cb});
  for (int r = 0; r < rows; ++r) {
    std::memcpy(out.data() + static_cast<int64_t>(r) * (ca + cb),
                a.data() + static_cast<int64_t>(r) * ca,
                sizeof(T) * static_cast<size_t>(ca));
    std::memcpy(out.data() + static_cast<int64_t>(r) * (ca + cb) + ca,
                b.data() + static_cast<int64_t>(r) * cb,
                sizeof(T) * static_cast<size_t>(cb));
  }
  if (tape && (a.needs_grad() || b.needs_grad())) {
    Tensor<T> ac = a, bc = b, oc = out;
    tape->record(
        [ac, bc, oc, rows, ca, cb]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          if (ac.needs_grad()) {
            T* ga = ac.grad();
            for (int r = 0; r < rows; ++r)
              for (int c = 0; c < ca; ++c)
                ga[static_cast<int64_t>(r) * ca + c] +=
                    g[static_cast<int64_t>(r) * (ca + cb) + c];
          }
          if (bc.needs_grad()) {
            T* gb = bc.grad();
            for (int r = 0; r < rows; ++r)
              for (int c = 0; c < cb; ++c)
                gb[static_cast<int64_t>(r) * cb + c] +=
                    g[static_cast<int64_t>(r) * (ca + cb) + ca + c];
          }
        },
        {out});
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(Tape<T>* tape, const Tensor<T>& x, int start, int len) {
  require_rank(x, 2, "slice_cols", "input");
  const int rows = x.dim(0), cols = x.dim(1);
  if (start < 0 || len <= 0 || start + len > cols)
    throw ShapeError("slice_cols: [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of " +
                     std::to_string(cols) + " columns");
  Tensor<T> out = Tensor<T>::zeros({rows, len});
  for (int r = 0; r < rows; ++r)
    std::memcpy(out.data() + static_cast<int64_t>(r) * len,
                x.data() + static_cast<int64_t>(r) * cols + start,
                sizeof(T) * static_cast<size_t>(len));
  if (tape && x.needs_grad()) {
    Tensor<T> xc = x, oc = out;
    tape->record(
        [xc, oc, rows, cols, start, len]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          T* gx = xc.grad();
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < len; ++c)
              gx[static_cast<int64_t>(r) * cols + start + c] +=
                  g[static_cast<int64_t>(r) * len + c];
        },
        {out});
  }
  return out;
}

template <typename T>
Tensor<T> gather_rows(Tape<T>* tape, const Tensor<T>& x,
                      const std::vector<int>& idx) {
  require_rank(x, 2, "gather_rows", "input");
  const int rows = x.dim(0), cols = x.dim(1);
  for (int i : idx)
    if (i < 0 || i >= rows)
      throw ShapeError("gather_rows: index " + std::to_string(i) +
                       " out of " + std::to_string(rows) + " rows");
  Tensor<T> out = Tensor<T>::zeros({static_cast<int>(idx.size()), cols});
  for (size_t r = 0; r < idx.size(); ++r)
    std::memcpy(out.data() + static_cast<int64_t>(r) * cols,
                x.data() + static_cast<int64_t>(idx[r]) * cols,
                sizeof(T) * static_cast<size_t>(cols));
  if (tape && x.needs_grad()) {
    Tensor<T> xc = x, oc = out;
    std::vector<int> ic = idx;
    tape->record(
        [xc, oc, ic, cols]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          T* gx = xc.grad();
          for (size_t r = 0; r < ic.size(); ++r) {
            T* dst = gx + static_cast<int64_t>(ic[r]) * cols;
            const T* src = g + static_cast<int64_t>(r) * cols;
            for (int c = 0; c < cols; ++c) dst[c] += src[c];
          }
        },
        {out});
  }
  return out;
}

template <typename T>
Tensor<T> group_sum_rows(Tape<T>* tape, const Tensor<T>& x, int group) {
  require_rank(x, 2, "group_sum_rows", "input");
  const int rows = x.dim(0), cols = x.dim(1);
  if (group <= 0 || rows % group != 0)
    throw ShapeError("group_sum_rows: rows " + std::to_string(rows) +
                     " not divisible by group " + std::to_string(group));
  const int out_rows = rows / group;
  Tensor<T> out = Tensor<T>::zeros({out_rows, cols});
  std::vector<int> order(static_cast<size_t>(group));
  for (int grp = 0; grp < out_rows; ++grp) {
    const T* base = x.data() + static_cast<int64_t>(grp) * group * cols;
    // Content-ordered accumulation: sort member rows lexicographically so
    // the per-element addition order depends only on the multiset of rows.
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const T* ra = base + static_cast<int64_t>(a) * cols;
      const T* rb = base + static_cast<int64_t>(b) * cols;
      for (int c = 0; c < cols; ++c) {
        if (ra[c] < rb[c]) return true;
        if (ra[c] > rb[c]) return false;
      }
      return false;
    });
    T* dst = out.data() + static_cast<int64_t>(grp) * cols;
    for (int g = 0; g < group; ++g) {
      const T* src = base + static_cast<int64_t>(order[g]) * cols;
      for (int c = 0; c < cols; ++c) dst[c] += src[c];
    }
  }
  if (tape && x.needs_grad()) {
    Tensor<T> xc = x, oc = out;
    tape->record(
        [xc, oc, group, cols]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          T* gx = xc.grad();
          const int out_rows = oc.dim(0);
          for (int grp = 0; grp < out_rows; ++grp) {
            const T* src = g + static_cast<int64_t>(grp) * cols;
            for (int m = 0; m < group; ++m) {
              T* dst = gx + (static_cast<int64_t>(grp) * group + m) * cols;
              for (int c = 0; c < cols; ++c) dst[c] += src[c];
            }
          }
        },
        {out});
  }
  return out;
}

template <typename T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& x) {
  T acc = 0;
  const T* px = x.data();
  for (int64_t i = 0, n = x.size(); i < n; ++i) acc += px[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (tape && x.needs_grad()) {
    Tensor<T> xc = x, oc = out;
    tape->record(
        [xc, oc]() mutable {
          if (!oc.has_grad()) return;
          const T g = oc.grad()[0];
          T* gx = xc.grad();
          for (int64_t i = 0, n = xc.size(); i < n; ++i) gx[i] += g;
        },
        {out});
  }
  return out;
}

// ---- activations ------------------------------------------------------------

template <typename T>
Tensor<T> activation(Tape<T>* tape, const Tensor<T>& x, Act kind,
                     const SurrogateSpec& surrogate) {
  if (kind == Act::identity) return x;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* po = out.data();
  const int64_t n = x.size();
  switch (kind) {
    case Act::relu:
      for (int64_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
      break;
    case Act::sigmoid:
      for (int64_t i = 0; i < n; ++i) po[i] = stable_sigmoid(px[i]);
      break;
    case Act::tanh:
      for (int64_t i = 0; i < n; ++i) po[i] = std::tanh(px[i]);
      break;
    case Act::step:
      for (int64_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? T(1) : T(0);
      break;
    case Act::identity:
      break;
  }
  if (tape && x.needs_grad()) {
    Tensor<T> xc = x, oc = out;
    const T width = static_cast<T>(surrogate.width);
    tape->record(
        [xc, oc, kind, width]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          const T* y = oc.data();
          const T* z = xc.data();
          T* gx = xc.grad();
          const int64_t n = oc.size();
          switch (kind) {
            case Act::relu:
              for (int64_t i = 0; i < n; ++i)
                if (y[i] > T(0)) gx[i] += g[i];
              break;
            case Act::sigmoid:
              for (int64_t i = 0; i < n; ++i)
                gx[i] += g[i] * y[i] * (T(1) - y[i]);
              break;
            case Act::tanh:
              for (int64_t i = 0; i < n; ++i)
                gx[i] += g[i] * (T(1) - y[i] * y[i]);
              break;
            case Act::step:
              // Triangular surrogate around the threshold.
              for (int64_t i = 0; i < n; ++i) {
                T pd = T(1) - std::abs(z[i]) / width;
                if (pd > T(0)) gx[i] += g[i] * pd;
              }
              break;
            case Act::identity:
              break;
          }
        },
        {out});
  }
  return out;
}

// ---- convolution --------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& k,
                 const Tensor<T>& bias) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(k, 4, "conv2d", "kernel");
  require_rank(bias, 1, "conv2d", "bias");
  const int b = x.dim(0), h = x.dim(1), w = x.dim(2), ci = x.dim(3);
  const int kh = k.dim(0), kw = k.dim(1), co = k.dim(3);
  if (k.dim(2) != ci)
    throw ShapeError("conv2d: kernel input channels " +
                     std::to_string(k.dim(2)) + " vs input channels " +
                     std::to_string(ci));
  if (bias.dim(0) != co)
    throw ShapeError("conv2d: bias length " + std::to_string(bias.dim(0)) +
                     " vs output channels " + std::to_string(co));
  if (h < kh || w < kw)
    throw ShapeError("conv2d: spatial input " + std::to_string(h) + "x" +
                     std::to_string(w) + " smaller than kernel " +
                     std::to_string(kh) + "x" + std::to_string(kw));
  const int ho = h - kh + 1, wo = w - kw + 1;
  const int64_t p = static_cast<int64_t>(ho) * wo;
  const int kk = kh * kw * ci;

  Tensor<T> out = Tensor<T>::zeros({b, ho, wo, co});
  std::vector<T> col(static_cast<size_t>(p) * kk);
  const int64_t in_stride = static_cast<int64_t>(h) * w * ci;
  const int64_t out_stride = p * co;
  for (int i = 0; i < b; ++i) {
    im2col(x.data() + i * in_stride, h, w, ci, kh, kw, col.data());
    detail::gemm(col.data(), k.data(), out.data() + i * out_stride,
                 static_cast<int>(p), kk, co);
  }
  // Per-channel bias.
  T* po = out.data();
  const T* pb = bias.data();
  for (int64_t r = 0, rows = static_cast<int64_t>(b) * p; r < rows; ++r)
    for (int c = 0; c < co; ++c) po[r * co + c] += pb[c];

  if (tape && (x.needs_grad() || k.needs_grad() || bias.needs_grad())) {
    Tensor<T> xc = x, kc = k, bc = bias, oc = out;
    tape->record(
        [xc, kc, bc, oc, b, h, w, ci, kh, kw, co, ho, wo, p, kk, in_stride,
         out_stride]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          std::vector<T> col(static_cast<size_t>(p) * kk);
          const bool need_dx = xc.needs_grad();
          const bool need_dk = kc.needs_grad();
          T* gx = need_dx ? xc.grad() : nullptr;
          T* gk = need_dk ? kc.grad() : nullptr;
          for (int i = 0; i < b; ++i) {
            const T* gy = g + i * out_stride;
            if (need_dk) {
              im2col(xc.data() + i * in_stride, h, w, ci, kh, kw, col.data());
              detail::gemm_ta(col.data(), gy, gk, kk, static_cast<int>(p), co,
                              true);
            }
            if (need_dx) {
              detail::gemm_tb(gy, kc.data(), col.data(), static_cast<int>(p),
                              co, kk);
              col2im_add(col.data(), h, w, ci, kh, kw, gx + i * in_stride);
            }
          }
          if (bc.needs_grad()) {
            T* gb = bc.grad();
            for (int64_t r = 0, rows = static_cast<int64_t>(b) * p; r < rows;
                 ++r)
              for (int c = 0; c < co; ++c) gb[c] += g[r * co + c];
          }
        },
        {out});
  }
  return out;
}

// ---- batch normalization -------------------------------------------------------

template <typename T>
Tensor<T> batchnorm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, Tensor<T>& moving_mean,
                    Tensor<T>& moving_var, bool training, T momentum, T eps) {
  require_rank(x, 4, "batchnorm", "input");
  const int c = x.dim(3);
  for (const auto* t : {&gamma, &beta, &moving_mean, &moving_var})
    if (t->rank() != 1 || t->dim(0) != c)
      throw ShapeError("batchnorm: per-channel parameter shape " +
                       shape_str(t->shape()) + " vs " + std::to_string(c) +
                       " channels");
  const int64_t n = x.size();
  const int64_t m = n / c;  // samples per channel
  if (training && m == 0) throw ValueError("batchnorm: empty batch");

  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* po = out.data();
  const T* pg = gamma.data();
  const T* pbta = beta.data();

  std::vector<T> mean(static_cast<size_t>(c)), var(static_cast<size_t>(c));
  if (training) {
    std::vector<double> acc(static_cast<size_t>(c), 0.0);
    for (int64_t r = 0; r < m; ++r) {
      const T* row = px + r * c;
      for (int j = 0; j < c; ++j) acc[static_cast<size_t>(j)] += row[j];
    }
    for (int j = 0; j < c; ++j)
      mean[static_cast<size_t>(j)] =
          static_cast<T>(acc[static_cast<size_t>(j)] / static_cast<double>(m));
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int64_t r = 0; r < m; ++r) {
      const T* row = px + r * c;
      for (int j = 0; j < c; ++j) {
        double d = static_cast<double>(row[j]) -
                   static_cast<double>(mean[static_cast<size_t>(j)]);
        acc[static_cast<size_t>(j)] += d * d;
      }
    }
    for (int j = 0; j < c; ++j)
      var[static_cast<size_t>(j)] =
          static_cast<T>(acc[static_cast<size_t>(j)] / static_cast<double>(m));
    // Fold batch statistics into the moving averages (in place; these
    // buffers are state, not tape tensors).
    T* mm = moving_mean.data();
    T* mv = moving_var.data();
    for (int j = 0; j < c; ++j) {
      mm[j] = momentum * mm[j] + (T(1) - momentum) * mean[static_cast<size_t>(j)];
      mv[j] = momentum * mv[j] + (T(1) - momentum) * var[static_cast<size_t>(j)];
    }
  } else {
    for (int j = 0; j < c; ++j) {
      mean[static_cast<size_t>(j)] = moving_mean.data()[j];
      var[static_cast<size_t>(j)] = moving_var.data()[j];
    }
  }

  std::vector<T> inv_sd(static_cast<size_t>(c));
  for (int j = 0; j < c; ++j)
    inv_sd[static_cast<size_t>(j)] =
        T(1) / std::sqrt(var[static_cast<size_t>(j)] + eps);
  for (int64_t r = 0; r < m; ++r) {
    const T* row = px + r * c;
    T* orow = po + r * c;
    for (int j = 0; j < c; ++j) {
      const T xhat = (row[j] - mean[static_cast<size_t>(j)]) *
                     inv_sd[static_cast<size_t>(j)];
      orow[j] = pg[j] * xhat + pbta[j];
    }
  }

  if (tape && (x.needs_grad() || gamma.needs_grad() || beta.needs_grad())) {
    Tensor<T> xc = x, gc = gamma, bc = beta, oc = out;
    tape->record(
        [xc, gc, bc, oc, mean, inv_sd, training, c, m]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          const T* px = xc.data();
          const T* pg = gc.data();
          const int64_t n = oc.size();
          // dgamma/dbeta are cheap in both modes.
          if (gc.needs_grad() || bc.needs_grad()) {
            T* gg = gc.needs_grad() ? gc.grad() : nullptr;
            T* gb = bc.needs_grad() ? bc.grad() : nullptr;
            for (int64_t r = 0; r < n / c; ++r)
              for (int j = 0; j < c; ++j) {
                const int64_t i = r * c + j;
                const T xhat = (px[i] - mean[static_cast<size_t>(j)]) *
                               inv_sd[static_cast<size_t>(j)];
                if (gg) gg[j] += g[i] * xhat;
                if (gb) gb[j] += g[i];
              }
          }
          if (!xc.needs_grad()) return;
          T* gx = xc.grad();
          if (!training) {
            for (int64_t r = 0; r < n / c; ++r)
              for (int j = 0; j < c; ++j)
                gx[r * c + j] += g[r * c + j] * pg[j] * inv_sd[static_cast<size_t>(j)];
            return;
          }
          // Training mode: differentiate through the batch statistics.
          // dx = (gamma*inv_sd/m) * (m*dy - sum(dy) - xhat*sum(dy*xhat))
          std::vector<double> sum_dy(static_cast<size_t>(c), 0.0);
          std::vector<double> sum_dy_xhat(static_cast<size_t>(c), 0.0);
          for (int64_t r = 0; r < m; ++r)
            for (int j = 0; j < c; ++j) {
              const int64_t i = r * c + j;
              const T xhat = (px[i] - mean[static_cast<size_t>(j)]) *
                             inv_sd[static_cast<size_t>(j)];
              sum_dy[static_cast<size_t>(j)] += static_cast<double>(g[i]);
              sum_dy_xhat[static_cast<size_t>(j)] +=
                  static_cast<double>(g[i]) * static_cast<double>(xhat);
            }
          const T invm = T(1) / static_cast<T>(m);
          for (int64_t r = 0; r < m; ++r)
            for (int j = 0; j < c; ++j) {
              const int64_t i = r * c + j;
              const T xhat = (px[i] - mean[static_cast<size_t>(j)]) *
                             inv_sd[static_cast<size_t>(j)];
              const T term =
                  static_cast<T>(m) * g[i] -
                  static_cast<T>(sum_dy[static_cast<size_t>(j)]) -
                  xhat * static_cast<T>(sum_dy_xhat[static_cast<size_t>(j)]);
              gx[i] += pg[j] * inv_sd[static_cast<size_t>(j)] * invm * term;
            }
        },
        {out});
  }
  return out;
}

// ---- max pooling ----------------------------------------------------------------

template <typename T>
Tensor<T> maxpool2x2(Tape<T>* tape, const Tensor<T>& x) {
  require_rank(x, 4, "maxpool2x2", "input");
  const int b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const int ho = (h + 1) / 2, wo = (w + 1) / 2;
  Tensor<T> out = Tensor<T>::zeros({b, ho, wo, c});
  // Linear input index of the winner, -1 when the zero pad won.
  std::vector<int64_t> arg(static_cast<size_t>(out.size()), -1);
  const T* px = x.data();
  T* po = out.data();
  int64_t o = 0;
  for (int i = 0; i < b; ++i) {
    const int64_t ib = static_cast<int64_t>(i) * h * w * c;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox)
        for (int j = 0; j < c; ++j, ++o) {
          const bool clipped = (2 * oy + 1 >= h) || (2 * ox + 1 >= w);
          T best = 0;
          int64_t best_ix = -1;
          for (int dy = 0; dy < 2; ++dy) {
            const int y = 2 * oy + dy;
            if (y >= h) continue;
            for (int dx = 0; dx < 2; ++dx) {
              const int xcol = 2 * ox + dx;
              if (xcol >= w) continue;
              const int64_t ix = ib + (static_cast<int64_t>(y) * w + xcol) * c + j;
              if (best_ix < 0 || px[ix] > best) {
                best = px[ix];
                best_ix = ix;
              }
            }
          }
          // The zero pad participates in the max for windows past the edge.
          if (clipped && best < T(0)) {
            po[o] = T(0);
            arg[static_cast<size_t>(o)] = -1;
          } else {
            po[o] = best;
            arg[static_cast<size_t>(o)] = best_ix;
          }
        }
  }
  if (tape && x.needs_grad()) {
    Tensor<T> xc = x, oc = out;
    auto argp = std::make_shared<std::vector<int64_t>>(std::move(arg));
    tape->record(
        [xc, oc, argp]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          T* gx = xc.grad();
          const auto& a = *argp;
          for (int64_t i = 0, n = oc.size(); i < n; ++i)
            if (a[static_cast<size_t>(i)] >= 0)
              gx[a[static_cast<size_t>(i)]] += g[i];
        },
        {out});
  }
  return out;
}

// ---- dropout ---------------------------------------------------------------------

template <typename T>
Tensor<T> dropout(Tape<T>* tape, const Tensor<T>& x, double rate,
                  bool training, RngStream* rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ValueError("dropout: rate must lie in [0,1), got " +
                     std::to_string(rate));
  if (!training || rate == 0.0) return x;
  if (!rng) throw ValueError("dropout: training mode requires an RngStream");
  const int64_t n = x.size();
  auto mask = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(n));
  const T inv = T(1) / static_cast<T>(1.0 - rate);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) {
    const bool keep = rng->uniform() >= rate;
    (*mask)[static_cast<size_t>(i)] = keep;
    po[i] = keep ? px[i] * inv : T(0);
  }
  if (tape && x.needs_grad()) {
    Tensor<T> xc = x, oc = out;
    tape->record(
        [xc, oc, mask, inv]() mutable {
          if (!oc.has_grad()) return;
          const T* g = oc.grad();
          T* gx = xc.grad();
          const auto& mk = *mask;
          for (int64_t i = 0, n = oc.size(); i < n; ++i)
            if (mk[static_cast<size_t>(i)]) gx[i] += g[i] * inv;
        },
        {out});
  }
  return out;
}

// ---- losses ----------------------------------------------------------------------

template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>* tape, const Tensor<T>& scores,
                                const std::vector<int>& labels) {
  require_rank(scores, 2, "softmax_cross_entropy", "scores");
  const int b = scores.dim(0), c = scores.dim(1);
  if (static_cast<int>(labels.size()) != b)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(b) + " rows");
  for (int l : labels)
    if (l < 0 || l >= c)
      throw ValueError("softmax_cross_entropy: label " + std::to_string(l) +
                       " out of range [0," + std::to_string(c) + ")");
  // Stable fused formulation; keep the per-row probabilities for backward.
  auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(b) * c);
  const T* ps = scores.data();
  double loss_acc = 0.0;
  for (int r = 0; r < b; ++r) {
    const T* row = ps + static_cast<int64_t>(r) * c;
    T mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j)
      denom += std::exp(static_cast<double>(row[j] - mx));
    const double lse = static_cast<double>(mx) + std::log(denom);
    loss_acc += lse - static_cast<double>(row[labels[static_cast<size_t>(r)]]);
    for (int j = 0; j < c; ++j)
      (*probs)[static_cast<size_t>(r * c + j)] =
          static_cast<T>(std::exp(static_cast<double>(row[j]) - lse));
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(loss_acc / b));
  if (tape && scores.needs_grad()) {
    Tensor<T> sc = scores, oc = out;
    std::vector<int> lc = labels;
    tape->record(
        [sc, oc, probs, lc, b, c]() mutable {
          if (!oc.has_grad()) return;
          const T g = oc.grad()[0];
          T* gs = sc.grad();
          const T invb = T(1) / static_cast<T>(b);
          for (int r = 0; r < b; ++r)
            for (int j = 0; j < c; ++j) {
              T p = (*probs)[static_cast<size_t>(r * c + j)];
              T delta = (j == lc[static_cast<size_t>(r)]) ? T(1) : T(0);
              gs[static_cast<int64_t>(r) * c + j] += g * invb * (p - delta);
            }
        },
        {out});
  }
  return out;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& scores) {
  require_rank(scores, 2, "softmax_rows", "scores");
  const int b = scores.dim(0), c = scores.dim(1);
  Tensor<T> out = Tensor<T>::zeros(scores.shape());
  std::vector<T> exps(static_cast<size_t>(c));
  for (int r = 0; r < b; ++r) {
    const T* row = scores.data() + static_cast<int64_t>(r) * c;
    T* po = out.data() + static_cast<int64_t>(r) * c;
    T mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    for (int j = 0; j < c; ++j) exps[static_cast<size_t>(j)] = std::exp(row[j] - mx);
    // Content-ordered denominator: the sum (and hence each probability) is
    // exactly invariant under permutations of the scores.
    std::vector<T> sorted(exps);
    std::sort(sorted.begin(), sorted.end());
    T denom = 0;
    for (T e : sorted) denom += e;
    for (int j = 0; j < c; ++j) po[j] = exps[static_cast<size_t>(j)] / denom;
  }
  return out;
}

template <typename T>
Tensor<T> masked_binary_cross_entropy(Tape<T>* tape, const Tensor<T>& beliefs,
                                      const Tensor<T>& targets,
                                      const Tensor<T>& mask) {
  require_rank(beliefs, 2, "masked_bce", "beliefs");
  require_same_shape(beliefs, targets, "masked_bce");
  require_rank(mask, 1, "masked_bce", "mask");
  const int b = beliefs.dim(0), s = beliefs.dim(1);
  if (mask.dim(0) != s)
    throw ShapeError("masked_bce: mask length " + std::to_string(mask.dim(0)) +
                     " vs " + std::to_string(s) + " steps");
  const T* pm = mask.data();
  T msum = 0;
  for (int t = 0; t < s; ++t) {
    if (pm[t] != T(0) && pm[t] != T(1))
      throw ValueError("masked_bce: mask entries must be 0 or 1");
    msum += pm[t];
  }
  if (msum == T(0))
    throw ValueError("masked_bce: all-zero mask leaves the mean undefined");

  constexpr double kEps = 1e-7;
  const T* pp = beliefs.data();
  const T* py = targets.data();
  double acc = 0.0;
  for (int r = 0; r < b; ++r)
    for (int t = 0; t < s; ++t) {
      if (pm[t] == T(0)) continue;
      double p = std::clamp(static_cast<double>(pp[static_cast<int64_t>(r) * s + t]),
                            kEps, 1.0 - kEps);
      double y = static_cast<double>(py[static_cast<int64_t>(r) * s + t]);
      acc += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
  Tensor<T> out =
      Tensor<T>::scalar(static_cast<T>(acc / (static_cast<double>(b) *
                                              static_cast<double>(msum))));
  if (tape && beliefs.needs_grad()) {
    Tensor<T> pc = beliefs, yc = targets, mc = mask, oc = out;
    tape->record(
        [pc, yc, mc, oc, b, s, msum]() mutable {
          if (!oc.has_grad()) return;
          const T g = oc.grad()[0];
          T* gp = pc.grad();
          const T* pp = pc.data();
          const T* py = yc.data();
          const T* pm = mc.data();
          const T scale = g / (static_cast<T>(b) * msum);
          for (int r = 0; r < b; ++r)
            for (int t = 0; t < s; ++t) {
              if (pm[t] == T(0)) continue;
              const int64_t i = static_cast<int64_t>(r) * s + t;
              double p = std::clamp(static_cast<double>(pp[i]), 1e-7, 1.0 - 1e-7);
              double d = (p - static_cast<double>(py[i])) / (p * (1.0 - p));
              gp[i] += scale * static_cast<T>(d);
            }
        },
        {out});
  }
  return out;
}

template <typename T>
int argmax_row(const T* row, int n) {
  int best = 0;
  for (int j = 1; j < n; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

#define ODDITY_INSTANTIATE_OPS(T)                                              \
  template Tensor<T> add(Tape<T>*, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> sub(Tape<T>*, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> mul(Tape<T>*, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> affine(Tape<T>*, const Tensor<T>&, T, T);                 \
  template Tensor<T> matmul(Tape<T>*, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> add_row_bias(Tape<T>*, const Tensor<T>&,                  \
                                  const Tensor<T>&);                           \
  template Tensor<T> dense(Tape<T>*, const Tensor<T>&, const Tensor<T>&,       \
                           const Tensor<T>&);                                  \
  template Tensor<T> reshape(Tape<T>*, const Tensor<T>&, Shape);               \
  template Tensor<T> concat_cols(Tape<T>*, const Tensor<T>&,                   \
                                 const Tensor<T>&);                            \
  template Tensor<T> slice_cols(Tape<T>*, const Tensor<T>&, int, int);         \
  template Tensor<T> gather_rows(Tape<T>*, const Tensor<T>&,                   \
                                 const std::vector<int>&);                     \
  template Tensor<T> group_sum_rows(Tape<T>*, const Tensor<T>&, int);          \
  template Tensor<T> sum_all(Tape<T>*, const Tensor<T>&);                      \
  template Tensor<T> activation(Tape<T>*, const Tensor<T>&, Act,               \
                                const SurrogateSpec&);                         \
  template Tensor<T> conv2d(Tape<T>*, const Tensor<T>&, const Tensor<T>&,      \
                            const Tensor<T>&);                                 \
  template Tensor<T> batchnorm(Tape<T>*, const Tensor<T>&, const Tensor<T>&,   \
                               const Tensor<T>&, Tensor<T>&, Tensor<T>&, bool, \
                               T, T);                                          \
  template Tensor<T> maxpool2x2(Tape<T>*, const Tensor<T>&);                   \
  template Tensor<T> dropout(Tape<T>*, const Tensor<T>&, double, bool,         \
                             RngStream*);                                      \
  template Tensor<T> softmax_cross_entropy(Tape<T>*, const Tensor<T>&,         \
                                           const std::vector<int>&);           \
  template Tensor<T> softmax_rows(const Tensor<T>&);                           \
  template Tensor<T> masked_binary_cross_entropy(                              \
      Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);         \
  template int argmax_row(const T*, int);

ODDITY_INSTANTIATE_OPS(float)
ODDITY_INSTANTIATE_OPS(double)
#undef ODDITY_INSTANTIATE_OPS

}  // namespace oddity
