#pragma once

// Thin wrapper around Eigen's matrix product for the row-major buffers the
// tensor ops use. Kept private to this library so public headers do not
// depend on Eigen.

#include <Eigen/Dense>

namespace oddity::detail {

template <typename T>
using MatMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// C[M,N] (+)= A[M,K] * B[K,N]
template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int k, int n,
          bool accumulate = false) {
  ConstMatMap<T> A(a, m, k);
  ConstMatMap<T> B(b, k, n);
  MatMap<T> C(c, m, n);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

/// C[M,N] (+)= A^T * B where A is stored [K,M]
template <typename T>
void gemm_ta(const T* a, const T* b, T* c, int m, int k, int n,
             bool accumulate = false) {
  ConstMatMap<T> A(a, k, m);
  ConstMatMap<T> B(b, k, n);
  MatMap<T> C(c, m, n);
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

/// C[M,N] (+)= A * B^T where B is stored [N,K]
template <typename T>
void gemm_tb(const T* a, const T* b, T* c, int m, int k, int n,
             bool accumulate = false) {
  ConstMatMap<T> A(a, m, k);
  ConstMatMap<T> B(b, n, k);
  MatMap<T> C(c, m, n);
  if (accumulate)
    C.noalias() += A * B.transpose();
  else
    C.noalias() = A * B.transpose();
}

}  // namespace oddity::detail
