#pragma once

// Raw row-major GEMM wrappers over Eigen. All convolution work in the
// toolkit funnels through these three calls.

#include <Eigen/Core>

namespace depthfill {

namespace detail {
template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRM = Eigen::Map<MatRM<T>>;
template <class T>
using CMapRM = Eigen::Map<const MatRM<T>>;
}  // namespace detail

// C[m,n] = A[m,k] * B[k,n]   (+= when accumulate)
template <class T>
void matmul(const T* A, const T* B, T* C, int m, int k, int n, bool accumulate = false) {
    detail::CMapRM<T> a(A, m, k), b(B, k, n);
    detail::MapRM<T> c(C, m, n);
    if (accumulate)
        c.noalias() += a * b;
    else
        c.noalias() = a * b;
}

// C[m,n] = A^T * B with A stored as [k,m]
template <class T>
void matmul_tn(const T* A, const T* B, T* C, int m, int k, int n, bool accumulate = false) {
    detail::CMapRM<T> a(A, k, m), b(B, k, n);
    detail::MapRM<T> c(C, m, n);
    if (accumulate)
        c.noalias() += a.transpose() * b;
    else
        c.noalias() = a.transpose() * b;
}

// C[m,n] = A * B^T with B stored as [n,k]
template <class T>
void matmul_nt(const T* A, const T* B, T* C, int m, int k, int n, bool accumulate = false) {
    detail::CMapRM<T> a(A, m, k), b(B, n, k);
    detail::MapRM<T> c(C, m, n);
    if (accumulate)
        c.noalias() += a * b.transpose();
    else
        c.noalias() = a * b.transpose();
}

}  // namespace depthfill
