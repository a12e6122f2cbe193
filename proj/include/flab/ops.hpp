#pragma once

#include "flab/mat.hpp"

// Dense kernels used by the model's forward and backward passes.
//
// The default entry points are OpenMP-parallel over output rows; each output
// row is produced by exactly one thread with the same inner-loop order as the
// serial version, so parallel and serial results are bitwise identical.
// flab::ops::serial holds the plain reference implementations; tests compare
// the two and the bench target times them.

namespace flab::ops {

// C = A * B            (A: m x k, B: k x n, C: m x n)
template <class T>
void matmul_nn(const Mat<T>& A, const Mat<T>& B, Mat<T>& C, bool accumulate = false);

// C = A * B^T          (A: m x k, B: n x k, C: m x n)
template <class T>
void matmul_nt(const Mat<T>& A, const Mat<T>& B, Mat<T>& C, bool accumulate = false);

// C = A^T * B          (A: m x k, B: m x n, C: k x n)
template <class T>
void matmul_tn(const Mat<T>& A, const Mat<T>& B, Mat<T>& C, bool accumulate = false);

// In-place row softmax over the leading `width` entries of each row
// (width < cols leaves the tail untouched; used for causal attention rows).
template <class T>
void softmax_row(T* row, int width);

namespace serial {

template <class T>
void matmul_nn(const Mat<T>& A, const Mat<T>& B, Mat<T>& C, bool accumulate = false);
template <class T>
void matmul_nt(const Mat<T>& A, const Mat<T>& B, Mat<T>& C, bool accumulate = false);
template <class T>
void matmul_tn(const Mat<T>& A, const Mat<T>& B, Mat<T>& C, bool accumulate = false);

} // namespace serial

} // namespace flab::ops
