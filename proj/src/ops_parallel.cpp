#include "flab/ops.hpp"

#include <algorithm>
#include <cmath>

// Each output row is owned by exactly one thread and computed with the same
// inner-loop order as flab::ops::serial, so results match bitwise. When
// called from inside an active parallel region (e.g. a batch-parallel
// training step) the nested pragmas collapse to serial execution.

namespace flab::ops {

template <class T>
void matmul_nn(const Mat<T>& A, const Mat<T>& B, Mat<T>& C, bool accumulate) {
    assert(A.cols == B.rows);
    if (!accumulate) C.resize(A.rows, B.cols);
    assert(C.rows == A.rows && C.cols == B.cols);
    const int m = A.rows, k = A.cols, n = B.cols;
#pragma omp parallel for schedule(static) if (m > 1 && static_cast<long>(m) * k * n > 16384)
    for (int i = 0; i < m; ++i) {
        T* ci = C.row(i);
        const T* ai = A.row(i);
        for (int p = 0; p < k; ++p) {
            const T aip = ai[p];
            const T* bp = B.row(p);
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

template <class T>
void matmul_nt(const Mat<T>& A, const Mat<T>& B, Mat<T>& C, bool accumulate) {
    assert(A.cols == B.cols);
    if (!accumulate) C.resize(A.rows, B.rows);
    assert(C.rows == A.rows && C.cols == B.rows);
    const int m = A.rows, k = A.cols, n = B.rows;
#pragma omp parallel for schedule(static) if (m > 1 && static_cast<long>(m) * k * n > 16384)
    for (int i = 0; i < m; ++i) {
        T* ci = C.row(i);
        const T* ai = A.row(i);
        for (int j = 0; j < n; ++j) {
            const T* bj = B.row(j);
            T s = 0;
            for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] += s;
        }
    }
}

template <class T>
void matmul_tn(const Mat<T>& A, const Mat<T>& B, Mat<T>& C, bool accumulate) {
    assert(A.rows == B.rows);
    if (!accumulate) C.resize(A.cols, B.cols);
    assert(C.rows == A.cols && C.cols == B.cols);
    const int m = A.rows, k = A.cols, n = B.cols;
#pragma omp parallel for schedule(static) if (k > 1 && static_cast<long>(m) * k * n > 16384)
    for (int i = 0; i < k; ++i) {
        T* ci = C.row(i);
        for (int p = 0; p < m; ++p) {
            const T api = A.at(p, i);
            const T* bp = B.row(p);
            for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

template <class T>
void softmax_row(T* row, int width) {
    T mx = row[0];
    for (int j = 1; j < width; ++j) mx = std::max(mx, row[j]);
    T sum = 0;
    for (int j = 0; j < width; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
    }
    const T inv = T(1) / sum;
    for (int j = 0; j < width; ++j) row[j] *= inv;
}

template void matmul_nn<float>(const MatF&, const MatF&, MatF&, bool);
template void matmul_nt<float>(const MatF&, const MatF&, MatF&, bool);
template void matmul_tn<float>(const MatF&, const MatF&, MatF&, bool);
template void matmul_nn<double>(const MatD&, const MatD&, MatD&, bool);
template void matmul_nt<double>(const MatD&, const MatD&, MatD&, bool);
template void matmul_tn<double>(const MatD&, const MatD&, MatD&, bool);
template void softmax_row<float>(float*, int);
template void softmax_row<double>(double*, int);

} // namespace flab::ops
