#include "flab/ops.hpp"

namespace flab::ops::serial {

template <class T>
void matmul_nn(const Mat<T>& A, const Mat<T>& B, Mat<T>& C, bool accumulate) {
    assert(A.cols == B.rows);
    if (!accumulate) C.resize(A.rows, B.cols);
    assert(C.rows == A.rows && C.cols == B.cols);
    const int m = A.rows, k = A.cols, n = B.cols;
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
    for (int i = 0; i < k; ++i) {
        T* ci = C.row(i);
        for (int p = 0; p < m; ++p) {
            const T api = A.at(p, i);
            const T* bp = B.row(p);
            for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

template void matmul_nn<float>(const MatF&, const MatF&, MatF&, bool);
template void matmul_nt<float>(const MatF&, const MatF&, MatF&, bool);
template void matmul_tn<float>(const MatF&, const MatF&, MatF&, bool);
template void matmul_nn<double>(const MatD&, const MatD&, MatD&, bool);
template void matmul_nt<double>(const MatD&, const MatD&, MatD&, bool);
template void matmul_tn<double>(const MatD&, const MatD&, MatD&, bool);

} // namespace flab::ops::serial
