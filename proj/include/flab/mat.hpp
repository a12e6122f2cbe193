#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

#include "flab/errors.hpp"

namespace flab {

// Dense row-major matrix. The only tensor shape the toolkit needs; vectors
// are 1xN or Nx1 as convenient.
template <class T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, T(0)) {
        assert(r >= 0 && c >= 0);
    }

    static Mat zeros(int r, int c) { return Mat(r, c); }

    T* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
    const T* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }

    T& at(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    T at(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

    size_t size() const { return a.size(); }

    void fill(T v) { std::fill(a.begin(), a.end(), v); }

    void resize(int r, int c) {
        rows = r;
        cols = c;
        a.assign(static_cast<size_t>(r) * c, T(0));
    }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (T v : a)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <class U>
    Mat<U> cast() const {
        Mat<U> out(rows, cols);
        for (size_t i = 0; i < a.size(); ++i) out.a[i] = static_cast<U>(a[i]);
        return out;
    }
};

using MatF = Mat<float>;
using MatD = Mat<double>;

template <class T>
inline void require_shape(const Mat<T>& m, int r, int c, const char* what) {
    if (m.rows != r || m.cols != c)
        throw ShapeMismatch(std::string(what) + ": expected " + std::to_string(r) + "x" +
                            std::to_string(c) + ", got " + std::to_string(m.rows) + "x" +
                            std::to_string(m.cols));
}

} // namespace flab
