#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "tgnn/rng.hpp"

namespace tgnn {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {a.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {a.data() + i * cols, cols}; }

    bool empty() const { return a.empty(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double v) { a.assign(a.size(), v); }

    static Matrix uniform(std::size_t r, std::size_t c, double lo, double hi, Rng& rng) {
        Matrix m(r, c);
        for (auto& x : m.a) x = rng.uniform(lo, hi);
        return m;
    }
};

inline Matrix transpose(const Matrix& m) {
    Matrix t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
    return t;
}

inline Matrix matmul(const Matrix& x, const Matrix& y) {
    if (x.cols != y.rows) throw std::invalid_argument("matmul: inner dimensions differ");
    Matrix z(x.rows, y.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t k = 0; k < x.cols; ++k) {
            const double v = x(i, k);
            if (v == 0.0) continue;
            const double* yr = y.a.data() + k * y.cols;
            double* zr = z.a.data() + i * z.cols;
            for (std::size_t j = 0; j < y.cols; ++j) zr[j] += v * yr[j];
        }
    }
    return z;
}

/// y = M x
inline Vector matvec(const Matrix& m, std::span<const double> x) {
    if (x.size() != m.cols) throw std::invalid_argument("matvec: dimension mismatch");
    Vector y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double acc = 0.0;
        const double* r = m.a.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) acc += r[j] * x[j];
        y[i] = acc;
    }
    return y;
}

/// y = M^T x
inline Vector matvec_transposed(const Matrix& m, std::span<const double> x) {
    if (x.size() != m.rows) throw std::invalid_argument("matvec_transposed: dimension mismatch");
    Vector y(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double v = x[i];
        if (v == 0.0) continue;
        const double* r = m.a.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) y[j] += v * r[j];
    }
    return y;
}

inline double max_abs(const Matrix& m) {
    double r = 0.0;
    for (double v : m.a) r = std::max(r, std::abs(v));
    return r;
}

inline double max_abs(std::span<const double> v) {
    double r = 0.0;
    for (double x : v) r = std::max(r, std::abs(x));
    return r;
}

}  // namespace tgnn
