#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace glc {

// Dense row-major matrix of doubles. Rows are samples throughout this
// library: an N x d feature matrix holds one embedded sample per row.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // size rows * cols

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    // Builds from nested braces, e.g. Matrix::of({{1, 2}, {3, 4}}).
    static Matrix of(std::initializer_list<std::initializer_list<double>> init) {
        Matrix m;
        m.rows = init.size();
        m.cols = m.rows == 0 ? 0 : init.begin()->size();
        m.data.reserve(m.rows * m.cols);
        for (const auto& row : init) {
            if (row.size() != m.cols) throw std::invalid_argument("Matrix::of: ragged rows");
            m.data.insert(m.data.end(), row.begin(), row.end());
        }
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Matrix& other) const = default;
};

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions disagree");
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

// Column sums, e.g. for bias gradients.
inline std::vector<double> column_sums(const Matrix& a) {
    std::vector<double> s(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) s[j] += a(i, j);
    return s;
}

// Rows of `a` selected by `indices`, in the order given.
inline Matrix take_rows(const Matrix& a, std::span<const std::size_t> indices) {
    Matrix out(indices.size(), a.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= a.rows) throw std::invalid_argument("take_rows: index out of range");
        std::copy_n(a.data.data() + indices[i] * a.cols, a.cols, out.data.data() + i * a.cols);
    }
    return out;
}

}  // namespace glc
