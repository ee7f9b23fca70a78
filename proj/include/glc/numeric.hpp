#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "glc/matrix.hpp"

namespace glc {

enum class Metric { cosine, euclidean };

// Numerically stable softmax (max-subtraction). Output sums to 1.
inline std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    double max_logit = logits[0];
    for (double v : logits) {
        if (!std::isfinite(v)) throw std::invalid_argument("softmax: non-finite input");
        max_logit = std::max(max_logit, v);
    }
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - max_logit);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

inline Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const auto p = softmax(logits.row(i));
        std::copy(p.begin(), p.end(), out.row(i).begin());
    }
    return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// Clamped to [-1, 1] against rounding. Zero-norm inputs are an error.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_similarity: zero-norm vector");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

inline std::vector<double> l2_normalize(std::span<const double> v) {
    const double n = l2_norm(v);
    if (n == 0.0) throw std::invalid_argument("l2_normalize: zero vector");
    std::vector<double> out(v.begin(), v.end());
    for (double& x : out) x /= n;
    return out;
}

inline Matrix normalize_rows(const Matrix& x) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const auto r = l2_normalize(x.row(i));
        std::copy(r.begin(), r.end(), out.row(i).begin());
    }
    return out;
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// Cosine distance is fixed as 1 - cosine_similarity.
inline double row_distance(std::span<const double> a, std::span<const double> b, Metric metric) {
    return metric == Metric::cosine ? 1.0 - cosine_similarity(a, b) : euclidean_distance(a, b);
}

// N x N matrix of pairwise distances between rows. Symmetric with an exactly
// zero diagonal; the upper triangle is computed once and mirrored.
inline Matrix pairwise_distance(const Matrix& x, Metric metric) {
    Matrix d(x.rows, x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t j = i + 1; j < x.rows; ++j) {
            const double dist = row_distance(x.row(i), x.row(j), metric);
            d(i, j) = dist;
            d(j, i) = dist;
        }
    }
    return d;
}

// Index of the largest value; ties go to the smaller index.
inline std::size_t argmax_index(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("argmax_index: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// Round half up, e.g. 2.5 -> 3. Used for class-count candidates and top-K.
inline std::size_t round_half_up(double x) {
    return static_cast<std::size_t>(std::floor(x + 0.5));
}

}  // namespace glc
