#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "glc/matrix.hpp"
#include "glc/numeric.hpp"
#include "glc/rng.hpp"

namespace glc {

struct KMeansResult {
    Matrix centroids;                     // k x d
    std::vector<std::size_t> assignments; // length N, values in [0, k)
    double inertia = 0.0;                 // sum of squared distances to assigned centroid
    std::vector<double> inertia_history;  // one entry per Lloyd iteration, non-increasing
};

struct KMeansOptions {
    std::size_t max_iters = 100;
    double tol = 1e-6;      // stop when the inertia improvement drops below this
    std::size_t restarts = 1;
};

namespace detail {

inline double sq_euclidean(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// k-means++ seeding; subsequent centers are drawn proportionally to the
// squared distance from the nearest chosen center.
inline Matrix kmeanspp_seed(const Matrix& x, std::size_t k, RngState& rng) {
    Matrix centroids(k, x.cols);
    std::vector<double> d2(x.rows, std::numeric_limits<double>::infinity());
    std::size_t first = static_cast<std::size_t>(rng.next_below(x.rows));
    std::copy_n(x.row(first).begin(), x.cols, centroids.row(0).begin());
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < x.rows; ++i) {
            d2[i] = std::min(d2[i], sq_euclidean(x.row(i), centroids.row(c - 1)));
            total += d2[i];
        }
        std::size_t chosen;
        if (total > 0.0) {
            const double r = rng.next_double() * total;
            double acc = 0.0;
            chosen = x.rows - 1;
            for (std::size_t i = 0; i < x.rows; ++i) {
                acc += d2[i];
                if (acc > r) {
                    chosen = i;
                    break;
                }
            }
        } else {
            // all remaining mass is zero (duplicate points); pick uniformly
            chosen = static_cast<std::size_t>(rng.next_below(x.rows));
        }
        std::copy_n(x.row(chosen).begin(), x.cols, centroids.row(c).begin());
    }
    return centroids;
}

inline KMeansResult lloyd(const Matrix& x, std::size_t k, RngState& rng, const KMeansOptions& opt) {
    KMeansResult res;
    res.centroids = kmeanspp_seed(x, k, rng);
    res.assignments.assign(x.rows, 0);
    double prev_inertia = std::numeric_limits<double>::infinity();

    for (std::size_t iter = 0; iter < opt.max_iters; ++iter) {
        // assignment step; ties go to the smaller centroid index
        for (std::size_t i = 0; i < x.rows; ++i) {
            double best = sq_euclidean(x.row(i), res.centroids.row(0));
            std::size_t best_c = 0;
            for (std::size_t c = 1; c < k; ++c) {
                const double d = sq_euclidean(x.row(i), res.centroids.row(c));
                if (d < best) {
                    best = d;
                    best_c = c;
                }
            }
            res.assignments[i] = best_c;
        }

        std::vector<std::size_t> counts(k, 0);
        for (std::size_t a : res.assignments) ++counts[a];

        // empty clusters take over the point farthest from its own centroid
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            double worst = -1.0;
            std::size_t worst_i = 0;
            for (std::size_t i = 0; i < x.rows; ++i) {
                if (counts[res.assignments[i]] <= 1) continue;  // do not empty another cluster
                const double d = sq_euclidean(x.row(i), res.centroids.row(res.assignments[i]));
                if (d > worst) {
                    worst = d;
                    worst_i = i;
                }
            }
            if (worst < 0.0) continue;  // every cluster is a singleton; leave as is
            --counts[res.assignments[worst_i]];
            res.assignments[worst_i] = c;
            ++counts[c];
        }

        // update step: centroids become the mean of their members
        res.centroids = Matrix(k, x.cols);
        for (std::size_t i = 0; i < x.rows; ++i) {
            auto cr = res.centroids.row(res.assignments[i]);
            const auto xr = x.row(i);
            for (std::size_t j = 0; j < x.cols; ++j) cr[j] += xr[j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            auto cr = res.centroids.row(c);
            for (std::size_t j = 0; j < x.cols; ++j) cr[j] /= static_cast<double>(counts[c]);
        }

        double inertia = 0.0;
        for (std::size_t i = 0; i < x.rows; ++i)
            inertia += sq_euclidean(x.row(i), res.centroids.row(res.assignments[i]));
        res.inertia_history.push_back(inertia);
        res.inertia = inertia;

        if (prev_inertia - inertia < opt.tol) break;
        prev_inertia = inertia;
    }
    return res;
}

}  // namespace detail

// Lloyd iterations with k-means++ seeding. Deterministic given (x, k, seed).
inline KMeansResult kmeans(const Matrix& x, std::size_t k, const RngState& rng,
                           const KMeansOptions& opt = {}) {
    if (k < 1) throw std::invalid_argument("kmeans: k must be at least 1");
    if (k > x.rows) throw std::invalid_argument("kmeans: k exceeds the number of samples");
    if (!x.all_finite()) throw std::invalid_argument("kmeans: non-finite input");

    KMeansResult best;
    for (std::size_t r = 0; r < std::max<std::size_t>(opt.restarts, 1); ++r) {
        RngState stream = rng.derive(r);
        KMeansResult run = detail::lloyd(x, k, stream, opt);
        if (r == 0 || run.inertia < best.inertia) best = std::move(run);
    }
    return best;
}

}  // namespace glc
