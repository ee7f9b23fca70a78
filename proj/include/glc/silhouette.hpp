#pragma once

#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "glc/kmeans.hpp"
#include "glc/matrix.hpp"
#include "glc/numeric.hpp"
#include "glc/rng.hpp"

namespace glc {

// Per-sample silhouette: a(x) is the mean distance to the other members of
// its own cluster, b(x) the smallest mean distance to any other non-empty
// cluster, s = (b - a) / max(a, b). Members of singleton clusters score 0;
// so does a sample with a = b = 0 (coincident points).
inline std::vector<double> silhouette_values(const Matrix& x,
                                             const std::vector<std::size_t>& assignments,
                                             Metric metric) {
    if (assignments.size() != x.rows)
        throw std::invalid_argument("silhouette_values: assignment length mismatch");
    if (x.rows == 0) throw std::invalid_argument("silhouette_values: empty input");

    std::size_t k = 0;
    for (std::size_t a : assignments) k = std::max(k, a + 1);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t a : assignments) ++counts[a];
    std::size_t non_empty = 0;
    for (std::size_t c : counts) non_empty += (c > 0);
    if (non_empty < 2)
        throw std::invalid_argument("silhouette_values: need at least 2 non-empty clusters");

    const Matrix dist = pairwise_distance(x, metric);
    std::vector<double> values(x.rows, 0.0);
    std::vector<double> cluster_sum(k);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const std::size_t own = assignments[i];
        if (counts[own] == 1) {
            values[i] = 0.0;  // singleton convention
            continue;
        }
        std::fill(cluster_sum.begin(), cluster_sum.end(), 0.0);
        for (std::size_t j = 0; j < x.rows; ++j) cluster_sum[assignments[j]] += dist(i, j);

        const double a = cluster_sum[own] / static_cast<double>(counts[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c == own || counts[c] == 0) continue;
            b = std::min(b, cluster_sum[c] / static_cast<double>(counts[c]));
        }
        const double denom = std::max(a, b);
        values[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return values;
}

inline double mean_silhouette(const Matrix& x, const std::vector<std::size_t>& assignments,
                              Metric metric) {
    const auto values = silhouette_values(x, assignments, metric);
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

struct ClassCountEstimate {
    std::size_t chosen = 0;
    std::vector<std::pair<std::size_t, double>> candidate_scores;  // (candidate, mean silhouette)
};

struct ClassCountOptions {
    Metric metric = Metric::cosine;
    KMeansOptions kmeans;
};

// Picks the target class count from the candidate list
// {round(C_s/3), round(C_s/2), C_s, 2*C_s, 3*C_s} (deduplicated, clamped to
// [2, N]) by the highest mean silhouette; ties prefer the smallest candidate.
// Each candidate clusters with its own stream derived from (seed, candidate),
// so the result does not depend on evaluation order.
inline ClassCountEstimate estimate_class_count(const Matrix& x, std::size_t source_classes,
                                               const RngState& rng,
                                               const ClassCountOptions& opt = {}) {
    if (x.rows < 2) throw std::invalid_argument("estimate_class_count: need at least 2 samples");
    if (source_classes < 1) throw std::invalid_argument("estimate_class_count: C_s must be positive");

    const double cs = static_cast<double>(source_classes);
    std::vector<std::size_t> candidates = {
        round_half_up(cs / 3.0), round_half_up(cs / 2.0),
        source_classes, 2 * source_classes, 3 * source_classes};
    for (std::size_t& c : candidates) c = std::clamp<std::size_t>(c, 2, x.rows);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    ClassCountEstimate est;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t cand : candidates) {
        const KMeansResult km = kmeans(x, cand, rng.derive(cand), opt.kmeans);
        const double score = mean_silhouette(x, km.assignments, opt.metric);
        est.candidate_scores.emplace_back(cand, score);
        if (score > best) {  // strict: ties keep the smaller candidate
            best = score;
            est.chosen = cand;
        }
    }
    return est;
}

}  // namespace glc
