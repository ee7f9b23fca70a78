#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "glc/kmeans.hpp"
#include "glc/matrix.hpp"
#include "glc/numeric.hpp"
#include "glc/rng.hpp"

namespace glc {

// Indices of the K largest entries in column c, ties toward the smaller
// index; everything else is the negative set for that class.
inline std::vector<std::size_t> select_positives(const Matrix& probs, std::size_t c,
                                                 std::size_t k) {
    if (c >= probs.cols) throw std::invalid_argument("select_positives: class out of range");
    if (k < 1 || k > probs.rows) throw std::invalid_argument("select_positives: K out of range");
    std::vector<std::size_t> order(probs.rows);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double va = probs(a, c), vb = probs(b, c);
        return va > vb || (va == vb && a < b);
    });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

// One-vs-all prototypes for a single class: one positive direction, M
// negative cluster centers, and the confidence-derived suppression weight.
struct ClassPrototypes {
    std::size_t class_index = 0;
    std::vector<double> positive;  // mean of normalized positive features
    Matrix negatives;              // M x d cluster centers of the complement
    double epsilon = 1.0;          // in [rho, 1]
};

// Builds the class-c prototypes from raw features: rows are L2-normalized,
// the top-K rows by probs column c are averaged into the positive prototype,
// and the remaining rows are clustered into M negatives. The suppression
// weight is epsilon = rho + (1 - rho)/K * sum of the positives' confidence,
// clamped into [rho, 1] against rounding.
inline ClassPrototypes build_prototypes(const Matrix& features, const Matrix& probs,
                                        std::size_t c, std::size_t k, std::size_t m, double rho,
                                        const RngState& rng) {
    if (features.rows != probs.rows)
        throw std::invalid_argument("build_prototypes: feature/prob row mismatch");
    if (!(rho > 0.0 && rho <= 1.0))
        throw std::invalid_argument("build_prototypes: rho must be in (0, 1]");
    if (m < 1) throw std::invalid_argument("build_prototypes: M must be positive");
    if (features.rows - std::min(k, features.rows) < m)
        throw std::invalid_argument("build_prototypes: not enough negatives for M clusters");

    const std::vector<std::size_t> pos = select_positives(probs, c, k);
    const Matrix normalized = normalize_rows(features);

    ClassPrototypes protos;
    protos.class_index = c;
    protos.positive.assign(features.cols, 0.0);
    double conf_sum = 0.0;
    for (std::size_t i : pos) {
        const auto row = normalized.row(i);
        for (std::size_t j = 0; j < features.cols; ++j) protos.positive[j] += row[j];
        conf_sum += probs(i, c);
    }
    for (double& v : protos.positive) v /= static_cast<double>(k);
    protos.epsilon =
        std::clamp(rho + (1.0 - rho) / static_cast<double>(k) * conf_sum, rho, 1.0);

    std::vector<std::size_t> neg;
    neg.reserve(features.rows - k);
    std::vector<bool> is_pos(features.rows, false);
    for (std::size_t i : pos) is_pos[i] = true;
    for (std::size_t i = 0; i < features.rows; ++i)
        if (!is_pos[i]) neg.push_back(i);
    protos.negatives = kmeans(take_rows(normalized, neg), m, rng).centroids;
    return protos;
}

struct MembershipDecision {
    bool claimed = false;
    double score = 0.0;  // epsilon * cos(feature, positive)
};

// A sample belongs to the class when its suppressed similarity to the
// positive prototype is at least its best similarity to any negative.
inline MembershipDecision decide_membership(std::span<const double> feature,
                                            const ClassPrototypes& protos) {
    MembershipDecision d;
    d.score = protos.epsilon * cosine_similarity(feature, protos.positive);
    double best_neg = -1.0;
    for (std::size_t i = 0; i < protos.negatives.rows; ++i)
        best_neg = std::max(best_neg, cosine_similarity(feature, protos.negatives.row(i)));
    d.claimed = d.score >= best_neg;
    return d;
}

struct PseudoLabelResult {
    Matrix targets;                         // N x C_s, rows one-hot or uniform
    std::vector<long long> assigned;        // winning class, or -1 if unclaimed
    std::vector<double> best_score;         // max suppressed similarity over classes
    std::vector<std::size_t> claim_counts;  // per class, samples it claimed
    std::size_t top_k = 0;
};

// Full labeling round: per-class prototypes and membership tests, then
// conflicts resolved by the largest suppressed score (ties toward the
// smaller class index). Samples no class claims get the uniform row 1/C_s.
// Class c clusters with the stream rng.derive(c), so per-class work is
// reproducible independently of evaluation order.
inline PseudoLabelResult assign_pseudo_labels(const Matrix& features, const Matrix& probs,
                                              std::size_t c_t_hat, double rho,
                                              const RngState& rng) {
    if (features.rows != probs.rows)
        throw std::invalid_argument("assign_pseudo_labels: feature/prob row mismatch");
    if (features.rows == 0) throw std::invalid_argument("assign_pseudo_labels: empty input");
    if (c_t_hat < 1) throw std::invalid_argument("assign_pseudo_labels: class count must be positive");

    const std::size_t n = features.rows;
    const std::size_t n_classes = probs.cols;
    const std::size_t k = std::max<std::size_t>(
        1, round_half_up(static_cast<double>(n) / static_cast<double>(c_t_hat)));
    const std::size_t m = c_t_hat;
    if (k > n || n - k < m)
        throw std::invalid_argument("assign_pseudo_labels: K and M do not fit the sample count");

    std::vector<ClassPrototypes> protos;
    protos.reserve(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c)
        protos.push_back(build_prototypes(features, probs, c, k, m, rho, rng.derive(c)));

    PseudoLabelResult res;
    res.top_k = k;
    res.targets = Matrix(n, n_classes);
    res.assigned.assign(n, -1);
    res.best_score.assign(n, -std::numeric_limits<double>::infinity());
    res.claim_counts.assign(n_classes, 0);
    for (std::size_t i = 0; i < n; ++i) {
        long long winner = -1;
        double winner_score = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n_classes; ++c) {
            const MembershipDecision d = decide_membership(features.row(i), protos[c]);
            res.best_score[i] = std::max(res.best_score[i], d.score);
            if (!d.claimed) continue;
            ++res.claim_counts[c];
            if (d.score > winner_score) {  // strict: ties keep the smaller class
                winner_score = d.score;
                winner = static_cast<long long>(c);
            }
        }
        res.assigned[i] = winner;
        if (winner >= 0) {
            res.targets(i, static_cast<std::size_t>(winner)) = 1.0;
        } else {
            for (std::size_t c = 0; c < n_classes; ++c)
                res.targets(i, c) = 1.0 / static_cast<double>(n_classes);
        }
    }
    return res;
}

}  // namespace glc
