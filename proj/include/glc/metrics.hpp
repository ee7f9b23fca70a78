#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "glc/matrix.hpp"
#include "glc/numeric.hpp"

namespace glc {

// Prediction value for samples rejected as not belonging to any source class.
inline constexpr long long kUnknownLabel = -1;

// Shannon entropy of the row divided by log C, so the result lives in [0, 1]
// (clamped against rounding); 0 * log 0 counts as 0. Natural log; the
// normalization cancels the base.
inline double normalized_entropy(std::span<const double> prob_row) {
    if (prob_row.size() < 2) throw std::invalid_argument("normalized_entropy: need at least 2 classes");
    double sum = 0.0;
    for (double p : prob_row) {
        if (!(p >= 0.0)) throw std::invalid_argument("normalized_entropy: negative or NaN entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("normalized_entropy: row does not sum to 1");
    double h = 0.0;
    for (double p : prob_row)
        if (p > 0.0) h -= p * std::log(p);
    return std::clamp(h / std::log(static_cast<double>(prob_row.size())), 0.0, 1.0);
}

struct PredictionOutcome {
    std::vector<long long> predicted;  // class index, or kUnknownLabel
    std::vector<double> entropy;       // normalized entropy per sample
};

// A row is rejected as unknown when its normalized entropy reaches omega;
// otherwise it gets the argmax class (ties toward the smaller index).
inline PredictionOutcome classify_with_rejection(const Matrix& probs, double omega) {
    PredictionOutcome out;
    out.predicted.resize(probs.rows);
    out.entropy.resize(probs.rows);
    for (std::size_t i = 0; i < probs.rows; ++i) {
        const double h = normalized_entropy(probs.row(i));
        out.entropy[i] = h;
        out.predicted[i] = h >= omega ? kUnknownLabel
                                      : static_cast<long long>(argmax_index(probs.row(i)));
    }
    return out;
}

struct HScore {
    double h = 0.0;
    double acc_known = 0.0;
    double acc_unknown = 0.0;
};

// Known ground truth means label < n_source_classes; those count as correct
// only on an exact class match. Unknowns count as correct when rejected.
// With class_averaged, known accuracy is the mean of per-class accuracies
// over the known classes present in the ground truth.
inline HScore h_score(std::span<const long long> predicted, std::span<const long long> labels,
                      std::size_t n_source_classes, bool class_averaged = false) {
    if (predicted.size() != labels.size()) throw std::invalid_argument("h_score: length mismatch");
    if (n_source_classes == 0) throw std::invalid_argument("h_score: empty known class set");

    std::vector<std::size_t> class_total(n_source_classes, 0), class_hit(n_source_classes, 0);
    std::size_t known = 0, known_hit = 0, unknown = 0, unknown_hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const long long y = labels[i];
        if (y < 0) throw std::invalid_argument("h_score: negative ground-truth label");
        if (static_cast<std::size_t>(y) < n_source_classes) {
            ++known;
            ++class_total[static_cast<std::size_t>(y)];
            if (predicted[i] == y) {
                ++known_hit;
                ++class_hit[static_cast<std::size_t>(y)];
            }
        } else {
            ++unknown;
            if (predicted[i] == kUnknownLabel) ++unknown_hit;
        }
    }
    if (known == 0 || unknown == 0)
        throw std::invalid_argument("h_score: needs both known and unknown samples");

    HScore s;
    if (class_averaged) {
        double acc_sum = 0.0;
        std::size_t present = 0;
        for (std::size_t c = 0; c < n_source_classes; ++c) {
            if (class_total[c] == 0) continue;
            ++present;
            acc_sum += static_cast<double>(class_hit[c]) / static_cast<double>(class_total[c]);
        }
        s.acc_known = acc_sum / static_cast<double>(present);
    } else {
        s.acc_known = static_cast<double>(known_hit) / static_cast<double>(known);
    }
    s.acc_unknown = static_cast<double>(unknown_hit) / static_cast<double>(unknown);
    const double ab = s.acc_known + s.acc_unknown;
    s.h = ab > 0.0 ? 2.0 * s.acc_known * s.acc_unknown / ab : 0.0;
    return s;
}

// Scenario-agnostic report: fields whose partition is empty come back NaN
// instead of failing, so closed- and partial-set runs can share the code
// path with open-set ones.
struct EvalSummary {
    double overall = std::numeric_limits<double>::quiet_NaN();
    double acc_known = std::numeric_limits<double>::quiet_NaN();
    double acc_unknown = std::numeric_limits<double>::quiet_NaN();
    double h = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_known = 0;
    std::size_t n_unknown = 0;
};

inline EvalSummary summarize_outcome(std::span<const long long> predicted,
                                     std::span<const long long> labels,
                                     std::size_t n_source_classes, bool class_averaged = false) {
    EvalSummary s;
    std::size_t known_hit = 0, unknown_hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < n_source_classes) {
            ++s.n_known;
            known_hit += (predicted[i] == labels[i]);
        } else {
            ++s.n_unknown;
            unknown_hit += (predicted[i] == kUnknownLabel);
        }
    }
    if (s.n_known > 0 && s.n_unknown > 0) {
        const HScore hs = h_score(predicted, labels, n_source_classes, class_averaged);
        s.acc_known = hs.acc_known;
        s.acc_unknown = hs.acc_unknown;
        s.h = hs.h;
    } else if (s.n_known > 0) {
        s.acc_known = static_cast<double>(known_hit) / static_cast<double>(s.n_known);
    } else if (s.n_unknown > 0) {
        s.acc_unknown = static_cast<double>(unknown_hit) / static_cast<double>(s.n_unknown);
    }
    if (!labels.empty()) {
        std::size_t hit = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) hit += (predicted[i] == labels[i]);
        s.overall = static_cast<double>(hit) / static_cast<double>(labels.size());
    }
    return s;
}

// Plain accuracy over every sample; a rejected sample can never match.
inline double overall_accuracy(std::span<const long long> predicted,
                               std::span<const long long> labels) {
    if (predicted.size() != labels.size())
        throw std::invalid_argument("overall_accuracy: length mismatch");
    if (labels.empty()) throw std::invalid_argument("overall_accuracy: empty input");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hit += (predicted[i] == labels[i]);
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace glc
