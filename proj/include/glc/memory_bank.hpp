#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "glc/matrix.hpp"
#include "glc/model.hpp"
#include "glc/numeric.hpp"

namespace glc {

// Per-sample cache of the most recent (L2-normalized feature, probability)
// pair; row i always refers to target sample i.
struct MemoryBank {
    Matrix features;
    Matrix probs;
};

namespace detail {

inline void check_bank_rows(const Matrix& features, const Matrix& probs,
                            const char* who) {
    if (features.rows != probs.rows)
        throw std::invalid_argument(std::string(who) + ": feature/prob row mismatch");
    if (!features.all_finite() || !probs.all_finite())
        throw std::invalid_argument(std::string(who) + ": non-finite entry");
    for (std::size_t i = 0; i < features.rows; ++i) {
        if (l2_norm(features.row(i)) == 0.0)
            throw std::invalid_argument(std::string(who) + ": zero feature row");
        double sum = 0.0;
        for (double p : probs.row(i)) sum += p;
        if (std::abs(sum - 1.0) > 1e-6)
            throw std::invalid_argument(std::string(who) + ": prob rows must sum to 1");
    }
}

}  // namespace detail

// Rows are stored exactly as given (the adaptation loop passes L2-normalized
// features and softmax rows); similarity queries only need nonzero rows.
inline MemoryBank bank_init(Matrix features, Matrix probs) {
    detail::check_bank_rows(features, probs, "bank_init");
    if (features.rows == 0) throw std::invalid_argument("bank_init: empty bank");
    return MemoryBank{std::move(features), std::move(probs)};
}

inline void bank_update(MemoryBank& bank, std::span<const std::size_t> indices,
                        const Matrix& features, const Matrix& probs) {
    if (features.rows != indices.size() || probs.rows != indices.size())
        throw std::invalid_argument("bank_update: row count does not match index count");
    if (features.cols != bank.features.cols || probs.cols != bank.probs.cols)
        throw std::invalid_argument("bank_update: column mismatch with bank");
    detail::check_bank_rows(features, probs, "bank_update");
    std::vector<bool> seen(bank.features.rows, false);
    for (std::size_t idx : indices) {
        if (idx >= bank.features.rows) throw std::invalid_argument("bank_update: index out of range");
        if (seen[idx]) throw std::invalid_argument("bank_update: duplicate index");
        seen[idx] = true;
    }
    for (std::size_t r = 0; r < indices.size(); ++r) {
        std::copy_n(features.data.data() + r * features.cols, features.cols,
                    bank.features.data.data() + indices[r] * bank.features.cols);
        std::copy_n(probs.data.data() + r * probs.cols, probs.cols,
                    bank.probs.data.data() + indices[r] * bank.probs.cols);
    }
}

// For each query row: the k bank rows most cosine-similar to it, excluding
// the row itself, ties toward the smaller index; the result row is the mean
// of those neighbors' probability rows (accumulated in ascending index
// order, so it matches a full-sort selection bit for bit).
inline Matrix knn_neighbor_targets(const MemoryBank& bank,
                                   std::span<const std::size_t> query_indices, std::size_t k) {
    const std::size_t n = bank.features.rows;
    if (k < 1 || k >= n) throw std::invalid_argument("knn_neighbor_targets: k must be in [1, N-1]");
    Matrix out(query_indices.size(), bank.probs.cols);
    std::vector<std::pair<double, std::size_t>> best;  // (similarity, index), best first
    for (std::size_t q = 0; q < query_indices.size(); ++q) {
        const std::size_t qi = query_indices[q];
        if (qi >= n) throw std::invalid_argument("knn_neighbor_targets: query index out of range");
        const auto query = bank.features.row(qi);
        best.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == qi) continue;
            const double sim = cosine_similarity(query, bank.features.row(j));
            if (best.size() == k && sim <= best.back().first) continue;  // ties lose to incumbents
            std::size_t pos = best.size();
            while (pos > 0 && best[pos - 1].first < sim) --pos;
            best.insert(best.begin() + static_cast<std::ptrdiff_t>(pos), {sim, j});
            if (best.size() > k) best.pop_back();
        }
        std::vector<std::size_t> neighbors(best.size());
        for (std::size_t i = 0; i < best.size(); ++i) neighbors[i] = best[i].second;
        std::sort(neighbors.begin(), neighbors.end());
        for (std::size_t j : neighbors)
            for (std::size_t c = 0; c < out.cols; ++c) out(q, c) += bank.probs(j, c);
        for (std::size_t c = 0; c < out.cols; ++c) out(q, c) /= static_cast<double>(k);
    }
    return out;
}

// Consensus objective: predictions pulled toward the neighborhood-mean
// targets. Same definition as the soft cross-entropy.
inline double local_loss(const Matrix& batch_probs, const Matrix& neighbor_targets) {
    return soft_ce_loss(batch_probs, neighbor_targets);
}

}  // namespace glc
