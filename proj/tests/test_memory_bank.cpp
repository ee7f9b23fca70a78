#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "glc/matrix.hpp"
#include "glc/memory_bank.hpp"
#include "glc/model.hpp"
#include "glc/numeric.hpp"
#include "glc/rng.hpp"

using Catch::Matchers::WithinAbs;

namespace {

glc::Matrix random_unit_rows(std::size_t rows, std::size_t cols, glc::RngState& rng) {
    glc::Matrix m(rows, cols);
    for (double& v : m.data) v = rng.next_gaussian();
    return glc::normalize_rows(m);
}

glc::Matrix random_probs(std::size_t rows, std::size_t cols, glc::RngState& rng) {
    glc::Matrix m(rows, cols);
    for (double& v : m.data) v = rng.next_gaussian();
    return glc::softmax_rows(m);
}

// Full-sort reference: rank every other row by (similarity desc, index asc),
// keep the first k, average their probability rows in ascending index order.
glc::Matrix knn_oracle(const glc::MemoryBank& bank, std::span<const std::size_t> queries,
                       std::size_t k) {
    glc::Matrix out(queries.size(), bank.probs.cols);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const std::size_t qi = queries[q];
        std::vector<std::pair<double, std::size_t>> ranked;
        for (std::size_t j = 0; j < bank.features.rows; ++j) {
            if (j == qi) continue;
            ranked.emplace_back(glc::cosine_similarity(bank.features.row(qi), bank.features.row(j)),
                                j);
        }
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            return a.first > b.first || (a.first == b.first && a.second < b.second);
        });
        std::vector<std::size_t> neighbors;
        for (std::size_t i = 0; i < k; ++i) neighbors.push_back(ranked[i].second);
        std::sort(neighbors.begin(), neighbors.end());
        for (std::size_t j : neighbors)
            for (std::size_t c = 0; c < out.cols; ++c) out(q, c) += bank.probs(j, c);
        for (std::size_t c = 0; c < out.cols; ++c) out(q, c) /= static_cast<double>(k);
    }
    return out;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

}  // namespace

TEST_CASE("bank_init stores rows exactly as given") {
    glc::RngState rng(11);
    glc::Matrix features = random_unit_rows(5, 3, rng);
    for (double& v : features.data) v *= 2.0;  // non-unit rows are legal
    const glc::Matrix probs = random_probs(5, 4, rng);
    const auto bank = glc::bank_init(features, probs);
    REQUIRE(bank.features == features);
    REQUIRE(bank.probs == probs);
}

TEST_CASE("bank_init accepts a single row and uniform probabilities") {
    const auto bank = glc::bank_init(glc::Matrix::of({{1.0, 0.0}}),
                                     glc::Matrix(1, 4, 0.25));
    REQUIRE(bank.features.rows == 1);
    // no valid k exists for a one-row bank
    const std::vector<std::size_t> q{0};
    REQUIRE_THROWS_AS(glc::knn_neighbor_targets(bank, q, 1), std::invalid_argument);
}

TEST_CASE("bank_init validates its rows") {
    glc::RngState rng(2);
    const glc::Matrix features = random_unit_rows(3, 2, rng);
    const glc::Matrix probs = random_probs(3, 2, rng);

    REQUIRE_THROWS_AS(glc::bank_init(glc::Matrix(0, 2), glc::Matrix(0, 2)),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(glc::bank_init(features, random_probs(4, 2, rng)), std::invalid_argument);

    glc::Matrix zero_row = features;
    zero_row(1, 0) = 0.0;
    zero_row(1, 1) = 0.0;
    REQUIRE_THROWS_AS(glc::bank_init(zero_row, probs), std::invalid_argument);

    glc::Matrix bad_sum = probs;
    bad_sum(0, 0) += 0.1;
    REQUIRE_THROWS_AS(glc::bank_init(features, bad_sum), std::invalid_argument);

    glc::Matrix nan_feat = features;
    nan_feat(2, 1) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(glc::bank_init(nan_feat, probs), std::invalid_argument);
}

TEST_CASE("bank_update replaces exactly the named rows") {
    glc::RngState rng(7);
    auto bank = glc::bank_init(random_unit_rows(4, 3, rng), random_probs(4, 2, rng));
    const glc::MemoryBank before = bank;

    SECTION("empty update is a no-op") {
        glc::bank_update(bank, std::vector<std::size_t>{}, glc::Matrix(0, 3), glc::Matrix(0, 2));
        REQUIRE(bank.features == before.features);
        REQUIRE(bank.probs == before.probs);
    }
    SECTION("named rows change, others do not") {
        const glc::Matrix f = random_unit_rows(2, 3, rng);
        const glc::Matrix p = random_probs(2, 2, rng);
        glc::bank_update(bank, std::vector<std::size_t>{3, 1}, f, p);
        for (std::size_t j = 0; j < 3; ++j) {
            REQUIRE(bank.features(3, j) == f(0, j));
            REQUIRE(bank.features(1, j) == f(1, j));
            REQUIRE(bank.features(0, j) == before.features(0, j));
            REQUIRE(bank.features(2, j) == before.features(2, j));
        }
        for (std::size_t j = 0; j < 2; ++j) {
            REQUIRE(bank.probs(3, j) == p(0, j));
            REQUIRE(bank.probs(1, j) == p(1, j));
        }
    }
    SECTION("disjoint updates commute") {
        const glc::Matrix fa = random_unit_rows(2, 3, rng);
        const glc::Matrix pa = random_probs(2, 2, rng);
        const glc::Matrix fb = random_unit_rows(2, 3, rng);
        const glc::Matrix pb = random_probs(2, 2, rng);
        glc::MemoryBank ab = before;
        glc::bank_update(ab, std::vector<std::size_t>{0, 2}, fa, pa);
        glc::bank_update(ab, std::vector<std::size_t>{1, 3}, fb, pb);
        glc::MemoryBank ba = before;
        glc::bank_update(ba, std::vector<std::size_t>{1, 3}, fb, pb);
        glc::bank_update(ba, std::vector<std::size_t>{0, 2}, fa, pa);
        REQUIRE(ab.features == ba.features);
        REQUIRE(ab.probs == ba.probs);
    }
}

TEST_CASE("bank_update rejects malformed requests") {
    glc::RngState rng(9);
    auto bank = glc::bank_init(random_unit_rows(4, 3, rng), random_probs(4, 2, rng));
    const glc::Matrix f = random_unit_rows(2, 3, rng);
    const glc::Matrix p = random_probs(2, 2, rng);

    REQUIRE_THROWS_AS(glc::bank_update(bank, std::vector<std::size_t>{1, 1}, f, p),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(glc::bank_update(bank, std::vector<std::size_t>{1, 4}, f, p),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(glc::bank_update(bank, std::vector<std::size_t>{1}, f, p),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(
        glc::bank_update(bank, std::vector<std::size_t>{1, 2}, random_unit_rows(2, 4, rng), p),
        std::invalid_argument);
    glc::Matrix bad_p = p;
    bad_p(0, 0) += 0.5;
    REQUIRE_THROWS_AS(glc::bank_update(bank, std::vector<std::size_t>{1, 2}, f, bad_p),
                      std::invalid_argument);
}

TEST_CASE("identical probability rows are their own fixed point") {
    glc::RngState rng(21);
    const glc::Matrix features = random_unit_rows(6, 4, rng);
    glc::Matrix probs(6, 3);
    for (std::size_t i = 0; i < 6; ++i) {
        probs(i, 0) = 0.5;  // dyadic entries keep the k-row mean exact
        probs(i, 1) = 0.25;
        probs(i, 2) = 0.25;
    }
    const auto bank = glc::bank_init(features, probs);
    const glc::Matrix out = glc::knn_neighbor_targets(bank, all_indices(6), 4);
    for (std::size_t i = 0; i < 6; ++i) {
        REQUIRE(out(i, 0) == 0.5);
        REQUIRE(out(i, 1) == 0.25);
        REQUIRE(out(i, 2) == 0.25);
    }
}

TEST_CASE("nearest neighbor follows the smallest angle") {
    const double deg = std::numbers::pi / 180.0;
    const glc::Matrix features = glc::Matrix::of({
        {1.0, 0.0},
        {std::cos(deg), std::sin(deg)},
        {0.0, 1.0}});
    glc::RngState rng(4);
    const glc::Matrix probs = random_probs(3, 3, rng);
    const auto bank = glc::bank_init(features, probs);
    const glc::Matrix out = glc::knn_neighbor_targets(bank, all_indices(3), 1);
    for (std::size_t c = 0; c < 3; ++c) {
        REQUIRE(out(0, c) == probs(1, c));  // 0 deg is closest to 1 deg
        REQUIRE(out(1, c) == probs(0, c));  // 1 deg is closer to 0 than to 90
        REQUIRE(out(2, c) == probs(1, c));  // 90 deg is closest to 1 deg
    }
}

TEST_CASE("scan selection matches the full-sort oracle exactly") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        glc::RngState rng(seed);
        const std::size_t n = 10 + rng.next_below(190);
        const std::size_t k = 1 + rng.next_below(std::min<std::size_t>(n - 1, 8));
        const auto bank =
            glc::bank_init(random_unit_rows(n, 6, rng), random_probs(n, 4, rng));
        const auto queries = all_indices(n);
        const glc::Matrix out = glc::knn_neighbor_targets(bank, queries, k);
        const glc::Matrix expected = knn_oracle(bank, queries, k);
        REQUIRE(out == expected);
    }
}

TEST_CASE("all-tied similarities pick the k smallest other indices") {
    // every row points the same way at a different power-of-two magnitude, so
    // all pairwise similarities are exactly 1 and only the tie rule decides
    const std::size_t n = 6, k = 4;
    glc::Matrix features(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        features(i, 0) = 3.0 * static_cast<double>(1ULL << i);
        features(i, 2) = 4.0 * static_cast<double>(1ULL << i);
    }
    glc::RngState rng(13);
    const glc::Matrix probs = random_probs(n, 2, rng);
    const auto bank = glc::bank_init(features, probs);
    const glc::Matrix out = glc::knn_neighbor_targets(bank, all_indices(n), k);
    for (std::size_t qi = 0; qi < n; ++qi) {
        glc::Matrix expected(1, 2);
        std::size_t taken = 0;
        for (std::size_t j = 0; j < n && taken < k; ++j) {
            if (j == qi) continue;
            for (std::size_t c = 0; c < 2; ++c) expected(0, c) += probs(j, c);
            ++taken;
        }
        for (std::size_t c = 0; c < 2; ++c) {
            expected(0, c) /= static_cast<double>(k);
            REQUIRE(out(qi, c) == expected(0, c));
        }
    }
}

TEST_CASE("neighbor target rows are probability rows") {
    glc::RngState rng(31);
    const auto bank = glc::bank_init(random_unit_rows(40, 5, rng), random_probs(40, 6, rng));
    const glc::Matrix out = glc::knn_neighbor_targets(bank, all_indices(40), 4);
    for (std::size_t i = 0; i < out.rows; ++i) {
        double sum = 0.0;
        for (std::size_t c = 0; c < out.cols; ++c) {
            REQUIRE(out(i, c) >= 0.0);
            sum += out(i, c);
        }
        REQUIRE_THAT(sum, WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("knn_neighbor_targets validates k and query indices") {
    glc::RngState rng(5);
    const auto bank = glc::bank_init(random_unit_rows(5, 3, rng), random_probs(5, 2, rng));
    const auto queries = all_indices(5);
    REQUIRE_THROWS_AS(glc::knn_neighbor_targets(bank, queries, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(glc::knn_neighbor_targets(bank, queries, 5), std::invalid_argument);
    const std::vector<std::size_t> bad{5};
    REQUIRE_THROWS_AS(glc::knn_neighbor_targets(bank, bad, 2), std::invalid_argument);
}

TEST_CASE("local loss is the soft cross-entropy of predictions vs targets") {
    glc::RngState rng(17);
    const glc::Matrix probs = random_probs(12, 4, rng);
    const glc::Matrix targets = random_probs(12, 4, rng);
    REQUIRE(glc::local_loss(probs, targets) == glc::soft_ce_loss(probs, targets));
}
