#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "glc/global_pseudo.hpp"
#include "glc/kmeans.hpp"
#include "glc/matrix.hpp"
#include "glc/numeric.hpp"
#include "glc/rng.hpp"

using Catch::Matchers::WithinAbs;

namespace {

glc::Matrix random_matrix(std::size_t rows, std::size_t cols, glc::RngState& rng) {
    glc::Matrix m(rows, cols);
    for (double& v : m.data) v = rng.next_gaussian();
    return m;
}

glc::Matrix random_probs(std::size_t rows, std::size_t cols, glc::RngState& rng) {
    return glc::softmax_rows(random_matrix(rows, cols, rng));
}

// Straight-line re-implementation of the labeling round: per-class top-K by
// a plain sort, hand-rolled normalization, prototype mean, suppression
// weight, and raw-cosine decisions, composed sample by sample. Only the
// k-means sub-operation is shared with the library.
glc::Matrix pseudo_label_oracle(const glc::Matrix& features, const glc::Matrix& probs,
                                std::size_t c_t_hat, double rho, const glc::RngState& rng) {
    const std::size_t n = features.rows, d = features.cols, cs = probs.cols;
    const std::size_t k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(static_cast<double>(n) / c_t_hat + 0.5)));
    const std::size_t m = c_t_hat;

    glc::Matrix unit(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) norm += features(i, j) * features(i, j);
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < d; ++j) unit(i, j) = features(i, j) / norm;
    }
    auto cos_to = [&](std::span<const double> f, std::span<const double> p) {
        double dotv = 0.0, nf = 0.0, np = 0.0;
        for (std::size_t j = 0; j < f.size(); ++j) dotv += f[j] * p[j];
        nf = glc::l2_norm(f);
        np = glc::l2_norm(p);
        return std::clamp(dotv / (nf * np), -1.0, 1.0);
    };

    std::vector<std::vector<double>> pos_proto(cs);
    std::vector<glc::Matrix> neg_protos(cs);
    std::vector<double> epsilon(cs);
    for (std::size_t c = 0; c < cs; ++c) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return probs(a, c) > probs(b, c);
        });
        std::vector<std::size_t> pos(order.begin(), order.begin() + k);
        std::sort(pos.begin(), pos.end());

        pos_proto[c].assign(d, 0.0);
        double conf = 0.0;
        for (std::size_t i : pos) {
            for (std::size_t j = 0; j < d; ++j) pos_proto[c][j] += unit(i, j);
            conf += probs(i, c);
        }
        for (double& v : pos_proto[c]) v /= static_cast<double>(k);
        epsilon[c] = std::clamp(rho + (1.0 - rho) / static_cast<double>(k) * conf, rho, 1.0);

        std::vector<std::size_t> neg;
        std::vector<bool> is_pos(n, false);
        for (std::size_t i : pos) is_pos[i] = true;
        for (std::size_t i = 0; i < n; ++i)
            if (!is_pos[i]) neg.push_back(i);
        neg_protos[c] = glc::kmeans(glc::take_rows(unit, neg), m, rng.derive(c)).centroids;
    }

    glc::Matrix targets(n, cs);
    for (std::size_t i = 0; i < n; ++i) {
        long long winner = -1;
        double best = -2.0;
        for (std::size_t c = 0; c < cs; ++c) {
            const double score = epsilon[c] * cos_to(features.row(i), pos_proto[c]);
            double max_neg = -1.0;
            for (std::size_t t = 0; t < neg_protos[c].rows; ++t)
                max_neg = std::max(max_neg, cos_to(features.row(i), neg_protos[c].row(t)));
            if (score >= max_neg && score > best) {
                best = score;
                winner = static_cast<long long>(c);
            }
        }
        if (winner >= 0) targets(i, static_cast<std::size_t>(winner)) = 1.0;
        else
            for (std::size_t c = 0; c < cs; ++c) targets(i, c) = 1.0 / static_cast<double>(cs);
    }
    return targets;
}

}  // namespace

TEST_CASE("select_positives picks the top-K column entries") {
    glc::Matrix probs(3, 1);
    probs(0, 0) = 0.9;
    probs(1, 0) = 0.1;
    probs(2, 0) = 0.5;
    REQUIRE(glc::select_positives(probs, 0, 1) == std::vector<std::size_t>{0});
    REQUIRE(glc::select_positives(probs, 0, 3) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("select_positives breaks ties toward the smaller index") {
    glc::Matrix probs(3, 1);
    probs(0, 0) = 0.3;
    probs(1, 0) = 0.3;
    probs(2, 0) = 0.1;
    REQUIRE(glc::select_positives(probs, 0, 1) == std::vector<std::size_t>{0});
    REQUIRE(glc::select_positives(probs, 0, 2) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("select_positives validates K and the class index") {
    glc::Matrix probs(3, 2, 0.5);
    REQUIRE_THROWS_AS(glc::select_positives(probs, 0, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(glc::select_positives(probs, 0, 4), std::invalid_argument);
    REQUIRE_THROWS_AS(glc::select_positives(probs, 2, 1), std::invalid_argument);
}

TEST_CASE("suppression weight follows the confidence formula") {
    glc::RngState rng(3);
    glc::Matrix features = random_matrix(6, 3, rng);
    glc::Matrix probs(6, 1);

    SECTION("all positive confidences 1 give epsilon exactly 1") {
        probs(0, 0) = 1.0;
        probs(1, 0) = 1.0;
        const auto p = glc::build_prototypes(features, probs, 0, 2, 3, 0.75, rng.derive(1));
        REQUIRE(p.epsilon == 1.0);
    }
    SECTION("all positive confidences 0 give the floor rho") {
        const auto p = glc::build_prototypes(features, probs, 0, 2, 3, 0.75, rng.derive(1));
        REQUIRE(p.epsilon == 0.75);
    }
    SECTION("mean confidence 0.5 at rho 0.75 gives 0.875") {
        probs(0, 0) = 0.5;
        probs(1, 0) = 0.5;
        const auto p = glc::build_prototypes(features, probs, 0, 2, 3, 0.75, rng.derive(1));
        REQUIRE(p.epsilon == 0.875);
    }
    SECTION("epsilon never leaves [rho, 1] and grows with confidence") {
        glc::RngState prng(17);
        double prev = -1.0;
        for (int step = 0; step <= 10; ++step) {
            const double conf = step / 10.0;
            glc::Matrix pr(6, 1);
            pr(0, 0) = conf;
            pr(1, 0) = conf;
            const auto p = glc::build_prototypes(features, pr, 0, 2, 3, 0.6, prng.derive(step));
            REQUIRE(p.epsilon >= 0.6);
            REQUIRE(p.epsilon <= 1.0);
            REQUIRE(p.epsilon >= prev);
            prev = p.epsilon;
        }
    }
}

TEST_CASE("build_prototypes averages normalized positives and clusters the rest") {
    glc::Matrix features = glc::Matrix::of({
        {2.0, 0.0}, {0.0, 3.0}, {-5.0, 0.0}, {0.0, -1.0}, {4.0, 0.0}});
    glc::Matrix probs(5, 1);
    probs(0, 0) = 0.9;  // positives: rows 0 and 4, both pointing along +x
    probs(4, 0) = 0.8;
    const auto p = glc::build_prototypes(features, probs, 0, 2, 2, 0.75, glc::RngState(5));
    REQUIRE_THAT(p.positive[0], WithinAbs(1.0, 1e-15));
    REQUIRE_THAT(p.positive[1], WithinAbs(0.0, 1e-15));
    REQUIRE(p.negatives.rows == 2);
    REQUIRE(p.class_index == 0);
    REQUIRE_THAT(p.epsilon, WithinAbs(0.75 + 0.25 * 0.85, 1e-15));
}

TEST_CASE("build_prototypes needs enough negatives") {
    glc::RngState rng(1);
    glc::Matrix features = random_matrix(6, 3, rng);
    glc::Matrix probs(6, 1, 0.5);
    REQUIRE_THROWS_AS(glc::build_prototypes(features, probs, 0, 4, 3, 0.75, rng.derive(1)),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(glc::build_prototypes(features, probs, 0, 2, 3, 0.0, rng.derive(1)),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(glc::build_prototypes(features, probs, 0, 2, 3, 1.5, rng.derive(1)),
                      std::invalid_argument);
}

TEST_CASE("membership decisions follow the suppressed-similarity rule") {
    glc::ClassPrototypes protos;
    protos.positive = {1.0, 0.0};
    protos.negatives = glc::Matrix::of({{0.0, 1.0}});
    protos.epsilon = 1.0;

    SECTION("feature on the positive prototype is claimed with score 1") {
        const auto d = glc::decide_membership(std::vector<double>{1.0, 0.0}, protos);
        REQUIRE(d.claimed);
        REQUIRE_THAT(d.score, WithinAbs(1.0, 1e-15));
    }
    SECTION("feature on a negative prototype is not claimed") {
        const auto d = glc::decide_membership(std::vector<double>{0.0, 1.0}, protos);
        REQUIRE_FALSE(d.claimed);
        REQUIRE_THAT(d.score, WithinAbs(0.0, 1e-15));
    }
    SECTION("suppression can push a borderline score below the best negative") {
        // cos(f, p) = 0.9 suppressed by 0.75 gives 0.675, which loses to a
        // negative at cosine 0.7; the claim is rejected.
        glc::ClassPrototypes tight;
        tight.positive = {0.9, std::sqrt(1.0 - 0.81)};
        tight.negatives = glc::Matrix::of({{0.7, -std::sqrt(1.0 - 0.49)}});
        tight.epsilon = 0.75;
        const auto d = glc::decide_membership(std::vector<double>{1.0, 0.0}, tight);
        REQUIRE_THAT(d.score, WithinAbs(0.675, 1e-12));
        REQUIRE_FALSE(d.claimed);
        // with the best negative at 0.6 instead, the same score wins
        tight.negatives = glc::Matrix::of({{0.6, -std::sqrt(1.0 - 0.36)}});
        const auto d2 = glc::decide_membership(std::vector<double>{1.0, 0.0}, tight);
        REQUIRE(d2.claimed);
    }
    SECTION("zero feature is rejected") {
        REQUIRE_THROWS_AS(glc::decide_membership(std::vector<double>{0.0, 0.0}, protos),
                          std::invalid_argument);
    }
}

TEST_CASE("single-class labeling claims every aligned sample") {
    // all rows share one direction, so positives, negatives, and queries all
    // collapse onto it; every sample is claimed by the only class
    glc::Matrix features(8, 2);
    for (std::size_t i = 0; i < 8; ++i) features(i, 0) = static_cast<double>(1 << i);
    glc::Matrix probs(8, 1, 1.0);
    const auto res = glc::assign_pseudo_labels(features, probs, 2, 0.75, glc::RngState(3));
    REQUIRE(res.top_k == 4);
    for (std::size_t i = 0; i < 8; ++i) {
        REQUIRE(res.assigned[i] == 0);
        REQUIRE(res.targets(i, 0) == 1.0);
    }
    REQUIRE(res.claim_counts[0] == 8);
}

TEST_CASE("three orthogonal blobs get one-hot, one-hot, uniform") {
    // blobs A -> class 0, B -> class 1, C orthogonal to both; C lands on its
    // own negative prototype for each class and stays unclaimed
    const std::size_t n = 12, d = 3;
    glc::Matrix features(n, d);
    glc::Matrix probs(n, 2);
    for (std::size_t i = 0; i < 4; ++i) {  // A along +x
        features(i, 0) = static_cast<double>(i + 1);
        probs(i, 0) = 1.0;
    }
    for (std::size_t i = 4; i < 8; ++i) {  // B along +y
        features(i, 1) = static_cast<double>(i);
        probs(i, 1) = 1.0;
    }
    for (std::size_t i = 8; i < 12; ++i) {  // C along +z
        features(i, 2) = static_cast<double>(i);
        probs(i, 0) = 0.5;
        probs(i, 1) = 0.5;
    }
    const auto res = glc::assign_pseudo_labels(features, probs, 3, 0.75, glc::RngState(7));
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(res.targets(i, 0) == 1.0);
    for (std::size_t i = 4; i < 8; ++i) REQUIRE(res.targets(i, 1) == 1.0);
    for (std::size_t i = 8; i < 12; ++i) {
        REQUIRE(res.assigned[i] == -1);
        REQUIRE(res.targets(i, 0) == 0.5);
        REQUIRE(res.targets(i, 1) == 0.5);
    }

    const glc::Matrix oracle = pseudo_label_oracle(features, probs, 3, 0.75, glc::RngState(7));
    REQUIRE(res.targets == oracle);
}

TEST_CASE("assignment matches the straight-line oracle on random instances") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        glc::RngState rng(seed);
        const std::size_t n = 24 + rng.next_below(30);
        const std::size_t cs = 2 + rng.next_below(3);
        const std::size_t ct = 2 + rng.next_below(3);
        const glc::Matrix features = random_matrix(n, 4, rng);
        const glc::Matrix probs = random_probs(n, cs, rng);
        const auto res = glc::assign_pseudo_labels(features, probs, ct, 0.75, rng.derive(2));
        const glc::Matrix oracle = pseudo_label_oracle(features, probs, ct, 0.75, rng.derive(2));
        REQUIRE(res.targets == oracle);
    }
}

TEST_CASE("every pseudo-label row is one-hot or uniform") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        glc::RngState rng(seed);
        const std::size_t n = 20 + rng.next_below(40);
        const std::size_t cs = 2 + rng.next_below(4);
        const std::size_t ct = 2 + rng.next_below(4);
        const glc::Matrix features = random_matrix(n, 5, rng);
        const glc::Matrix probs = random_probs(n, cs, rng);
        const auto res = glc::assign_pseudo_labels(features, probs, ct, 0.75, rng.derive(1));
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            std::size_t ones = 0, uniforms = 0;
            for (std::size_t c = 0; c < cs; ++c) {
                const double v = res.targets(i, c);
                sum += v;
                ones += (v == 1.0);
                uniforms += (v == 1.0 / static_cast<double>(cs));
            }
            REQUIRE_THAT(sum, WithinAbs(1.0, 1e-12));
            const bool one_hot = ones == 1 && res.assigned[i] >= 0;
            const bool uniform = uniforms == cs && res.assigned[i] == -1;
            REQUIRE((one_hot || uniform));
        }
    }
}

TEST_CASE("positive scaling of all features leaves assignments bit-identical") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        glc::RngState rng(seed);
        const std::size_t n = 30;
        const glc::Matrix features = random_matrix(n, 4, rng);
        const glc::Matrix probs = random_probs(n, 3, rng);
        const auto base = glc::assign_pseudo_labels(features, probs, 3, 0.75, rng.derive(4));
        for (const double scale : {4.0, 0.25}) {
            glc::Matrix scaled = features;
            for (double& v : scaled.data) v *= scale;
            const auto res = glc::assign_pseudo_labels(scaled, probs, 3, 0.75, rng.derive(4));
            REQUIRE(res.targets == base.targets);
            REQUIRE(res.assigned == base.assigned);
        }
    }
}

TEST_CASE("rho=1 reproduces the unsuppressed decision rule") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        glc::RngState rng(seed);
        const std::size_t n = 30;
        const glc::Matrix features = random_matrix(n, 4, rng);
        const glc::Matrix probs = random_probs(n, 3, rng);
        const auto res = glc::assign_pseudo_labels(features, probs, 3, 1.0, rng.derive(6));

        // unsuppressed rule: claimed iff raw cos(f, p_c) >= max cos(f, n)
        const std::size_t k = res.top_k;
        glc::Matrix expected(n, 3);
        std::vector<glc::ClassPrototypes> protos;
        for (std::size_t c = 0; c < 3; ++c)
            protos.push_back(
                glc::build_prototypes(features, probs, c, k, 3, 1.0, rng.derive(6).derive(c)));
        for (std::size_t c = 0; c < 3; ++c) REQUIRE(protos[c].epsilon == 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            long long winner = -1;
            double best = -2.0;
            for (std::size_t c = 0; c < 3; ++c) {
                const double raw = glc::cosine_similarity(features.row(i), protos[c].positive);
                double max_neg = -1.0;
                for (std::size_t t = 0; t < protos[c].negatives.rows; ++t)
                    max_neg = std::max(max_neg, glc::cosine_similarity(
                                                    features.row(i), protos[c].negatives.row(t)));
                if (raw >= max_neg && raw > best) {
                    best = raw;
                    winner = static_cast<long long>(c);
                }
            }
            if (winner >= 0) expected(i, static_cast<std::size_t>(winner)) = 1.0;
            else
                for (std::size_t c = 0; c < 3; ++c) expected(i, c) = 1.0 / 3.0;
        }
        REQUIRE(res.targets == expected);
    }
}

TEST_CASE("assign_pseudo_labels rejects infeasible K and M") {
    glc::RngState rng(2);
    const glc::Matrix features = random_matrix(6, 3, rng);
    const glc::Matrix probs = random_probs(6, 2, rng);
    REQUIRE_THROWS_AS(glc::assign_pseudo_labels(features, probs, 6, 0.75, rng.derive(1)),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(glc::assign_pseudo_labels(features, probs, 0, 0.75, rng.derive(1)),
                      std::invalid_argument);
}
