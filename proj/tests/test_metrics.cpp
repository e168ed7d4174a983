#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ftsne/ftsne.hpp"
#include "test_support.hpp"

using namespace ftsne;
using ftsne::check::random_matrix;

namespace {

Matrix uniform_rows(std::size_t m) {
    Matrix out(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            out(i, j) = i == j ? 0.0 : 1.0 / static_cast<double>(m - 1);
        }
    }
    return out;
}

// Explicit per-neighbor vectors of one point, summed term by term.
double explicit_binary_divergence(const Divergence& div, std::size_t m, std::size_t r, std::size_t k, std::size_t tp, double delta) {
    std::vector<double> p(m - 1), q(m - 1);
    // Neighbors 0..tp-1 are both, then relevant-only, then retrieved-only, then neither.
    for (std::size_t j = 0; j < m - 1; ++j) {
        const bool relevant = j < r;
        const bool retrieved = j < tp || (j >= r && j < r + k - tp);
        p[j] = relevant ? (1 - delta) / static_cast<double>(r) : delta / static_cast<double>(m - r - 1);
        q[j] = retrieved ? (1 - delta) / static_cast<double>(k) : delta / static_cast<double>(m - k - 1);
    }
    double total = 0;
    for (std::size_t j = 0; j < m - 1; ++j) {
        total += q[j] * f(div, p[j] / q[j]);
    }
    return total;
}

}

TEST(Threshold, Extremes) {
    const auto sim = uniform_rows(3);
    for (const auto& set : threshold_neighbors(sim, 0.6)) {
        EXPECT_TRUE(set.empty());
    }
    for (const auto& set : threshold_neighbors(sim, 1e-300)) {
        EXPECT_EQ(set.size(), 2u);
    }
    const auto hand = threshold_neighbors(sim, 0.4);
    EXPECT_EQ(hand[0], (std::vector<std::size_t>{ 1, 2 }));
    EXPECT_EQ(hand[2], (std::vector<std::size_t>{ 0, 1 }));
    EXPECT_THROW(threshold_neighbors(sim, 0.0), ParameterError);
}

TEST(Threshold, IdenticalSpacesArePerfect) {
    std::mt19937_64 rng(1);
    const auto y = random_matrix(20, 2, rng);
    const auto q = student_t_conditional(y);
    const auto grid = epsilon_grid(q, q, 30);
    const auto curves = pr_curve_xy(q, q, grid);
    for (std::size_t e = 0; e < grid.size(); ++e) {
        EXPECT_EQ(curves.precision[e], 1.0);
        EXPECT_EQ(curves.recall[e], 1.0);
    }
    EXPECT_EQ(curves.max_fscore, 1.0);
}

TEST(Threshold, DisjointNeighborhoods) {
    // Pairs {0,1},{2,3} are neighbors in X; {0,2},{1,3} in Y.
    Matrix x(4, 4), y(4, 4);
    x(0, 1) = x(1, 0) = x(2, 3) = x(3, 2) = 1;
    y(0, 2) = y(2, 0) = y(1, 3) = y(3, 1) = 1;
    const double eps[] = { 0.5 };
    const auto curves = pr_curve_xy(x, y, eps);
    EXPECT_EQ(curves.precision[0], 0.0);
    EXPECT_EQ(curves.recall[0], 0.0);
    EXPECT_EQ(curves.fscore[0], 0.0);
}

TEST(Threshold, MatchesBruteForceXY) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        Dataset data{ random_matrix(30, 4, rng), std::nullopt };
        const auto p = conditional_affinities(data, 6).rows;
        const auto q = student_t_conditional(random_matrix(30, 2, rng));
        const auto grid = epsilon_grid(p, q, 25);
        const auto curves = pr_curve_xy(p, q, grid);
        const auto naive = check::naive_threshold_curve(p, q, grid);
        EXPECT_EQ(curves.precision, naive.precision);
        EXPECT_EQ(curves.recall, naive.recall);
    }
}

TEST(Threshold, MatchesBruteForceZYWithExclusions) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> cls(0, 5);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix labels(25, 1);
        for (auto& v : labels.values()) {
            v = cls(rng);
        }
        labels(24, 0) = 99;
        const auto r = latent_affinity(labels, LatentKind::discrete);
        ASSERT_TRUE(r.excluded[24]);
        const auto q = student_t_conditional(random_matrix(25, 2, rng));
        const auto grid = epsilon_grid(r.rows, q, 20);
        const auto curves = pr_curve_zy(r, q, grid);
        const auto naive = check::naive_threshold_curve(r.rows, q, grid, r.excluded);
        EXPECT_EQ(curves.precision, naive.precision);
        EXPECT_EQ(curves.recall, naive.recall);
    }
}

TEST(Threshold, AllExcludedIsError) {
    Matrix labels(3, 1);
    labels(1, 0) = 1;
    labels(2, 0) = 2;
    const auto r = latent_affinity(labels, LatentKind::discrete);
    const double eps[] = { 0.1 };
    EXPECT_THROW(pr_curve_zy(r, uniform_rows(3), eps), ParameterError);
}

TEST(Threshold, EpsilonGridSpansPercentiles) {
    std::mt19937_64 rng(4);
    const auto q = student_t_conditional(random_matrix(15, 2, rng));
    const auto grid = epsilon_grid(q, q, 50);
    ASSERT_EQ(grid.size(), 50u);
    for (std::size_t k = 1; k < grid.size(); ++k) {
        EXPECT_GT(grid[k], grid[k - 1]);
    }
    EXPECT_THROW(epsilon_grid(Matrix(3, 3), Matrix(3, 3)), ParameterError);
}

TEST(Threshold, EpsilonGridUsesReferencePercentiles) {
    std::mt19937_64 rng(14);
    Dataset data{ random_matrix(21, 3, rng), std::nullopt };
    const auto p = conditional_affinities(data, 5).rows;
    const auto q = student_t_conditional(random_matrix(21, 2, rng));
    std::vector<double> pool;
    for (std::size_t i = 0; i < 21; ++i) {
        for (std::size_t j = 0; j < 21; ++j) {
            if (i != j && p(i, j) > 0) {
                pool.push_back(p(i, j));
            }
        }
    }
    std::sort(pool.begin(), pool.end());
    // 420 entries: floor(0.01 * 419) = 4, floor(0.99 * 419) = 414.
    ASSERT_EQ(pool.size(), 420u);
    const auto grid = epsilon_grid(p, q, 10);
    EXPECT_EQ(grid.front(), pool[4]);
    EXPECT_EQ(grid.back(), pool[414]);

    // Class-indicator rows have a single positive value; the retrieved matrix sets the range.
    Matrix labels(20, 1);
    for (std::size_t i = 0; i < 20; ++i) {
        labels(i, 0) = static_cast<double>(i % 2);
    }
    const auto r = latent_affinity(labels, LatentKind::discrete);
    const auto q20 = student_t_conditional(random_matrix(20, 2, rng));
    EXPECT_EQ(epsilon_grid(r.rows, q20, 10), epsilon_grid(q20, q20, 10));
}

TEST(FScore, Values) {
    EXPECT_EQ(f_score(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(f_score(1, 0.5), 2.0 / 3);
}

TEST(Knn, IsometryIsPerfect) {
    std::mt19937_64 rng(5);
    const auto x = random_matrix(25, 2, rng);
    Matrix y(25, 2);
    for (std::size_t i = 0; i < 25; ++i) {
        y(i, 0) = -x(i, 1) + 4;
        y(i, 1) = x(i, 0) - 2;
    }
    std::vector<std::size_t> ks;
    for (std::size_t k = 1; k < 25; ++k) {
        ks.push_back(k);
    }
    const auto curves = knn_kfn_curve(x, y, ks);
    for (std::size_t e = 0; e < ks.size(); ++e) {
        EXPECT_EQ(curves.precision[e], 1.0);
        EXPECT_EQ(curves.recall[e], 1.0);
    }
}

TEST(Knn, AllOtherPointsIsPerfect) {
    std::mt19937_64 rng(6);
    const std::size_t k[] = { 19 };
    const auto curves = knn_kfn_curve(random_matrix(20, 5, rng), random_matrix(20, 2, rng), k);
    EXPECT_EQ(curves.precision[0], 1.0);
    EXPECT_EQ(curves.recall[0], 1.0);
}

TEST(Knn, MatchesBruteForce) {
    std::mt19937_64 rng(7);
    const std::vector<std::size_t> ks = { 1, 2, 3, 5, 8, 13, 24 };
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = random_matrix(25, 4, rng);
        const auto y = random_matrix(25, 2, rng);
        const auto curves = knn_kfn_curve(x, y, ks);
        const auto naive = check::naive_knn_curve(x, y, ks);
        EXPECT_EQ(curves.precision, naive.precision);
        EXPECT_EQ(curves.recall, naive.recall);
    }
}

TEST(Knn, RejectsBadK) {
    const std::size_t zero[] = { 0 };
    const std::size_t big[] = { 5 };
    EXPECT_THROW(knn_kfn_curve(Matrix(5, 2), Matrix(5, 2), zero), ParameterError);
    EXPECT_THROW(knn_kfn_curve(Matrix(5, 2), Matrix(5, 2), big), ParameterError);
    EXPECT_THROW(knn_kfn_curve(Matrix(5, 2), Matrix(6, 2), zero), ParameterError);
}

TEST(Binary, MatchesExplicitVectors) {
    const std::vector<Divergence> divs = { Divergence::kl(), Divergence::rkl(), Divergence::js(), Divergence::ch(), Divergence::hl() };
    for (const auto& div : divs) {
        for (auto [m, r, k, tp] : { std::tuple{ 40u, 6u, 9u, 4u }, std::tuple{ 100u, 10u, 10u, 10u }, std::tuple{ 30u, 5u, 3u, 0u } }) {
            for (double delta : { 1e-2, 1e-5 }) {
                const auto bn = BinaryNeighborhood::uniform(m, 1, r, k, tp, delta);
                const double expected = explicit_binary_divergence(div, m, r, k, tp, delta);
                EXPECT_NEAR(binary_divergence(bn, div), expected, 1e-12 * std::max(1.0, std::abs(expected))) << to_string(div);
            }
        }
    }
}

TEST(Binary, PerfectRetrievalIsNearZero) {
    const auto bn = BinaryNeighborhood::uniform(200, 10, 20, 20, 20, 1e-9);
    EXPECT_EQ(binary_closed_form(bn, Divergence::kl()), 0.0);
    EXPECT_EQ(binary_closed_form(bn, Divergence::rkl()), 0.0);
    for (const auto& div : { Divergence::kl(), Divergence::rkl(), Divergence::js(), Divergence::ch(), Divergence::hl() }) {
        EXPECT_LT(std::abs(binary_divergence(bn, div)), 1e-6) << to_string(div);
    }
}

TEST(Binary, PredictionClosedForms) {
    const double delta = 1e-6;
    const double c0 = std::log((1 - delta) / delta);
    const auto bn = BinaryNeighborhood::uniform(1000, 1, 50, 40, 25, delta);
    EXPECT_NEAR(binary_closed_form(bn, Divergence::kl()), 25.0 / 50 * c0, 1e-12);
    EXPECT_NEAR(binary_closed_form(bn, Divergence::rkl()), 15.0 / 40 * c0, 1e-12);
    EXPECT_NEAR(binary_closed_form(bn, Divergence::js()), 0.5 * (25.0 / 50 + 15.0 / 40) * c0, 1e-12);
    EXPECT_NEAR(binary_closed_form(bn, Divergence::interpolated(0.25)), (0.25 * 25.0 / 50 + 0.75 * 15.0 / 40) * c0, 1e-12);
}

TEST(Binary, MissesDominateAsLeakageVanishes) {
    // The ratio exact / predicted moves toward 1 as delta shrinks.
    for (const auto& div : { Divergence::kl(), Divergence::rkl() }) {
        double previous = std::numeric_limits<double>::infinity();
        for (double delta = 1e-3; delta >= 1e-9; delta /= 10) {
            const auto bn = BinaryNeighborhood::uniform(1000, 1, 50, 50, 25, delta);
            const double gap = std::abs(binary_divergence(bn, div) / binary_closed_form(bn, div) - 1);
            EXPECT_LT(gap, previous) << to_string(div) << " delta=" << delta;
            previous = gap;
        }
    }
}

TEST(Binary, KlPenalizesMissesRklPenalizesFalseRetrievals) {
    const double delta = 1e-8;
    // Same number of errors, different kinds.
    const auto misses = BinaryNeighborhood::uniform(500, 1, 40, 20, 20, delta);
    const auto false_hits = BinaryNeighborhood::uniform(500, 1, 20, 40, 20, delta);
    EXPECT_GT(binary_divergence(misses, Divergence::kl()), 10 * binary_divergence(false_hits, Divergence::kl()));
    EXPECT_GT(binary_divergence(false_hits, Divergence::rkl()), 10 * binary_divergence(misses, Divergence::rkl()));
}

TEST(Binary, Validation) {
    EXPECT_THROW(BinaryNeighborhood::uniform(10, 1, 5, 5, 6, 1e-3).validate(), ParameterError);
    EXPECT_THROW(BinaryNeighborhood::uniform(10, 1, 0, 5, 0, 1e-3).validate(), ParameterError);
    EXPECT_THROW(BinaryNeighborhood::uniform(10, 1, 5, 5, 2, 0.7).validate(), ParameterError);
    EXPECT_THROW(BinaryNeighborhood::uniform(10, 1, 6, 6, 1, 1e-3).validate(), ParameterError);
}
