#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include <doctest.h>

#include "ecmoe/capped_solver.hpp"
#include "ecmoe/kernels.hpp"
#include "ecmoe/metrics.hpp"
#include "ecmoe/prng.hpp"

using ecmoe::CappedProblem;
using ecmoe::CappedSolution;
using ecmoe::Matrix;

namespace {

Matrix random_scores(std::size_t e, std::size_t n, ecmoe::SplitMix64& prng) {
    Matrix m(e, n);
    for (std::size_t i = 0; i < e; ++i) {
        for (std::size_t j = 0; j < n; ++j) m(i, j) = prng.next_double();
    }
    return m;
}

// lift each row's top-k entries so the rank-k / rank-k+1 gap is >= gap
Matrix gap_separated_scores(std::size_t e, std::size_t n, std::size_t k, ecmoe::SplitMix64& prng,
                            double gap = 0.05) {
    Matrix m = random_scores(e, n, prng);
    for (std::size_t i = 0; i < e; ++i) {
        std::vector<std::uint32_t> order(n);
        std::iota(order.begin(), order.end(), 0u);
        std::sort(order.begin(), order.end(),
                  [&](std::uint32_t a, std::uint32_t b) { return m(i, a) > m(i, b); });
        double have = m(i, order[k - 1]) - m(i, order[k]);
        if (have < gap) {
            for (std::size_t j = 0; j < k; ++j) m(i, order[j]) += gap - have + 1e-6;
        }
    }
    return m;
}

// exhaustive best injective expert->token assignment (k=1, b=1)
std::vector<std::uint32_t> brute_force_matching(const Matrix& scores, double* best_value,
                                                double* second_value) {
    const std::size_t e = scores.rows(), n = scores.cols();
    std::vector<std::uint32_t> tokens(n);
    std::iota(tokens.begin(), tokens.end(), 0u);
    std::vector<std::uint32_t> best;
    double bv = -1e300, sv = -1e300;
    std::vector<std::uint32_t> perm(tokens);
    std::sort(perm.begin(), perm.end());
    do {
        double v = 0.0;
        for (std::size_t i = 0; i < e; ++i) v += scores(i, perm[i]);
        if (v > bv + 1e-15) {
            sv = bv;
            bv = v;
            best.assign(perm.begin(), perm.begin() + e);
        } else if (v > sv) {
            sv = v;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    if (best_value != nullptr) *best_value = bv;
    if (second_value != nullptr) *second_value = sv;
    return best;
}

}  // namespace

TEST_SUITE("capped-solver") {

TEST_CASE("uniform scores with tight budgets converge to k/n immediately") {
    Matrix scores(8, 64);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 64; ++j) scores(i, j) = 0.37;
    }
    CappedProblem p{scores, 16, 2};
    CappedSolution sol = ecmoe::solve_capped(p);
    CHECK(sol.iterations_used == 1);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 64; ++j) {
            CHECK(sol.a(i, j) == doctest::Approx(0.25).epsilon(1e-12));
        }
    }
    CHECK(sol.residuals.max_residual() < 1e-3);
}

TEST_CASE("2x2 instance matches exhaustive enumeration") {
    Matrix scores = Matrix::from_rows({{.9, .1}, {.8, .2}});
    double best_v = 0.0;
    auto best = brute_force_matching(scores, &best_v, nullptr);
    CHECK(best_v == doctest::Approx(1.1));  // 0.9 + 0.2 beats 0.1 + 0.8
    REQUIRE(best.size() == 2);
    CHECK(best[0] == 0);
    CHECK(best[1] == 1);

    CappedProblem p{scores, 1, 1, 1e-3, 5000, 1e-9};
    CappedSolution sol = ecmoe::solve_capped(p);
    auto [vals, idx] = ecmoe::topk_rows(sol.a, 1);
    CHECK(idx(0, 0) == best[0]);
    CHECK(idx(1, 0) == best[1]);
}

TEST_CASE("validation errors") {
    Matrix scores(2, 3);
    CHECK_THROWS_AS(ecmoe::solve_capped(CappedProblem{scores, 2, 1}),  // 2*2 > 3*1
                    std::invalid_argument);
    CHECK_THROWS_AS(ecmoe::solve_capped(CappedProblem{scores, 4, 2}),  // k > n
                    std::invalid_argument);
    CHECK_THROWS_AS(ecmoe::solve_capped(CappedProblem{scores, 1, 3}),  // b > e
                    std::invalid_argument);
    CHECK_THROWS_AS(ecmoe::solve_capped(CappedProblem{scores, 1, 1, 0.0}),  // lambda
                    std::invalid_argument);
}

TEST_CASE("non-convergence is reported, not thrown") {
    ecmoe::SplitMix64 prng(20);
    Matrix scores = random_scores(8, 64, prng);
    CappedProblem p{scores, 16, 2, 1e-3, 1, 1e-3};
    CappedSolution sol = ecmoe::solve_capped(p);
    CHECK(sol.iterations_used == 1);
    CHECK(sol.residuals.max_residual() > 0.0);
    CHECK(sol.a.all_finite());
}

TEST_CASE("full-cycle residuals are non-increasing") {
    // run the same instance at increasing iteration budgets; the residual
    // after i+1 cycles must not exceed the residual after i cycles
    ecmoe::SplitMix64 prng(21);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix scores = random_scores(6, 24, prng);
        double prev = 1e300;
        for (std::size_t iters = 1; iters <= 40; ++iters) {
            CappedProblem p{scores, 6, 2, 1e-3, iters, 0.0};
            CappedSolution sol = ecmoe::solve_capped(p);
            CHECK(sol.residuals.max_residual() <= prev + 1e-9);
            prev = sol.residuals.max_residual();
        }
    }
}

TEST_CASE("b = e reduces to per-row top-k of the scores") {
    ecmoe::SplitMix64 prng(22);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix scores = gap_separated_scores(8, 64, 16, prng);
        CappedProblem p{scores, 16, 8};
        CappedSolution sol = ecmoe::solve_capped(p);
        auto [av, ai] = ecmoe::topk_rows(sol.a, 16);
        auto [sv, si] = ecmoe::topk_rows(scores, 16);
        for (std::size_t i = 0; i < 8; ++i) {
            std::set<std::uint32_t> a_set, s_set;
            for (std::size_t j = 0; j < 16; ++j) {
                a_set.insert(ai(i, j));
                s_set.insert(si(i, j));
            }
            CHECK(a_set == s_set);
        }
    }
}

TEST_CASE("near-integrality at small lambda on gap-separated instances") {
    ecmoe::SplitMix64 prng(23);
    for (std::size_t b : {std::size_t{2}, std::size_t{8}}) {
        for (int trial = 0; trial < 5; ++trial) {
            Matrix scores = gap_separated_scores(8, 64, 16, prng);
            CappedProblem p{scores, 16, b};
            CappedSolution sol = ecmoe::solve_capped(p);
            std::size_t near = 0;
            for (std::size_t i = 0; i < 8; ++i) {
                for (std::size_t j = 0; j < 64; ++j) {
                    double v = sol.a(i, j);
                    if (std::min(std::abs(v), std::abs(v - 1.0)) <= 0.05) ++near;
                }
            }
            CHECK(static_cast<double>(near) >= 0.90 * 8 * 64);
        }
    }
}

TEST_CASE("tiny-instance exactness against brute force") {
    ecmoe::SplitMix64 prng(24);
    int done = 0;
    while (done < 50) {
        std::size_t e = 1 + prng.next() % 3;
        std::size_t n = e + prng.next() % (5 - e);
        // scores on a 0.05 grid; keep instances whose optimum is unique
        Matrix scores(e, n);
        for (std::size_t i = 0; i < e; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                scores(i, j) = 0.05 * static_cast<double>(prng.next() % 21);
            }
        }
        double best_v = 0.0, second_v = 0.0;
        auto best = brute_force_matching(scores, &best_v, &second_v);
        if (best_v - second_v < 0.05 - 1e-12) continue;
        ++done;

        CappedProblem p{scores, 1, 1, 1e-3, 5000, 1e-9};
        CappedSolution sol = ecmoe::solve_capped(p);
        auto [vals, idx] = ecmoe::topk_rows(sol.a, 1);
        for (std::size_t i = 0; i < e; ++i) CHECK(idx(i, 0) == best[i]);
    }
}

TEST_CASE("selection objective dominates random feasible assignments") {
    ecmoe::SplitMix64 prng(25);
    for (int trial = 0; trial < 30; ++trial) {
        std::size_t e = 1 + prng.next() % 3;
        std::size_t n = e + prng.next() % (5 - e);
        Matrix scores = random_scores(e, n, prng);
        CappedProblem p{scores, 1, 1, 1e-3, 5000, 1e-9};
        CappedSolution sol = ecmoe::solve_capped(p);
        auto [vals, idx] = ecmoe::topk_rows(sol.a, 1);
        double obj = 0.0;
        for (std::size_t i = 0; i < e; ++i) obj += scores(i, idx(i, 0));

        std::vector<std::uint32_t> tokens(n);
        std::iota(tokens.begin(), tokens.end(), 0u);
        for (int r = 0; r < 1000; ++r) {
            // random injective assignment (Fisher-Yates prefix)
            for (std::size_t i = 0; i < e; ++i) {
                std::size_t j = i + prng.next() % (n - i);
                std::swap(tokens[i], tokens[j]);
            }
            double v = 0.0;
            for (std::size_t i = 0; i < e; ++i) v += scores(i, tokens[i]);
            CHECK(obj >= v - 1e-9);
        }
    }
}

TEST_CASE("capped_route: every expert exactly k tokens, gates from S") {
    ecmoe::SplitMix64 prng(26);
    Matrix z(24, 4);
    for (std::size_t i = 0; i < 24; ++i) {
        for (std::size_t j = 0; j < 4; ++j) z(i, j) = prng.next_uniform(-2, 2);
    }
    Matrix s = ecmoe::softmax_rows(z);
    auto a = ecmoe::capped_route(s, 6, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        std::set<std::uint32_t> row;
        for (std::size_t j = 0; j < 6; ++j) {
            row.insert(a.indices(i, j));
            CHECK(a.gates(i, j) == s(a.indices(i, j), i));  // exactly from S, not A
        }
        CHECK(row.size() == 6);
    }
}

TEST_CASE("EC-CAP respects the cap on block-structured separated instances") {
    // expert i strongly prefers a designated window of k tokens; windows are
    // strided so every token is designated to exactly b experts (tight case)
    ecmoe::SplitMix64 prng(27);
    struct Layout { std::size_t b, n, e, k; };
    for (Layout lay : {Layout{2, 16, 4, 8}, Layout{3, 12, 4, 9}}) {
        const std::size_t stride = lay.n / lay.e;  // coverage = k / stride = b
        Matrix s(lay.n, lay.e);
        for (std::size_t t = 0; t < lay.n; ++t) {
            for (std::size_t i = 0; i < lay.e; ++i) {
                bool designated = false;
                for (std::size_t j = 0; j < lay.k; ++j) {
                    if ((i * stride + j) % lay.n == t) designated = true;
                }
                s(t, i) = (designated ? 0.8 : 0.1) + prng.next_uniform(-0.02, 0.02);
            }
        }
        auto a = ecmoe::capped_route(s, lay.k, lay.b);
        CHECK(ecmoe::cap_violations(a, lay.b) == 0);
    }
}

}  // TEST_SUITE
