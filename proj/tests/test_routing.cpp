#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <doctest.h>

#include "ecmoe/kernels.hpp"
#include "ecmoe/prng.hpp"
#include "ecmoe/routing.hpp"

using ecmoe::Matrix;

namespace {

Matrix random_affinity(std::size_t n, std::size_t e, ecmoe::SplitMix64& prng, double spread = 2.0) {
    Matrix z(n, e);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < e; ++j) z(i, j) = prng.next_uniform(-spread, spread);
    }
    return ecmoe::softmax_rows(z);
}

}  // namespace

TEST_SUITE("routing") {

TEST_CASE("capacity formula") {
    CHECK(ecmoe::capacity(8, 2.0, 4) == 4);
    CHECK(ecmoe::capacity(1024, 0.5, 64) == 8);
    CHECK(ecmoe::capacity(10, 1.0, 3) == 3);  // round_half_up(3.33)
    CHECK(ecmoe::capacity(7, 1.0, 2) == 4);   // round_half_up(3.5)
    CHECK(ecmoe::capacity(100, 0.001, 4) == 1);  // floor at 1
    CHECK_THROWS_AS(ecmoe::capacity(2, 5.0, 1), std::invalid_argument);  // k > n
    CHECK_THROWS_AS(ecmoe::capacity(0, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(ecmoe::capacity(4, -1.0, 2), std::invalid_argument);
}

TEST_CASE("affinity closed forms") {
    // zero input -> uniform rows
    ecmoe::Matrix x(3, 2);
    ecmoe::Matrix w_g(2, 4);
    Matrix s = ecmoe::affinity(x, w_g);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) CHECK(s(i, j) == doctest::Approx(0.25));
    }

    // d=1, W_g = [[0, ln 3]], X = [[1]] -> [0.25, 0.75]
    Matrix x1 = Matrix::from_rows({{1.0}});
    Matrix w1 = Matrix::from_rows({{0.0, std::log(3.0)}});
    Matrix s1 = ecmoe::affinity(x1, w1);
    CHECK(s1(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(s1(0, 1) == doctest::Approx(0.75).epsilon(1e-14));

    // e=1 -> all-ones column
    Matrix we = Matrix::from_rows({{0.7}});
    Matrix se = ecmoe::affinity(x1, we);
    CHECK(se(0, 0) == 1.0);

    CHECK_THROWS_AS(ecmoe::affinity(Matrix(2, 3), Matrix(4, 2)), std::invalid_argument);
}

TEST_CASE("expert choice: single expert takes all tokens in affinity order") {
    ecmoe::SplitMix64 prng(10);
    Matrix s = random_affinity(6, 1, prng);  // e=1: column of ones
    // affinities all 1.0; ties broken by index
    auto a = ecmoe::expert_choice_route(s, 6);
    for (std::size_t j = 0; j < 6; ++j) CHECK(a.indices(0, j) == j);
}

TEST_CASE("expert choice: worked 4x2 example") {
    Matrix s = Matrix::from_rows({{.9, .1}, {.8, .2}, {.3, .7}, {.4, .6}});
    auto a = ecmoe::expert_choice_route(s, 2);
    CHECK(a.indices(0, 0) == 0);
    CHECK(a.indices(0, 1) == 1);
    CHECK(a.indices(1, 0) == 2);
    CHECK(a.indices(1, 1) == 3);
    CHECK(a.gates(0, 0) == 0.9);
    CHECK(a.gates(0, 1) == 0.8);
    CHECK(a.gates(1, 0) == 0.7);
    CHECK(a.gates(1, 1) == 0.6);
}

TEST_CASE("expert choice: perfect balance and gate consistency") {
    ecmoe::SplitMix64 prng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 8, e = 4;
        std::size_t k = ecmoe::capacity(n, 2.0, e);
        REQUIRE(k == 4);
        Matrix s = random_affinity(n, e, prng);
        auto a = ecmoe::expert_choice_route(s, k);
        for (std::size_t i = 0; i < e; ++i) {
            std::set<std::uint32_t> row;
            for (std::size_t j = 0; j < k; ++j) {
                row.insert(a.indices(i, j));
                CHECK(a.gates(i, j) == s(a.indices(i, j), i));  // exact
            }
            CHECK(row.size() == k);  // distinct tokens, load exactly k
        }
    }
}

TEST_CASE("expert choice: k > n rejected") {
    Matrix s = Matrix::from_rows({{1.0}, {1.0}});
    CHECK_THROWS_AS(ecmoe::expert_choice_route(s, 3), std::invalid_argument);
}

TEST_CASE("routing decisions are invariant to per-row logit shifts") {
    ecmoe::SplitMix64 prng(12);
    Matrix z(16, 6);
    for (std::size_t i = 0; i < 16; ++i) {
        for (std::size_t j = 0; j < 6; ++j) z(i, j) = prng.next_uniform(-2, 2);
    }
    Matrix shifted = z;
    for (std::size_t i = 0; i < 16; ++i) {
        double c = prng.next_uniform(-100, 100);
        for (std::size_t j = 0; j < 6; ++j) shifted(i, j) += c;
    }
    auto a = ecmoe::expert_choice_route(ecmoe::softmax_rows(z), 4);
    auto b = ecmoe::expert_choice_route(ecmoe::softmax_rows(shifted), 4);
    CHECK(a.indices == b.indices);
}

TEST_CASE("token choice: no drops when demand matches capacity") {
    // block-diagonal dominant S: token t prefers expert t % e
    std::size_t e = 3, k = 2, n = e * k;
    Matrix s(n, e);
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t j = 0; j < e; ++j) s(t, j) = (t % e == j) ? 0.8 : 0.1;
    }
    auto res = ecmoe::token_choice_route(s, 1, k);
    CHECK(res.dropped.empty());
    for (std::size_t i = 0; i < e; ++i) CHECK(res.per_expert_demand[i] == k);
}

TEST_CASE("token choice: drop order is ascending token id") {
    // all four tokens prefer expert 0; capacity 2
    Matrix s = Matrix::from_rows({{.9, .1}, {.9, .1}, {.9, .1}, {.9, .1}});
    auto res = ecmoe::token_choice_route(s, 1, 2);
    REQUIRE(res.dropped.size() == 2);
    CHECK(res.dropped[0] == std::make_pair(std::uint32_t{2}, std::uint32_t{0}));
    CHECK(res.dropped[1] == std::make_pair(std::uint32_t{3}, std::uint32_t{0}));
    CHECK(res.assignment.indices(0, 0) == 0);
    CHECK(res.assignment.indices(0, 1) == 1);
    // expert 1 received nothing: padded slots with sentinel id n and zero gate
    CHECK(res.assignment.slot_is_padded(1, 0));
    CHECK(res.assignment.gates(1, 0) == 0.0);
    CHECK(res.per_expert_demand[0] == 4);
    CHECK(res.per_expert_demand[1] == 0);
}

TEST_CASE("token choice top-2 with two experts claims both") {
    ecmoe::SplitMix64 prng(13);
    Matrix s = random_affinity(10, 2, prng);
    auto res = ecmoe::token_choice_route(s, 2, 5);
    CHECK(res.per_expert_demand[0] == 10);
    CHECK(res.per_expert_demand[1] == 10);
}

TEST_CASE("token choice conservation: accepted + dropped = n*top_k") {
    ecmoe::SplitMix64 prng(14);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t n = 4 + prng.next() % 40;
        std::size_t e = 2 + prng.next() % 6;
        std::size_t k = 1 + prng.next() % 8;
        std::size_t top_k = 1 + prng.next() % 2;
        Matrix s = random_affinity(n, e, prng);
        auto res = ecmoe::token_choice_route(s, top_k, k);
        std::size_t accepted = 0;
        for (std::size_t i = 0; i < e; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                if (!res.assignment.slot_is_padded(i, j)) ++accepted;
            }
        }
        CHECK(accepted + res.dropped.size() == n * top_k);

        // drops occur iff some expert demand exceeds capacity
        std::size_t expected_drops = 0;
        for (std::size_t i = 0; i < e; ++i) {
            expected_drops += res.per_expert_demand[i] > k ? res.per_expert_demand[i] - k : 0;
        }
        CHECK(res.dropped.size() == expected_drops);
    }
}

TEST_CASE("token choice top-2 gate renormalization") {
    // token 0 wants experts 0 (0.6) and 1 (0.3); expert 0 is pre-filled by
    // token ids below it, so only the expert-1 claim survives
    Matrix s = Matrix::from_rows({
        {.7, .2, .1},
        {.7, .2, .1},
        {.6, .3, .1},
    });
    auto res = ecmoe::token_choice_route(s, 2, 2);
    // token 2's expert-0 claim dropped (tokens 0,1 filled it)
    REQUIRE(res.dropped.size() == 1);
    CHECK(res.dropped[0].first == 2);
    CHECK(res.dropped[0].second == 0);
    // surviving expert-1 gate carries the token's full top-2 mass 0.6+0.3
    const auto& claim = res.claims[2];
    REQUIRE(claim.slot[1] >= 0);
    double gate = res.assignment.gates(1, static_cast<std::size_t>(claim.slot[1]));
    CHECK(gate == doctest::Approx(0.9).epsilon(1e-12));
    // tokens with both claims alive keep raw affinities
    const auto& c0 = res.claims[0];
    CHECK(res.assignment.gates(0, static_cast<std::size_t>(c0.slot[0])) == s(0, 0));
    CHECK(res.assignment.gates(1, static_cast<std::size_t>(c0.slot[1])) == s(0, 1));
}

TEST_CASE("hash routing") {
    auto res = ecmoe::hash_route({0, 1, 2, 3}, 2, 2);
    CHECK(res.per_expert[0] == std::vector<std::uint32_t>{0, 2});
    CHECK(res.per_expert[1] == std::vector<std::uint32_t>{1, 3});
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(res.assignment.gates(i, j) == 1.0);
        }
    }

    // degenerate: every id congruent to 0
    auto deg = ecmoe::hash_route({0, 4, 8}, 4, 1);
    CHECK(deg.per_expert[0].size() == 3);
    CHECK(deg.per_expert[1].empty());
    CHECK(deg.assignment.slots() == 3);  // padded to the longest load
    CHECK(deg.assignment.slot_is_padded(1, 0));

    // ids 0..n-1 with e | n: perfectly balanced
    std::vector<std::uint32_t> ids(12);
    for (std::uint32_t i = 0; i < 12; ++i) ids[i] = i;
    auto bal = ecmoe::hash_route(ids, 4, 3);
    for (std::size_t i = 0; i < 4; ++i) CHECK(bal.per_expert[i].size() == 3);

    CHECK_THROWS_AS(ecmoe::hash_route({}, 2, 1), std::invalid_argument);
}

TEST_CASE("aux load-balance loss") {
    // uniform affinity and uniform demand: loss = alpha * e * sum(1/e * 1/e) = alpha
    std::size_t n = 8, e = 4;
    Matrix s(n, e);
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t j = 0; j < e; ++j) s(t, j) = 1.0 / static_cast<double>(e);
    }
    std::vector<std::size_t> demand(e, n / e);
    double loss = ecmoe::aux_load_balance_loss(s, demand, 1, 0.01);
    CHECK(loss == doctest::Approx(0.01).epsilon(1e-12));

    Matrix grad = ecmoe::aux_load_balance_grad_s(s, demand, 1, 0.01);
    // d/dS[t][i] = alpha * e * f_i / n, here 0.01 * 4 * 0.25 / 8
    CHECK(grad(0, 0) == doctest::Approx(0.01 * 4 * 0.25 / 8).epsilon(1e-12));
}

}  // TEST_SUITE
