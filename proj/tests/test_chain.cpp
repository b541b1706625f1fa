#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "aoii/chain.hpp"
#include "aoii/stationary.hpp"
#include "helpers.hpp"

using namespace aoii;
using Catch::Approx;

namespace {

std::map<std::pair<int, int>, double> row_map(const StateSpace& space, const TransitionKernel& k,
                                              std::size_t s) {
    std::map<std::pair<int, int>, double> out;
    for (int i = 0; i < k.rows[s].n; ++i) out[space.state(k.rows[s].to[i])] = k.rows[s].p[i];
    return out;
}

}  // namespace

TEST_CASE("chain params validation") {
    CHECK_NOTHROW(ChainParams(0.25, 5, 3, 10));
    CHECK_THROWS_AS(ChainParams(0.0, 5, 3, 10), std::invalid_argument);
    CHECK_THROWS_AS(ChainParams(0.5, 5, 3, 10), std::invalid_argument);
    CHECK_THROWS_AS(ChainParams(-0.1, 5, 3, 10), std::invalid_argument);
    CHECK_THROWS_AS(ChainParams(0.25, 3, 5, 10), std::invalid_argument);  // F < G
    CHECK_THROWS_AS(ChainParams(0.25, 5, 0, 10), std::invalid_argument);
    CHECK_THROWS_AS(ChainParams(0.25, 5, 3, 0), std::invalid_argument);

    ChainParams broken(0.25, 5, 3, 10);
    broken.p_r = 0.49;  // must equal 1 - 2*p_t exactly
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
}

TEST_CASE("state space enumerates the truncated triangle") {
    const StateSpace s22(ChainParams(0.25, 2, 2, 1));
    REQUIRE(s22.size() == 4);
    const std::vector<std::pair<int, int>> expect{{0, 0}, {1, 1}, {2, 1}, {2, 2}};
    CHECK(s22.states() == expect);

    CHECK(StateSpace(ChainParams(0.25, 3, 2, 1)).size() == 6);
    CHECK(StateSpace(ChainParams(0.25, 100, 100, 1)).size() == 5051);
    CHECK(StateSpace(ChainParams(0.25, 100, 50, 1)).size() == 3776);
}

TEST_CASE("state index is a bijection onto the states") {
    const StateSpace space(ChainParams(0.3, 7, 4, 1));
    for (std::size_t i = 0; i < space.size(); ++i) {
        auto [f, g] = space.state(i);
        CHECK(space.index(f, g) == i);
        CHECK(space.contains(f, g));
    }
    CHECK(space.index(0, 0) == 0);
    CHECK_FALSE(space.contains(0, 1));
    CHECK_FALSE(space.contains(1, 0));
    CHECK_FALSE(space.contains(2, 3));   // g > f
    CHECK_FALSE(space.contains(6, 5));   // g > G
    CHECK_FALSE(space.contains(8, 1));   // f > F
    CHECK_THROWS_AS(space.index(2, 3), std::out_of_range);
}

TEST_CASE("collision term hand values") {
    const ChainParams params(0.25, 2, 2, 3);
    const StateSpace space(params);

    StateDist uniform(space.size(), 0.25);

    Policy silent(space.size(), 0.0);
    CHECK(collision_term(silent, uniform) == Approx(1.0).margin(1e-15));

    Policy always(space.size(), 0.0);
    for (std::size_t s = 1; s < space.size(); ++s) always.values[s] = 1.0;
    CHECK(collision_term(always, uniform) == Approx(0.25).margin(1e-15));

    Policy half(space.size(), 0.0);
    for (std::size_t s = 1; s < space.size(); ++s) half.values[s] = 0.5;
    CHECK(collision_term(half, uniform) == Approx(0.625).margin(1e-15));
    CHECK(collision_term(half, uniform, false) == Approx(0.375).margin(1e-15));

    // independent scalar-product evaluation on a random instance
    auto eng = testutil::test_engine(7);
    const Policy pi = testutil::random_policy(space, eng);
    const StateDist phi = testutil::random_dist(space, eng);
    double expect = phi.probs[0];
    for (std::size_t s = 1; s < space.size(); ++s)
        expect += phi.probs[s] * (1.0 - pi.values[s]);
    CHECK(collision_term(pi, phi) == Approx(expect).margin(1e-15));

    StateDist tiny(3);
    CHECK_THROWS_AS(collision_term(pi, tiny), std::invalid_argument);
}

TEST_CASE("collision term clamps to [0,1]") {
    const ChainParams params(0.25, 2, 2, 3);
    const StateSpace space(params);
    Policy hot(space.size(), 0.0);
    for (std::size_t s = 1; s < space.size(); ++s) hot.values[s] = 2.0;  // optimizer iterate
    StateDist uniform(space.size(), 0.25);
    CHECK(collision_term(hot, uniform) == 0.0);
    CHECK(collision_term_raw(hot, uniform) == Approx(-0.5).margin(1e-15));
}

TEST_CASE("success probability scales by ell^(N-1)") {
    const ChainParams n1(0.25, 3, 2, 1);
    const StateSpace space(n1);
    Policy pi(space.size(), 0.0);
    for (std::size_t s = 1; s < space.size(); ++s) pi.values[s] = 0.5;

    auto q1 = success_prob(pi, 0.3, n1);
    for (std::size_t s = 0; s < space.size(); ++s) CHECK(q1[s] == pi.values[s]);
    auto q1z = success_prob(pi, 0.0, n1);  // ell^0 = 1 even at ell = 0
    CHECK(q1z[1] == 0.5);

    const ChainParams n2(0.25, 3, 2, 2);
    auto q2 = success_prob(pi, 0.8, n2);
    CHECK(q2[1] == Approx(0.4).margin(1e-15));
    auto q2z = success_prob(pi, 0.0, n2);
    CHECK(q2z[1] == 0.0);

    const ChainParams n5(0.25, 3, 2, 5);
    auto q5 = success_prob(pi, 0.9, n5);
    CHECK(q5[1] == Approx(0.5 * std::pow(0.9, 4)).margin(1e-15));
    for (std::size_t s = 0; s < space.size(); ++s) CHECK(q5[s] <= pi.values[s]);

    CHECK_THROWS_AS(success_prob(pi, 1.2, n2), std::invalid_argument);
    CHECK_THROWS_AS(success_prob(pi, -0.1, n2), std::invalid_argument);
}

TEST_CASE("kernel row from the synced state") {
    const ChainParams params(0.25, 2, 2, 1);
    const StateSpace space(params);
    const Policy pi(space.size(), 0.0);
    const std::vector<double> q(space.size(), 0.0);
    const TransitionKernel k = build_kernel(pi, q, params);
    const auto row = row_map(space, k, 0);
    REQUIRE(row.size() == 2);
    CHECK(row.at({1, 1}) == Approx(0.5).margin(1e-15));
    CHECK(row.at({0, 0}) == Approx(0.5).margin(1e-15));
}

TEST_CASE("kernel row from (f,1)") {
    const ChainParams params(0.3, 5, 3, 1);
    const StateSpace space(params);
    const Policy pi(space.size(), 0.0);
    std::vector<double> q(space.size(), 0.0);
    q[space.index(3, 1)] = 0.2;
    const TransitionKernel k = build_kernel(pi, q, params);
    const auto row = row_map(space, k, space.index(3, 1));
    REQUIRE(row.size() == 3);
    CHECK(row.at({4, 2}) == Approx(0.24).margin(1e-15));
    CHECK(row.at({4, 1}) == Approx(0.32).margin(1e-15));
    CHECK(row.at({0, 0}) == Approx(0.44).margin(1e-15));
}

TEST_CASE("kernel row from an interior state") {
    const ChainParams params(0.25, 5, 5, 1);
    const StateSpace space(params);
    const Policy pi(space.size(), 0.0);
    std::vector<double> q(space.size(), 0.0);
    q[space.index(2, 2)] = 0.1;
    const TransitionKernel k = build_kernel(pi, q, params);
    const auto row = row_map(space, k, space.index(2, 2));
    REQUIRE(row.size() == 4);
    CHECK(row.at({3, 3}) == Approx(0.225).margin(1e-15));
    CHECK(row.at({3, 1}) == Approx(0.225).margin(1e-15));
    CHECK(row.at({3, 2}) == Approx(0.45).margin(1e-15));
    CHECK(row.at({0, 0}) == Approx(0.1).margin(1e-15));
}

TEST_CASE("kernel row from the double-truncated corner merges targets") {
    const ChainParams params(0.25, 5, 3, 1);
    const StateSpace space(params);
    const Policy pi(space.size(), 0.0);
    std::vector<double> q(space.size(), 0.0);
    q[space.index(5, 3)] = 0.1;
    const TransitionKernel k = build_kernel(pi, q, params);
    const auto row = row_map(space, k, space.index(5, 3));
    // up and same-g both truncate onto (F,G): (p_t + p_r)(1-q); down goes to (F,G-1)
    REQUIRE(row.size() == 3);
    CHECK(row.at({5, 3}) == Approx(0.675).margin(1e-15));
    CHECK(row.at({5, 2}) == Approx(0.225).margin(1e-15));
    CHECK(row.at({0, 0}) == Approx(0.1).margin(1e-15));
}

TEST_CASE("kernel row with G=1 merges the error branches") {
    const ChainParams params(0.3, 3, 1, 1);
    const StateSpace space(params);
    const Policy pi(space.size(), 0.0);
    std::vector<double> q(space.size(), 0.0);
    q[space.index(2, 1)] = 0.2;
    const TransitionKernel k = build_kernel(pi, q, params);
    const auto row = row_map(space, k, space.index(2, 1));
    REQUIRE(row.size() == 2);
    CHECK(row.at({3, 1}) == Approx(0.7 * 0.8).margin(1e-15));
    CHECK(row.at({0, 0}) == Approx(0.3 + 0.7 * 0.2).margin(1e-15));
}

TEST_CASE("build_kernel rejects a transmitting synced state") {
    const ChainParams params(0.25, 2, 2, 1);
    const StateSpace space(params);
    Policy pi(space.size(), 0.0);
    pi.values[0] = 0.5;
    const std::vector<double> q(space.size(), 0.0);
    CHECK_THROWS_AS(build_kernel(pi, q, params), std::invalid_argument);
}

TEST_CASE("kernel rows are stochastic with at most 4 entries") {
    auto eng = testutil::test_engine(42);
    for (int draw = 0; draw < 200; ++draw) {
        const int F = 1 + static_cast<int>(testutil::runif(eng, 0, 10));
        const int G = 1 + static_cast<int>(testutil::runif(eng, 0, F));
        const ChainParams params(testutil::runif(eng, 0.01, 0.49), std::min(F, 10),
                                 std::min(G, std::min(F, 10)), 1 + (draw % 7));
        const StateSpace space(params);
        const Policy pi = testutil::random_policy(space, eng);
        const StateDist phi = testutil::random_dist(space, eng);
        const double ell = collision_term(pi, phi);
        const auto q = success_prob(pi, ell, params);
        const TransitionKernel k = build_kernel(pi, q, params);
        for (std::size_t s = 0; s < space.size(); ++s) {
            REQUIRE(k.rows[s].n <= 4);
            double sum = 0.0;
            for (int i = 0; i < k.rows[s].n; ++i) sum += k.rows[s].p[i];
            REQUIRE(sum == Approx(1.0).margin(1e-12));
        }
    }
}

TEST_CASE("kernel rows stay stochastic for arbitrary q in [0,1]") {
    auto eng = testutil::test_engine(43);
    for (int draw = 0; draw < 50; ++draw) {
        const ChainParams params(testutil::runif(eng, 0.01, 0.49), 6, 4, 1);
        const StateSpace space(params);
        const Policy pi(space.size(), 0.0);
        std::vector<double> q(space.size());
        for (auto& v : q) v = testutil::runif(eng, 0.0, 1.0);
        q[0] = 0.0;
        const TransitionKernel k = build_kernel(pi, q, params);
        for (std::size_t s = 0; s < space.size(); ++s) {
            double sum = 0.0;
            for (int i = 0; i < k.rows[s].n; ++i) sum += k.rows[s].p[i];
            REQUIRE(sum == Approx(1.0).margin(1e-12));
        }
    }
}

TEST_CASE("states reachable from the synced state satisfy g <= f below the age cap") {
    auto eng = testutil::test_engine(11);
    for (int draw = 0; draw < 50; ++draw) {
        const int F = 2 + static_cast<int>(testutil::runif(eng, 0, 7));
        const int G = 1 + static_cast<int>(testutil::runif(eng, 0, F - 1));
        const ChainParams params(testutil::runif(eng, 0.05, 0.45), F, G, 1 + (draw % 5));
        const StateSpace space(params);
        const Policy pi = testutil::random_policy(space, eng);
        const StateDist phi = testutil::random_dist(space, eng);
        const auto q = success_prob(pi, collision_term(pi, phi), params);
        const TransitionKernel k = build_kernel(pi, q, params);
        const auto seen = testutil::bfs_forward(k, 0);
        for (std::size_t s = 0; s < space.size(); ++s) {
            if (!seen[s]) continue;
            auto [f, g] = space.state(s);
            if (f < F) REQUIRE(g <= f);
        }
    }
}

TEST_CASE("the synced state is reachable from everywhere") {
    auto eng = testutil::test_engine(12);
    const ChainParams params(0.25, 6, 4, 3);
    const StateSpace space(params);

    // random policy with at least one transmitting state
    const Policy pi = testutil::random_policy(space, eng, 0.1, 1.0);
    const StateDist phi = testutil::random_dist(space, eng);
    const auto q = success_prob(pi, collision_term(pi, phi), params);
    const auto rev = testutil::bfs_reverse(build_kernel(pi, q, params), 0);
    for (std::size_t s = 0; s < space.size(); ++s) REQUIRE(rev[s] == 1);

    // silent policy: resets still happen through the error-1 walk branch
    const Policy silent(space.size(), 0.0);
    const std::vector<double> q0(space.size(), 0.0);
    const TransitionKernel k0 = build_kernel(silent, q0, params);
    const auto rev0 = testutil::bfs_reverse(k0, 0);
    const auto fwd0 = testutil::bfs_forward(k0, 0);
    for (std::size_t s = 0; s < space.size(); ++s) {
        REQUIRE(rev0[s] == 1);
        REQUIRE(fwd0[s] == 1);
    }
}

TEST_CASE("stationary distribution of the silent 4-state chain") {
    const ChainParams params(0.25, 2, 2, 1);
    const StateSpace space(params);
    const Policy silent(space.size(), 0.0);

    const auto res = stationary_dist(silent, params);
    REQUIRE(res.phi.probs.size() == 4);
    CHECK(res.phi.probs[0] == Approx(0.2).margin(1e-9));
    CHECK(res.phi.probs[1] == Approx(0.1).margin(1e-9));
    CHECK(res.phi.probs[2] == Approx(0.3).margin(1e-9));
    CHECK(res.phi.probs[3] == Approx(0.4).margin(1e-9));
    CHECK(res.ell == Approx(1.0).margin(1e-12));
    CHECK(truncated_aoii(space, res.phi) == Approx(2.3).margin(1e-9));

    // independent dense elimination oracle
    const auto q = success_prob(silent, res.ell, params);
    const auto P = testutil::dense_matrix(build_kernel(silent, q, params));
    const auto oracle = testutil::dense_stationary(P);
    for (std::size_t s = 0; s < 4; ++s)
        CHECK(res.phi.probs[s] == Approx(oracle[s]).margin(1e-10));
}

TEST_CASE("single-sensor stationary matches a dense solve") {
    auto eng = testutil::test_engine(21);
    const ChainParams params(0.3, 4, 4, 1);
    const StateSpace space(params);
    for (int rep = 0; rep < 5; ++rep) {
        const Policy pi = testutil::random_policy(space, eng);
        const auto res = stationary_dist(pi, params);
        CHECK(res.outer_iters == 1);
        const auto q = success_prob(pi, 1.0, params);  // ell irrelevant at N=1
        const auto oracle = testutil::dense_stationary(testutil::dense_matrix(build_kernel(pi, q, params)));
        for (std::size_t s = 0; s < space.size(); ++s)
            REQUIRE(res.phi.probs[s] == Approx(oracle[s]).margin(1e-8));
    }
}

TEST_CASE("congested all-transmit instance stays self-consistent") {
    const ChainParams params(0.25, 4, 4, 50);
    const StateSpace space(params);
    Policy pi(space.size(), 0.0);
    for (std::size_t s = 1; s < space.size(); ++s) pi.values[s] = 1.0;

    const auto res = stationary_dist(pi, params);
    CHECK(std::abs(res.ell - collision_term(pi, res.phi)) <= 1e-9);
    CHECK(res.residual <= 1e-10);

    // long power iteration at the frozen converged ell, from a fresh start
    const auto q = success_prob(pi, res.ell, params);
    const auto P = testutil::dense_matrix(build_kernel(pi, q, params));
    const std::size_t n = space.size();
    std::vector<double> v(n, 1.0 / static_cast<double>(n)), next(n);
    for (int it = 0; it < 200000; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t t = 0; t < n; ++t)
                if (P[s][t] != 0.0) next[t] += v[s] * P[s][t];
        v.swap(next);
    }
    CHECK(testutil::total_variation(v, res.phi.probs) <= 1e-8);
}

TEST_CASE("self-consistency holds on random multi-sensor instances") {
    auto eng = testutil::test_engine(31);
    for (int rep = 0; rep < 20; ++rep) {
        const int F = 3 + static_cast<int>(testutil::runif(eng, 0, 4));
        const ChainParams params(testutil::runif(eng, 0.05, 0.45), F, F,
                                 1 + static_cast<int>(testutil::runif(eng, 0, 8)));
        const StateSpace space(params);
        const Policy pi = testutil::random_policy(space, eng);
        const auto res = stationary_dist(pi, params);
        REQUIRE(std::abs(res.ell - collision_term(pi, res.phi)) <= 1e-9);
        REQUIRE(res.residual <= 1e-10);
        double sum = 0.0;
        for (double p : res.phi.probs) {
            REQUIRE(p >= 0.0);
            sum += p;
        }
        REQUIRE(sum == Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("stationary solver rejects invalid policies and reports non-convergence") {
    const ChainParams params(0.25, 3, 3, 20);
    const StateSpace space(params);
    Policy bad(space.size(), 0.0);
    bad.values[1] = 1.5;
    CHECK_THROWS_AS(stationary_dist(bad, params), std::invalid_argument);

    Policy pi(space.size(), 0.0);
    for (std::size_t s = 1; s < space.size(); ++s) pi.values[s] = 1.0;
    StationaryOptions one_outer;
    one_outer.max_outer = 1;
    try {
        stationary_dist(pi, params, one_outer);  // one outer iteration cannot close the loop
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.residual() >= 0.0);
        CHECK(e.iterations() == 1);
    }
}

TEST_CASE("truncated aoii expectation") {
    const ChainParams params(0.25, 2, 2, 1);
    const StateSpace space(params);

    StateDist point(space.size(), 0.0);
    point.probs[0] = 1.0;
    CHECK(truncated_aoii(space, point) == 0.0);

    StateDist uniform(space.size(), 0.25);
    CHECK(truncated_aoii(space, uniform) == Approx(1.75).margin(1e-15));
}

TEST_CASE("enlarging the truncation never shrinks the truncated aoii") {
    const double p_t = 0.3;
    const long N = 3;
    auto value = [&](int F, int G) {
        const ChainParams params(p_t, F, G, N);
        const StateSpace space(params);
        Policy pi(space.size(), 0.0);
        for (std::size_t s = 1; s < space.size(); ++s) pi.values[s] = 0.2;
        return truncated_aoii(space, stationary_dist(pi, params).phi);
    };
    for (int F = 3; F <= 7; ++F) {
        for (int G = 2; G <= F; ++G) {
            const double base = value(F, G);
            CHECK(value(F + 1, G) >= base - 1e-9);
            if (G < F) CHECK(value(F, G + 1) >= base - 1e-9);
        }
    }
}
