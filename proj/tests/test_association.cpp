#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "mpslam/association.hpp"

using namespace mpslam;

namespace {

AssociationWeights random_weights(int K, int M, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> e(-3.0, 3.0);  // log10-uniform in [1e-3, 1e3]
    AssociationWeights w;
    w.K = K;
    w.M = M;
    w.beta.resize(static_cast<std::size_t>(K) * M);
    w.beta0.resize(static_cast<std::size_t>(K));
    w.xi.resize(static_cast<std::size_t>(M));
    for (auto& v : w.beta) v = std::pow(10.0, e(rng));
    for (auto& v : w.beta0) v = std::pow(10.0, e(rng));
    for (auto& v : w.xi) v = std::pow(10.0, e(rng));
    return w;
}

double linf_diff(const AssociationResult& a, const AssociationResult& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.p_legacy.size(); ++i)
        d = std::max(d, std::abs(a.p_legacy[i] - b.p_legacy[i]));
    for (std::size_t i = 0; i < a.p_meas.size(); ++i)
        d = std::max(d, std::abs(a.p_meas[i] - b.p_meas[i]));
    return d;
}

}  // namespace

TEST_CASE("psi consistency indicator") {
    CHECK(psi(2, 1, 1, 2) == 1);  // a_1 = 2 and abar_2 = 1: consistent claim
    CHECK(psi(2, 0, 1, 2) == 0);  // feature claims measurement 2, measurement claims none
    CHECK(psi(0, 1, 1, 2) == 0);  // measurement claims feature 1, feature claims none
    CHECK(psi(0, 0, 1, 2) == 1);  // both unassigned
    CHECK(psi(3, 5, 1, 2) == 1);  // both point elsewhere
}

TEST_CASE("single feature, single measurement closed form") {
    AssociationWeights w;
    w.K = 1;
    w.M = 1;
    w.beta = {2.5};
    w.beta0 = {0.4};
    w.xi = {0.7};
    const auto r = bp_marginals(w);
    const double expect = 2.5 / (0.4 * 1.7 + 2.5);
    CHECK(r.converged);
    CHECK(r.legacy_at(0, 1) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(r.legacy_at(0, 0) == doctest::Approx(1.0 - expect).epsilon(1e-12));
    CHECK(r.meas_at(0, 1) == doctest::Approx(expect).epsilon(1e-12));

    const auto ex = exact_marginals(w);
    CHECK(linf_diff(r, ex) < 1e-12);
}

TEST_CASE("all-zero likelihood matrix means everything missed") {
    AssociationWeights w;
    w.K = 3;
    w.M = 2;
    w.beta.assign(6, 0.0);
    w.beta0 = {0.5, 0.2, 0.9};
    w.xi = {0.1, 0.3};
    const auto r = bp_marginals(w);
    for (int k = 0; k < 3; ++k) {
        CHECK(r.legacy_at(k, 0) == doctest::Approx(1.0));
        CHECK(r.legacy_at(k, 1) == doctest::Approx(0.0));
        CHECK(r.legacy_at(k, 2) == doctest::Approx(0.0));
    }
    for (int m = 0; m < 2; ++m) CHECK(r.meas_at(m, 0) == doctest::Approx(1.0));
}

TEST_CASE("rows are normalized PMFs") {
    std::mt19937_64 rng(100);
    for (int t = 0; t < 50; ++t) {
        std::uniform_int_distribution<int> dim(1, 3);
        const auto w = random_weights(dim(rng), dim(rng), rng);
        const auto r = bp_marginals(w);
        for (int k = 0; k < w.K; ++k) {
            double s = 0.0;
            for (int m = 0; m <= w.M; ++m) s += r.legacy_at(k, m);
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
        for (int m = 0; m < w.M; ++m) {
            double s = 0.0;
            for (int k = 0; k <= w.K; ++k) s += r.meas_at(m, k);
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("BP is exact on tree instances") {
    // with a single feature or a single measurement the graph has no loops
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> dim(1, 3);
    for (int t = 0; t < 100; ++t) {
        const bool single_k = t % 2 == 0;
        const auto w =
            random_weights(single_k ? 1 : dim(rng), single_k ? dim(rng) : 1, rng);
        const auto r = bp_marginals(w);
        const auto ex = exact_marginals(w);
        CHECK(linf_diff(r, ex) < 1e-9);
    }
}

TEST_CASE("BP approximation quality on loopy instances") {
    // loopy sum-product marginals are approximate; most instances land within
    // 0.02 of enumeration and the worst stay bounded
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> dim(2, 3);
    int within = 0;
    const int total = 400;
    for (int t = 0; t < total; ++t) {
        const auto w = random_weights(dim(rng), dim(rng), rng);
        const auto r = bp_marginals(w);
        const auto ex = exact_marginals(w);
        const double d = linf_diff(r, ex);
        CHECK(d < 0.5);
        if (d <= 0.02) ++within;
    }
    CHECK(within >= total * 9 / 10);
}

TEST_CASE("row scaling leaves marginals unchanged") {
    std::mt19937_64 rng(77);
    const auto w = random_weights(3, 3, rng);
    AssociationWeights s = w;
    const double scales[3] = {17.0, 0.003, 412.0};
    for (int k = 0; k < 3; ++k) {
        s.beta0[k] *= scales[k];
        for (int m = 0; m < 3; ++m) s.beta_at(k, m) *= scales[k];
    }
    const auto r1 = bp_marginals(w);
    const auto r2 = bp_marginals(s);
    CHECK(linf_diff(r1, r2) < 1e-12);
}

TEST_CASE("dominant diagonal recovers the identity assignment") {
    AssociationWeights w;
    w.K = 3;
    w.M = 3;
    w.beta.assign(9, 1e-4);
    for (int k = 0; k < 3; ++k) w.beta_at(k, k) = 1e4;
    w.beta0.assign(3, 1.0);
    w.xi.assign(3, 0.5);
    const auto r = bp_marginals(w);
    for (int k = 0; k < 3; ++k) {
        int arg = 0;
        double best = -1.0;
        for (int m = 0; m <= 3; ++m)
            if (r.legacy_at(k, m) > best) {
                best = r.legacy_at(k, m);
                arg = m;
            }
        CHECK(arg == k + 1);
        CHECK(best > 0.99);
    }
}

TEST_CASE("exact_marginals edge cases") {
    SUBCASE("no features: every measurement is unassigned") {
        AssociationWeights w;
        w.K = 0;
        w.M = 2;
        w.xi = {0.4, 1.2};
        const auto r = exact_marginals(w);
        CHECK(r.meas_at(0, 0) == doctest::Approx(1.0));
        CHECK(r.meas_at(1, 0) == doctest::Approx(1.0));
    }
    SUBCASE("2x2 rows sum to one") {
        std::mt19937_64 rng(5);
        const auto w = random_weights(2, 2, rng);
        const auto r = exact_marginals(w);
        for (int k = 0; k < 2; ++k) {
            double s = 0.0;
            for (int m = 0; m <= 2; ++m) s += r.legacy_at(k, m);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    SUBCASE("instances beyond the enumeration bound are rejected") {
        std::mt19937_64 rng(6);
        const auto w = random_weights(7, 2, rng);
        CHECK_THROWS_AS(exact_marginals(w), std::invalid_argument);
    }
}

TEST_CASE("invalid weights are rejected") {
    AssociationWeights w;
    w.K = 1;
    w.M = 1;
    w.beta = {-1.0};
    w.beta0 = {1.0};
    w.xi = {0.0};
    CHECK_THROWS_AS(bp_marginals(w), std::invalid_argument);
    w.beta = {std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(bp_marginals(w), std::invalid_argument);
    w.beta = {1.0};
    w.beta0 = {1.0, 2.0};  // size mismatch
    CHECK_THROWS_AS(bp_marginals(w), std::invalid_argument);
}
