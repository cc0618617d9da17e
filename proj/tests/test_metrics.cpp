#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mpslam/metrics.hpp"

using namespace mpslam;

TEST_CASE("rmse_position") {
    const std::vector<Point2> truth{{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}};

    SUBCASE("perfect estimates give zeros") {
        const std::vector<std::vector<Point2>> est{truth, truth};
        for (double v : rmse_position(est, truth)) CHECK(v == doctest::Approx(0.0));
    }

    SUBCASE("constant 3-4 offset gives 5 everywhere") {
        std::vector<Point2> off = truth;
        for (auto& p : off) p = p + Vec2{3.0, 4.0};
        const std::vector<std::vector<Point2>> est{off};
        for (double v : rmse_position(est, truth)) CHECK(v == doctest::Approx(5.0));
    }

    SUBCASE("single run reduces to the absolute error") {
        std::vector<Point2> est1 = truth;
        est1[1] = {1.0, 0.25};
        const auto r = rmse_position({est1}, truth);
        CHECK(r[0] == doctest::Approx(0.0));
        CHECK(r[1] == doctest::Approx(0.25));
    }

    SUBCASE("length mismatch is an error") {
        const std::vector<std::vector<Point2>> est{{{0.0, 0.0}}};
        CHECK_THROWS_AS(rmse_position(est, truth), std::invalid_argument);
    }
}

TEST_CASE("rmse_orientation") {
    SUBCASE("identical is zero") {
        const std::vector<double> truth{0.1, -0.2, 3.0};
        const auto r = rmse_orientation({truth}, truth);
        for (double v : r) CHECK(v == doctest::Approx(0.0));
    }

    SUBCASE("+pi against -pi wraps to zero") {
        const std::vector<double> truth{-kPi};
        const std::vector<std::vector<double>> est{{kPi}};
        CHECK(rmse_orientation(est, truth)[0] == doctest::Approx(0.0).epsilon(1e-9));
    }

    SUBCASE("constant 5 degree offset") {
        const double off = 5.0 * kPi / 180.0;
        const std::vector<double> truth{0.0, 1.0, -2.0};
        std::vector<double> est = truth;
        for (auto& v : est) v += off;
        const auto r = rmse_orientation({est}, truth);
        for (double v : r) CHECK(v == doctest::Approx(5.0).epsilon(1e-9));
    }

    SUBCASE("adding a full turn changes nothing") {
        const std::vector<double> truth{0.3, 0.4};
        std::vector<double> est{0.35, 0.38};
        const auto base = rmse_orientation({est}, truth);
        for (auto& v : est) v += 2.0 * kPi;
        const auto shifted = rmse_orientation({est}, truth);
        CHECK(shifted[0] == doctest::Approx(base[0]).epsilon(1e-9));
        CHECK(shifted[1] == doctest::Approx(base[1]).epsilon(1e-9));
    }
}

TEST_CASE("mode_belief_trace") {
    const std::vector<Point2> truth{{0.0, 0.0}, {10.0, 0.0}};

    SUBCASE("single run with a perfect map passes the PMFs through") {
        RunMapTrace run(3);
        for (int s = 0; s < 3; ++s) {
            run[s].push_back({1, {0.01, 0.0}, 0.8, 0.2, 0.9});
            run[s].push_back({2, {10.0, 0.01}, 0.1, 0.9, 0.8});
        }
        const auto traces = mode_belief_trace({run}, truth, 0.5);
        REQUIRE(traces.size() == 2);
        for (int s = 0; s < 3; ++s) {
            CHECK(traces[0].p_va[s] == doctest::Approx(0.8));
            CHECK(traces[1].p_ps[s] == doctest::Approx(0.9));
            CHECK(traces[0].matched[s] == 1);
        }
    }

    SUBCASE("a feature never detected yields an empty trace") {
        RunMapTrace run(3);
        for (int s = 0; s < 3; ++s) run[s].push_back({1, {0.0, 0.0}, 0.8, 0.2, 0.9});
        const auto traces = mode_belief_trace({run}, truth, 0.5);
        CHECK(traces[0].ever_matched());
        CHECK_FALSE(traces[1].ever_matched());
    }

    SUBCASE("two runs average their beliefs") {
        RunMapTrace r1(1), r2(1);
        r1[0].push_back({1, {0.0, 0.0}, 1.0, 0.0, 0.9});
        r2[0].push_back({1, {0.0, 0.0}, 0.0, 1.0, 0.9});
        const auto traces = mode_belief_trace({r1, r2}, {{0.0, 0.0}}, 0.5);
        CHECK(traces[0].p_va[0] == doctest::Approx(0.5));
        CHECK(traces[0].p_ps[0] == doctest::Approx(0.5));
        CHECK(traces[0].matched[0] == 2);
    }

    SUBCASE("greedy matching assigns each estimate at most once") {
        RunMapTrace run(1);
        run[0].push_back({1, {0.1, 0.0}, 1.0, 0.0, 0.9});  // closest to truth 0
        const auto traces = mode_belief_trace({run}, {{0.0, 0.0}, {0.3, 0.0}}, 0.5);
        CHECK(traces[0].matched[0] == 1);
        CHECK(traces[1].matched[0] == 0);  // the single estimate was consumed
    }

    SUBCASE("match radius must be positive") {
        CHECK_THROWS_AS(mode_belief_trace({}, truth, 0.0), std::invalid_argument);
    }
}
