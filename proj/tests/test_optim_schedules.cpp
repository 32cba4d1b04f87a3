#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "depthfill/train/optim.hpp"
#include "depthfill/train/schedules.hpp"
#include "test_util.hpp"

using namespace depthfill;
using namespace depthfill::train;

TEST_CASE("poly schedule") {
    REQUIRE(poly_lr(0.01, 0, 1000, 0.9) == 0.01);
    REQUIRE(poly_lr(0.01, 1000, 1000, 0.9) == 0.0);
    REQUIRE(poly_lr(0.01, 500, 1000, 0.9) == Catch::Approx(0.0053589).margin(1e-7));

    SECTION("matches the closed form to 1e-12 at quarter points") {
        const long long max_iter = 4000;
        for (long long it : {0LL, 1000LL, 2000LL, 3000LL, 4000LL}) {
            const double closed =
                0.01 * std::pow(1.0 - static_cast<double>(it) / max_iter, 0.9);
            REQUIRE(std::abs(poly_lr(0.01, it, max_iter, 0.9) - closed) < 1e-12);
        }
    }

    SECTION("non-increasing over the whole range") {
        double prev = poly_lr(0.01, 0, 777, 0.9);
        for (long long it = 1; it <= 777; ++it) {
            const double cur = poly_lr(0.01, it, 777, 0.9);
            REQUIRE(cur <= prev);
            prev = cur;
        }
    }

    REQUIRE_THROWS_AS(poly_lr(0.01, 1001, 1000, 0.9), ScheduleError);
    REQUIRE_THROWS_AS(poly_lr(0.01, -1, 1000, 0.9), ScheduleError);
    REQUIRE_THROWS_AS(poly_lr(0.01, 0, 0, 0.9), ScheduleError);
}

TEST_CASE("linear decay schedule") {
    REQUIRE(linear_decay_lr(0.0002, 50, 100, 200) == 0.0002);
    REQUIRE(linear_decay_lr(0.0002, 150, 100, 200) == Catch::Approx(0.0001).epsilon(1e-15));
    REQUIRE(linear_decay_lr(0.0002, 200, 100, 200) == 0.0);
    REQUIRE(linear_decay_lr(0.0002, 100, 100, 200) == 0.0002);

    SECTION("non-increasing in epoch") {
        double prev = linear_decay_lr(0.0002, 0, 100, 200);
        for (long long e = 1; e <= 200; ++e) {
            const double cur = linear_decay_lr(0.0002, e, 100, 200);
            REQUIRE(cur <= prev);
            prev = cur;
        }
    }

    REQUIRE_THROWS_AS(linear_decay_lr(0.0002, 201, 100, 200), ScheduleError);
    REQUIRE_THROWS_AS(linear_decay_lr(0.0002, -1, 100, 200), ScheduleError);
    REQUIRE_THROWS_AS(linear_decay_lr(0.0002, 0, 200, 200), ScheduleError);
}

TEST_CASE("sgd with momentum") {
    SECTION("hand-computed scalar step") {
        Tensor<double> p({1}), g({1}), v({1});
        p[0] = 1.0;
        g[0] = 0.5;
        v[0] = 0.2;
        sgd_momentum_step(p, g, v, 0.01, 0.9, 0.0005);
        REQUIRE(v[0] == Catch::Approx(0.6805).epsilon(1e-12));
        REQUIRE(p[0] == Catch::Approx(0.993195).epsilon(1e-12));
    }

    SECTION("zero momentum and decay reduce to plain gradient descent") {
        Rng rng(1);
        auto p = testutil::random_tensor<double>({3, 4}, rng);
        auto g = testutil::random_tensor<double>({3, 4}, rng);
        Tensor<double> v({3, 4});
        auto expect = p;
        for (std::size_t i = 0; i < expect.size(); ++i) expect[i] -= 0.1 * g[i];
        sgd_momentum_step(p, g, v, 0.1, 0.0, 0.0);
        for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(p[i] == Catch::Approx(expect[i]));
    }

    SECTION("pure inertia with zero gradient") {
        Tensor<double> p({1}), g({1}), v({1});
        p[0] = 2.0;
        v[0] = 0.4;
        sgd_momentum_step(p, g, v, 0.01, 0.9, 0.0);
        REQUIRE(p[0] == Catch::Approx(2.0 - 0.01 * 0.9 * 0.4).epsilon(1e-12));
    }

    SECTION("shape mismatch throws") {
        Tensor<double> p({2}), g({3}), v({2});
        REQUIRE_THROWS_AS(sgd_momentum_step(p, g, v, 0.1, 0.9, 0.0), ShapeError);
    }
}

TEST_CASE("adam") {
    SECTION("zero gradient leaves the parameter unchanged") {
        Tensor<double> p({2}), g({2}), m({2}), v({2});
        p[0] = 1.0;
        p[1] = -2.0;
        adam_step(p, g, m, v, 1, 0.0002, 0.5, 0.999, 1e-8);
        REQUIRE(p[0] == 1.0);
        REQUIRE(p[1] == -2.0);
    }

    SECTION("first step has magnitude ~lr regardless of gradient scale") {
        for (double scale : {1.0, 2.0, 100.0}) {
            Tensor<double> p({1}), g({1}), m({1}), v({1});
            g[0] = scale;
            adam_step(p, g, m, v, 1, 0.0002, 0.5, 0.999, 1e-8);
            REQUIRE(p[0] == Catch::Approx(-0.0002).margin(1e-9));
        }
    }

    SECTION("scalar hand case") {
        Tensor<double> p({1}), g({1}), m({1}), v({1});
        g[0] = 1.0;
        adam_step(p, g, m, v, 1, 0.0002, 0.5, 0.999, 1e-8);
        REQUIRE(p[0] == Catch::Approx(-0.0002).margin(1e-9));
        REQUIRE(m[0] == Catch::Approx(0.5).epsilon(1e-12));
        REQUIRE(v[0] == Catch::Approx(0.001).epsilon(1e-12));
    }

    SECTION("step count below one throws") {
        Tensor<double> p({1}), g({1}), m({1}), v({1});
        REQUIRE_THROWS_AS(adam_step(p, g, m, v, 0, 0.1, 0.9, 0.999, 1e-8), ConfigError);
    }
}
