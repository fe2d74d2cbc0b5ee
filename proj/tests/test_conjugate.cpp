#include <cmath>
#include <random>

#include <doctest.h>

#include "sysrisk/conjugate.hpp"
#include "test_support.hpp"

using namespace sysrisk;
using sysrisk::testing::exponential_as_general;

TEST_CASE("exponential conjugate closed form") {
    const Utility u1 = Utility::exponential(1.0);
    const ConjugateValue at_one = conjugate_eval(u1, 1.0);
    CHECK(at_one.v == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(at_one.vprime == doctest::Approx(0.0).epsilon(1e-15));

    const Utility u2 = Utility::exponential(2.0);
    const double y = std::exp(2.0);
    const ConjugateValue at_e2 = conjugate_eval(u2, y);
    // Direct formula oracle: (y ln y - y) / alpha at y = e^2.
    CHECK(at_e2.v == doctest::Approx((y * 2.0 - y) / 2.0).epsilon(1e-15));
    CHECK(at_e2.v == doctest::Approx(3.694528).epsilon(1e-6));
    CHECK(at_e2.vprime == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("general path reproduces the exponential closed form") {
    const Utility closed = Utility::exponential(1.0);
    const Utility general = exponential_as_general(1.0);

    const ConjugateValue at_half = conjugate_eval(general, 0.5);
    CHECK(at_half.vprime == doctest::Approx(std::log(0.5)).epsilon(1e-10));

    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> log_y(std::log(1e-6), std::log(1e6));
    for (int trial = 0; trial < 200; ++trial) {
        const double y = std::exp(log_y(rng));
        const ConjugateValue a = conjugate_eval(closed, y);
        const ConjugateValue b = conjugate_eval(general, y);
        CHECK(std::abs(a.vprime - b.vprime) <= 1e-10 * (1.0 + std::abs(a.vprime)));
        CHECK(std::abs(a.v - b.v) <= 1e-10 * (1.0 + std::abs(a.v)));
    }
}

TEST_CASE("conjugacy identity u(-v'(y)) = -y v'(y) + v(y)") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> log_y(std::log(1e-6), std::log(1e6));
    std::uniform_real_distribution<double> alpha_dist(0.2, 5.0);
    for (int trial = 0; trial < 100; ++trial) {
        const double alpha = alpha_dist(rng);
        for (const Utility& u :
             {Utility::exponential(alpha), exponential_as_general(alpha)}) {
            const double y = std::exp(log_y(rng));
            const ConjugateValue c = conjugate_eval(u, y);
            const double left = u.u(-c.vprime);
            const double right = -y * c.vprime + c.v;
            CHECK(std::abs(left - right) <= 1e-10 * (1.0 + std::abs(left)));
        }
    }
}

TEST_CASE("v' is strictly increasing") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> log_y(std::log(1e-5), std::log(1e5));
    const Utility u = exponential_as_general(0.7);
    for (int trial = 0; trial < 100; ++trial) {
        double y1 = std::exp(log_y(rng));
        double y2 = std::exp(log_y(rng));
        if (y1 == y2) continue;
        if (y1 > y2) std::swap(y1, y2);
        CHECK(conjugate_eval(u, y1).vprime < conjugate_eval(u, y2).vprime);
    }
}

TEST_CASE("nonpositive dual arguments are rejected") {
    const Utility u = Utility::exponential(1.0);
    CHECK_THROWS_AS(conjugate_eval(u, 0.0), Error);
    CHECK_THROWS_AS(conjugate_eval(u, -1.0), Error);
    try {
        conjugate_eval(u, -1.0);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonPositiveDual);
    }
}

TEST_CASE("conjugate at zero density equals the utility upper limit") {
    CHECK(conjugate_at_zero(Utility::exponential(2.0)) == 0.0);
    CHECK(conjugate_at_zero(exponential_as_general(2.0)) ==
          doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("inversion failure when the slope never straddles the target") {
    // Slope bounded below by 2, so inverting at y = 1 cannot bracket.
    const Utility u = Utility::general([](double x) { return 2.0 * x - std::exp(-x); },
                                       [](double x) { return 2.0 + std::exp(-x); });
    try {
        conjugate_eval(u, 1.0);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InversionFailure);
    }
}
