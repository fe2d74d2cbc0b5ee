#include <cmath>
#include <random>

#include <doctest.h>

#include "sysrisk/exponential_engine.hpp"
#include "sysrisk/primal_oracle.hpp"
#include "sysrisk/sensitivity.hpp"
#include "test_support.hpp"

using namespace sysrisk;
using namespace sysrisk::testing;

TEST_CASE("primal solve on the fixtures") {
    const PrimalSolution a = primal_solve(fix_a());
    CHECK(a.rho == doctest::Approx(kLnCosh1).epsilon(1e-9));
    CHECK(a.allocation.y.at(0, 0) == doctest::Approx(kLnCosh1).epsilon(1e-8));
    CHECK(a.allocation.y.at(0, 1) == doctest::Approx(kLnCosh1).epsilon(1e-8));
    CHECK(a.kkt_residual <= 1e-8);
    CHECK(std::abs(a.feasibility_residual) <= 1e-8);

    const PrimalSolution b = primal_solve(fix_b());
    CHECK(std::abs(b.rho) <= 1e-9);
    CHECK(b.allocation.y.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-8));
    CHECK(b.allocation.y.at(0, 1) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(b.allocation.y.at(1, 0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(b.allocation.y.at(1, 1) == doctest::Approx(-1.0).epsilon(1e-8));

    const PrimalSolution c = primal_solve(fix_c());
    CHECK(c.rho == doctest::Approx(risk_report(fix_c()).rho).epsilon(1e-6));
}

TEST_CASE("primal matches the closed form on random models") {
    std::mt19937 rng(1001);
    RandomModelBounds bounds;
    bounds.max_scenarios = 8;
    bounds.max_banks = 4;
    for (int trial = 0; trial < 15; ++trial) {
        const Model model = random_model(rng, bounds);
        const RiskReport closed = risk_report(model);
        const PrimalSolution primal = primal_solve(model);
        CHECK(std::abs(primal.rho - closed.rho) <= 1e-6 * (1.0 + std::abs(closed.rho)));
        for (std::size_t n = 0; n < model.banks(); ++n)
            for (std::size_t s = 0; s < model.scenarios(); ++s)
                CHECK(std::abs(primal.allocation.y.at(n, s) -
                               closed.allocation.at(n, s)) <= 1e-5);
    }
}

TEST_CASE("primal through the general utility interface") {
    const PrimalSolution a = primal_solve(fix_a(true));
    CHECK(a.rho == doctest::Approx(kLnCosh1).epsilon(1e-8));
    const PrimalSolution c = primal_solve(fix_c(true));
    CHECK(c.rho == doctest::Approx(risk_report(fix_c()).rho).epsilon(1e-6));
}

TEST_CASE("max utility on the fixtures") {
    CHECK(max_utility(fix_a(), kLnCosh1) == doctest::Approx(-1.0).epsilon(1e-8));
    CHECK(max_utility(fix_b(), 0.0) == doctest::Approx(-2.0).epsilon(1e-9));
    CHECK(max_utility(fix_a(), 0.0) == doctest::Approx(-std::cosh(1.0)).epsilon(1e-8));
}

TEST_CASE("pi is nondecreasing and concave on a budget grid") {
    const Model c = fix_c();
    std::vector<double> values;
    for (double budget = -2.0; budget <= 2.01; budget += 0.5)
        values.push_back(max_utility(c, budget));
    for (std::size_t i = 1; i < values.size(); ++i) CHECK(values[i] >= values[i - 1] - 1e-10);
    for (std::size_t i = 1; i + 1 < values.size(); ++i)
        CHECK(values[i] >= 0.5 * (values[i - 1] + values[i + 1]) - 1e-9);
}

TEST_CASE("conjugacy on the fixtures") {
    for (const Model& model : {fix_a(), fix_b(), fix_c()}) {
        const ConjugacyReport report = check_conjugacy(model);
        CHECK(report.pass);
        CHECK(report.value_gap <= 1e-6);
        CHECK(report.allocation_gap <= 1e-5);
    }
}

TEST_CASE("rho is convex and monotone through the primal path") {
    std::mt19937 rng(2002);
    RandomModelBounds bounds;
    bounds.max_scenarios = 6;
    bounds.max_banks = 3;
    std::uniform_real_distribution<double> mix(0.1, 0.9);
    std::uniform_real_distribution<double> bump(0.0, 2.0);
    for (int trial = 0; trial < 8; ++trial) {
        const Model base = random_model(rng, bounds);
        Model other = base;
        for (std::size_t n = 0; n < base.banks(); ++n)
            for (std::size_t s = 0; s < base.scenarios(); ++s)
                other.positions.values.at(n, s) =
                    base.positions.values.at(n, s) + bump(rng) - 1.0;

        const double lambda = mix(rng);
        Model blend = base;
        for (std::size_t n = 0; n < base.banks(); ++n)
            for (std::size_t s = 0; s < base.scenarios(); ++s)
                blend.positions.values.at(n, s) =
                    lambda * base.positions.values.at(n, s) +
                    (1.0 - lambda) * other.positions.values.at(n, s);

        const double rho_base = primal_solve(base).rho;
        const double rho_other = primal_solve(other).rho;
        const double rho_blend = primal_solve(blend).rho;
        CHECK(rho_blend <= lambda * rho_base + (1.0 - lambda) * rho_other + 1e-7);

        Model higher = base;
        for (std::size_t n = 0; n < base.banks(); ++n)
            for (std::size_t s = 0; s < base.scenarios(); ++s)
                higher.positions.values.at(n, s) += bump(rng);
        CHECK(primal_solve(higher).rho <= rho_base + 1e-9);
    }
}

TEST_CASE("uniqueness probe: random restarts agree") {
    std::mt19937 rng(3003);
    RandomModelBounds bounds;
    bounds.max_scenarios = 6;
    bounds.max_banks = 4;
    const Model model = random_model(rng, bounds);
    const PrimalSolution reference = primal_solve(model);

    std::uniform_real_distribution<double> offset(-2.0, 2.0);
    for (int restart = 0; restart < 10; ++restart) {
        PrimalOptions options;
        Matrix y(model.banks(), model.scenarios());
        for (std::size_t n = 0; n < model.banks(); ++n)
            for (std::size_t s = 0; s < model.scenarios(); ++s)
                y.at(n, s) = reference.allocation.y.at(n, s) + offset(rng);
        options.initial_y = std::move(y);
        const PrimalSolution probe = primal_solve(model, options);
        CHECK(std::abs(probe.rho - reference.rho) <= 1e-7 * (1.0 + std::abs(reference.rho)));
        for (std::size_t n = 0; n < model.banks(); ++n)
            for (std::size_t s = 0; s < model.scenarios(); ++s)
                CHECK(std::abs(probe.allocation.y.at(n, s) -
                               reference.allocation.y.at(n, s)) <= 1e-5);
    }
}

TEST_CASE("constraint binds at the primal optimum") {
    std::mt19937 rng(4004);
    for (int trial = 0; trial < 10; ++trial) {
        const Model model = random_model(rng);
        const PrimalSolution primal = primal_solve(model);
        CHECK(std::abs(primal.utility_attained - model.acceptance_level) <= 1e-8);
        CHECK(clearing_defect(model, primal.allocation) <= 1e-13);
    }
}
