#include <cmath>
#include <random>

#include <doctest.h>

#include "sysrisk/exponential_engine.hpp"
#include "sysrisk/probability.hpp"
#include "sysrisk/sensitivity.hpp"
#include "test_support.hpp"

using namespace sysrisk;
using namespace sysrisk::testing;

namespace {

// Scalar oracle for one bank, one group: the constant y solving
// E[-e^{-(X + y)}] = B, found by bisection.
double constant_cash_oracle(const ScenarioSpace& space, std::span<const double> x,
                            double alpha, double level) {
    auto aggregate = [&](double y) {
        double acc = 0.0;
        for (std::size_t s = 0; s < space.size(); ++s)
            acc += space.probabilities[s] * (-std::exp(-alpha * (x[s] + y)) / alpha);
        return acc;
    };
    double lo = -50.0, hi = 50.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (aggregate(mid) < level)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

DensityVector random_feasible_density(const Model& model, std::mt19937& rng) {
    std::uniform_real_distribution<double> raw(0.05, 1.0);
    DensityVector q;
    q.densities = Matrix(model.group_count(), model.scenarios());
    for (std::size_t m = 0; m < model.group_count(); ++m) {
        double mass = 0.0;
        for (std::size_t s = 0; s < model.scenarios(); ++s) {
            q.densities.at(m, s) = raw(rng);
            mass += model.space.probabilities[s] * q.densities.at(m, s);
        }
        for (std::size_t s = 0; s < model.scenarios(); ++s) q.densities.at(m, s) /= mass;
    }
    return q;
}

double dual_objective(const Model& model, const DensityVector& q) {
    const ExponentialDerived derived = derive_exponential(model);
    double value = -penalty_exponential(model, q);
    for (std::size_t m = 0; m < model.group_count(); ++m)
        value -= expect_q(model.space, q.row(m), derived.xbar.row(m));
    return value;
}

} // namespace

TEST_CASE("group levels on the fixtures") {
    CHECK(group_levels(fix_a())[0] == doctest::Approx(kLnCosh1).epsilon(1e-12));

    // Independent scalar solve of the budget equation.
    const Model a = fix_a();
    const double oracle =
        constant_cash_oracle(a.space, a.positions.values.row(0), 1.0, -1.0);
    CHECK(group_levels(a)[0] == doctest::Approx(oracle).epsilon(1e-11));

    const std::vector<double> hedge = group_levels(fix_b());
    CHECK(std::abs(hedge[0]) <= 1e-12);

    const std::vector<double> split = group_levels(fix_b_det());
    CHECK(split[0] == doctest::Approx(kLnCosh1).epsilon(1e-12));
    CHECK(split[1] == doctest::Approx(kLnCosh1).epsilon(1e-12));
}

TEST_CASE("optimal allocation on the fixtures") {
    const Model b = fix_b();
    const Allocation hedge = optimal_allocation(b, group_levels(b));
    CHECK(hedge.y.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(hedge.y.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hedge.y.at(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hedge.y.at(1, 1) == doctest::Approx(-1.0).epsilon(1e-12));

    const Model a = fix_a();
    const Allocation constant = optimal_allocation(a, group_levels(a));
    CHECK(constant.y.at(0, 0) == doctest::Approx(kLnCosh1).epsilon(1e-12));
    CHECK(constant.y.at(0, 1) == doctest::Approx(kLnCosh1).epsilon(1e-12));

    const Model det = fix_b_det();
    const Allocation each = optimal_allocation(det, group_levels(det));
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t s = 0; s < 2; ++s)
            CHECK(each.y.at(n, s) == doctest::Approx(kLnCosh1).epsilon(1e-12));
}

TEST_CASE("dual density masses") {
    const Model b = fix_b();
    const DensityVector hedge = dual_density(b);
    CHECK(hedge.densities.at(0, 0) == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(hedge.densities.at(0, 1) == doctest::Approx(1.0).epsilon(1e-13));

    const Model a = fix_a();
    const DensityVector q = dual_density(a);
    const double mass0 = 0.5 * q.densities.at(0, 0);
    const double mass1 = 0.5 * q.densities.at(0, 1);
    CHECK(mass0 == doctest::Approx(0.119203).epsilon(1e-5));
    CHECK(mass1 == doctest::Approx(0.880797).epsilon(1e-5));

    // Oracle: maximize the one-group dual objective over the 2-simplex by a
    // fine grid on the first scenario mass.
    double best_mass = 0.0, best_value = -1e300;
    for (int i = 1; i < 20000; ++i) {
        const double m0 = i / 20000.0;
        DensityVector trial;
        trial.densities = Matrix(1, 2);
        trial.densities.at(0, 0) = m0 / 0.5;
        trial.densities.at(0, 1) = (1.0 - m0) / 0.5;
        const double value = dual_objective(a, trial);
        if (value > best_value) {
            best_value = value;
            best_mass = m0;
        }
    }
    CHECK(mass0 == doctest::Approx(best_mass).epsilon(2e-4));

    const Model det = fix_b_det();
    const DensityVector per_group = dual_density(det);
    CHECK(0.5 * per_group.densities.at(0, 0) == doctest::Approx(0.119203).epsilon(1e-5));
    CHECK(0.5 * per_group.densities.at(0, 1) == doctest::Approx(0.880797).epsilon(1e-5));
}

TEST_CASE("exponential penalty") {
    const Model b = fix_b();
    DensityVector p;
    p.densities = Matrix(1, 2, 1.0);
    CHECK(penalty_exponential(b, p) == doctest::Approx(0.0).epsilon(1e-14));

    const Model a = fix_a();
    CHECK(penalty_exponential(a, dual_density(a)) ==
          doctest::Approx(0.327813).epsilon(1e-5));
    DensityVector pa;
    pa.densities = Matrix(1, 2, 1.0);
    CHECK(penalty_exponential(a, pa) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("risk report on the fixtures") {
    const RiskReport a = risk_report(fix_a());
    CHECK(a.rho == doctest::Approx(kLnCosh1).epsilon(1e-12));
    CHECK((*a.risk_allocations)[0] == doctest::Approx(kLnCosh1).epsilon(1e-11));
    CHECK(*a.lambda_star == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(*a.penalty == doctest::Approx(0.327813).epsilon(1e-5));

    const RiskReport b = risk_report(fix_b());
    CHECK(std::abs(b.rho) <= 1e-12);
    CHECK(std::abs((*b.risk_allocations)[0]) <= 1e-12);
    CHECK(std::abs((*b.risk_allocations)[1]) <= 1e-12);
    CHECK(*b.lambda_star == doctest::Approx(1.0).epsilon(1e-14));

    const RiskReport det = risk_report(fix_b_det());
    CHECK(det.rho == doctest::Approx(2.0 * kLnCosh1).epsilon(1e-12));
    CHECK((*det.risk_allocations)[0] == doctest::Approx(kLnCosh1).epsilon(1e-11));
    CHECK((*det.risk_allocations)[1] == doctest::Approx(kLnCosh1).epsilon(1e-11));
}

TEST_CASE("closed form invariants on random models") {
    std::mt19937 rng(4242);
    for (int trial = 0; trial < 60; ++trial) {
        const Model model = random_model(rng);
        const RiskReport report = risk_report(model);
        const double scale = 1.0 + std::abs(report.rho);
        CHECK(report.residuals.clearing <= 1e-12);
        CHECK(report.residuals.budget <= 1e-10 * std::abs(model.acceptance_level));
        CHECK(*report.residuals.duality_gap <= 1e-9 * scale);
        CHECK(*report.residuals.full_allocation <= 1e-9 * scale);
    }
}

TEST_CASE("weak duality against random feasible densities") {
    std::mt19937 rng(555);
    for (int trial = 0; trial < 5; ++trial) {
        const Model model = random_model(rng);
        const double rho = risk_report(model).rho;
        for (int probe = 0; probe < 100; ++probe) {
            const DensityVector q = random_feasible_density(model, rng);
            CHECK(dual_objective(model, q) <= rho + 1e-9);
        }
    }
}

TEST_CASE("group locality is bitwise") {
    std::mt19937 rng(808);
    RandomModelBounds bounds;
    bounds.max_groups = 3;
    for (int trial = 0; trial < 20; ++trial) {
        Model model = random_model(rng, bounds);
        if (model.group_count() < 2) continue;
        const std::vector<double> base_levels = group_levels(model);
        const Allocation base_alloc = optimal_allocation(model, base_levels);

        // Kick every bank outside group 0.
        Model perturbed = model;
        std::uniform_real_distribution<double> bump(-1.0, 1.0);
        for (std::size_t n = 0; n < model.banks(); ++n) {
            if (model.grouping.group_of[n] == 0) continue;
            for (std::size_t s = 0; s < model.scenarios(); ++s)
                perturbed.positions.values.at(n, s) += bump(rng);
        }
        const std::vector<double> new_levels = group_levels(perturbed);
        const Allocation new_alloc = optimal_allocation(perturbed, new_levels);
        CHECK(new_levels[0] == base_levels[0]);
        for (std::size_t bank : model.grouping.groups[0])
            for (std::size_t s = 0; s < model.scenarios(); ++s)
                CHECK(new_alloc.y.at(bank, s) == base_alloc.y.at(bank, s));
    }
}

TEST_CASE("coarser groupings reduce rho") {
    std::mt19937 rng(31);
    RandomModelBounds bounds;
    bounds.max_banks = 5;
    bounds.max_groups = 5;
    for (int trial = 0; trial < 30; ++trial) {
        const Model fine = random_model(rng, bounds);
        if (fine.group_count() < 2) continue;
        // Merge the first two groups.
        std::vector<std::vector<std::size_t>> merged;
        std::vector<std::size_t> joined = fine.grouping.groups[0];
        joined.insert(joined.end(), fine.grouping.groups[1].begin(),
                      fine.grouping.groups[1].end());
        merged.push_back(joined);
        for (std::size_t m = 2; m < fine.group_count(); ++m)
            merged.push_back(fine.grouping.groups[m]);
        const Model coarse = regroup(fine, merged);
        const double rho_fine = risk_report(fine).rho;
        const double rho_coarse = risk_report(coarse).rho;
        CHECK(rho_coarse <= rho_fine + 1e-9);
    }
}

TEST_CASE("general utilities are rejected by the closed form") {
    const Model general = fix_a(true);
    try {
        group_levels(general);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotExponential);
    }
    CHECK_THROWS_AS(risk_report(general), Error);
    CHECK_THROWS_AS(dual_density(general), Error);
}

TEST_CASE("log-sum-exp keeps huge positions finite") {
    ScenarioSpace space{{0.5, 0.5}};
    Positions positions{Matrix::from_rows({{600.0, -600.0}})};
    const Model model =
        validate_model(space, positions, {{0}}, exponential_family({1.0}), -1.0);
    const RiskReport report = risk_report(model);
    CHECK(std::isfinite(report.rho));
    CHECK(report.rho == doctest::Approx(600.0 - std::log(2.0)).epsilon(1e-12));
}
