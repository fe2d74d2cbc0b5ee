#ifndef SYSRISK_TEST_SUPPORT_HPP
#define SYSRISK_TEST_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "sysrisk/types.hpp"

namespace sysrisk::testing {

inline const double kLnCosh1 = std::log(std::cosh(1.0));

inline Utility exponential_as_general(double alpha) {
    return Utility::general([alpha](double x) { return -std::exp(-alpha * x) / alpha; },
                            [alpha](double x) { return std::exp(-alpha * x); });
}

inline UtilityFamily exponential_family(const std::vector<double>& alphas,
                                        bool general_path = false) {
    UtilityFamily utilities;
    for (double alpha : alphas)
        utilities.push_back(general_path ? exponential_as_general(alpha)
                                         : Utility::exponential(alpha));
    return utilities;
}

// S=2, p=(1/2,1/2), one bank, X=(1,-1), alpha=1, B=-1, one group.
inline Model fix_a(bool general_path = false) {
    ScenarioSpace space{{0.5, 0.5}};
    Positions positions{Matrix::from_rows({{1.0, -1.0}})};
    return validate_model(space, positions, {{0}},
                          exponential_family({1.0}, general_path), -1.0);
}

// Two banks in perfect hedge, one group, B=-2.
inline Model fix_b(bool general_path = false) {
    ScenarioSpace space{{0.5, 0.5}};
    Positions positions{Matrix::from_rows({{1.0, -1.0}, {-1.0, 1.0}})};
    return validate_model(space, positions, {{0, 1}},
                          exponential_family({1.0, 1.0}, general_path), -2.0);
}

// fix_b with singleton groups (fully deterministic allocations).
inline Model fix_b_det(bool general_path = false) {
    ScenarioSpace space{{0.5, 0.5}};
    Positions positions{Matrix::from_rows({{1.0, -1.0}, {-1.0, 1.0}})};
    return validate_model(space, positions, {{0}, {1}},
                          exponential_family({1.0, 1.0}, general_path), -2.0);
}

// Three scenarios, two banks, distinct alphas, one group.
inline Model fix_c(bool general_path = false) {
    ScenarioSpace space{{0.2, 0.3, 0.5}};
    Positions positions{Matrix::from_rows({{0.0, 1.0, -1.0}, {2.0, -1.0, 0.0}})};
    return validate_model(space, positions, {{0, 1}},
                          exponential_family({1.0, 2.0}, general_path), -1.5);
}

struct RandomModelBounds {
    std::size_t max_scenarios = 16;
    std::size_t max_banks = 5;
    std::size_t max_groups = 3;
    double position_range = 5.0;
    double alpha_min = 0.2;
    double alpha_max = 5.0;
    double level_min = -10.0;
    double level_max = -0.1;
    bool general_path = false;
};

inline Model random_model(std::mt19937& rng, const RandomModelBounds& bounds = {}) {
    std::uniform_int_distribution<std::size_t> scenario_count(2, bounds.max_scenarios);
    std::uniform_int_distribution<std::size_t> bank_count(1, bounds.max_banks);
    const std::size_t S = scenario_count(rng);
    const std::size_t N = bank_count(rng);
    std::uniform_int_distribution<std::size_t> group_count(
        1, std::min(bounds.max_groups, N));
    const std::size_t h = group_count(rng);

    std::uniform_real_distribution<double> weight(0.05, 1.0);
    std::vector<double> p(S);
    double sum = 0.0;
    for (double& w : p) {
        w = weight(rng);
        sum += w;
    }
    for (double& w : p) w /= sum;
    double fixup = 1.0;
    for (std::size_t s = 0; s + 1 < S; ++s) fixup -= p[s];
    p[S - 1] = fixup;

    std::uniform_real_distribution<double> position(-bounds.position_range,
                                                    bounds.position_range);
    Matrix x(N, S);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t s = 0; s < S; ++s) x.at(n, s) = position(rng);

    // Round-robin assignment over a shuffled bank order keeps groups nonempty.
    std::vector<std::size_t> order(N);
    for (std::size_t n = 0; n < N; ++n) order[n] = n;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> groups(h);
    for (std::size_t i = 0; i < N; ++i) groups[i % h].push_back(order[i]);

    std::uniform_real_distribution<double> alpha(bounds.alpha_min, bounds.alpha_max);
    std::vector<double> alphas(N);
    for (double& a : alphas) a = alpha(rng);

    std::uniform_real_distribution<double> level(bounds.level_min, bounds.level_max);
    return validate_model(ScenarioSpace{std::move(p)}, Positions{std::move(x)},
                          std::move(groups),
                          exponential_family(alphas, bounds.general_path), level(rng));
}

} // namespace sysrisk::testing

#endif
