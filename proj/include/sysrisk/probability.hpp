#ifndef SYSRISK_PROBABILITY_HPP
#define SYSRISK_PROBABILITY_HPP

#include <span>

#include "sysrisk/types.hpp"

namespace sysrisk {

// log(sum_i exp(values[i])) with the max shifted out. Empty input -> -inf.
double log_sum_exp(std::span<const double> values);

// Plain P-expectation sum_s p_s values[s].
double expect_p(const ScenarioSpace& space, std::span<const double> values);

// E_Q[values] = sum_s p_s * density[s] * values[s] for one group density row.
double expect_q(const ScenarioSpace& space, std::span<const double> density,
                std::span<const double> values);

// COV_Q[a, b] = E_Q[ab] - E_Q[a]E_Q[b].
double cov_q(const ScenarioSpace& space, std::span<const double> density,
             std::span<const double> a, std::span<const double> b);

// Relative entropy H(Q, P) = sum_s p_s xi_s ln xi_s with 0 ln 0 := 0.
// Requires nonnegative entries; normalization is the caller's invariant.
double relative_entropy(const ScenarioSpace& space, std::span<const double> density);

} // namespace sysrisk

#endif
