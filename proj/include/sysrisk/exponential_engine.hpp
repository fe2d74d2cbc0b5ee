#ifndef SYSRISK_EXPONENTIAL_ENGINE_HPP
#define SYSRISK_EXPONENTIAL_ENGINE_HPP

#include "sysrisk/report.hpp"
#include "sysrisk/types.hpp"

namespace sysrisk {

// Quantities derived from an exponential model: per-group risk tolerances
// beta_m = sum_{k in I_m} 1/alpha_k, the total beta, and the group aggregate
// positions Xbar_m(s) = sum_{k in I_m} X^k(s).
struct ExponentialDerived {
    std::vector<double> beta_m;
    double beta = 0.0;
    Matrix xbar; // h x S
};

ExponentialDerived derive_exponential(const Model& model);

// Optimal group levels d_m = beta_m * log((beta / -B) * E[exp(-Xbar_m / beta_m)]),
// evaluated through log-sum-exp so large positions cannot overflow.
// Throws NotExponential unless every bank has an exponential utility.
std::vector<double> group_levels(const Model& model);

// Optimal allocation Y^k = -X^k + (Xbar_m + d_m) / (beta_m * alpha_k) for
// k in group m, given the levels from group_levels.
Allocation optimal_allocation(const Model& model, const std::vector<double>& levels);

// Dual optimizer: per-group density dQ^m/dP proportional to exp(-Xbar_m / beta_m),
// normalized in the log domain.
DensityVector dual_density(const Model& model);

// Penalty alpha_B(Q) = sum_n (1/alpha_n) * (H(Q^{m(n)}, P) + ln(-B/beta)) for
// any normalized group density vector.
double penalty_exponential(const Model& model, const DensityVector& q);

// Runs the full closed-form pipeline and assembles the report: rho = sum d_m,
// allocation, dual densities, per-bank risk allocations E_{Q^m(n)}[Y^n],
// lambda* = -B/beta, and the budget / clearing / duality / full-allocation
// residual diagnostics.
RiskReport risk_report(const Model& model);

// E[sum_n u_n(X^n + Y^n)] for an arbitrary allocation matrix.
double expected_aggregate_utility(const Model& model, const Matrix& y);

} // namespace sysrisk

#endif
