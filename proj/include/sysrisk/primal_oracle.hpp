#ifndef SYSRISK_PRIMAL_ORACLE_HPP
#define SYSRISK_PRIMAL_ORACLE_HPP

#include <optional>

#include "sysrisk/types.hpp"

namespace sysrisk {

// Brute-force primal solutions, kept numerically independent of the closed
// forms and of the dual machinery so they can serve as ground truth. Only
// scenario-core primitives are shared.

struct PrimalSolution {
    double rho = 0.0;
    Allocation allocation;
    double utility_attained = 0.0;    // E[sum u_n(X^n + Y^n)] at the solution
    double feasibility_residual = 0.0; // utility_attained - B
    double kkt_residual = 0.0;
    std::size_t iterations = 0;
};

struct PrimalOptions {
    double kkt_tol = 1e-9;
    std::size_t max_iterations = 200;
    // Optional warm start; group levels are read off the scenario-wise group
    // sums. Used by the uniqueness probes.
    std::optional<Matrix> initial_y;
};

// Minimizes sum_m d_m over allocations in the grouping class subject to
// E[sum_n u_n(X^n + Y^n)] >= B. Clearing holds exactly by construction: one
// coordinate per group and scenario is eliminated. The binding constraint is
// solved as an equality via a damped Lagrange-Newton iteration on the KKT
// system.
PrimalSolution primal_solve(const Model& model, const PrimalOptions& options = {});

// pi_A(X): maximal expected aggregate utility over the grouping class under
// the budget sum_m d_m <= A (binding at the optimum).
double max_utility(const Model& model, double total_budget,
                   const PrimalOptions& options = {});

struct UtilitySolution {
    double value = 0.0;
    Allocation allocation;
    double kkt_residual = 0.0;
    std::size_t iterations = 0;
};

// As max_utility but also returns the maximizing allocation.
UtilitySolution solve_max_utility(const Model& model, double total_budget,
                                  const PrimalOptions& options = {});

struct ConjugacyReport {
    double rho = 0.0;          // A = rho_B(X)
    double pi_at_rho = 0.0;    // pi_A(X)
    double value_gap = 0.0;    // |pi_A(X) - B|
    double allocation_gap = 0.0; // sup-norm distance of the two optimizers
    bool pass = false;
};

// Verifies B = pi_A(X) at A = rho_B(X) and that both problems return the
// same optimizer.
ConjugacyReport check_conjugacy(const Model& model, const PrimalOptions& options = {});

} // namespace sysrisk

#endif
