#ifndef SYSRISK_DUAL_ENGINE_HPP
#define SYSRISK_DUAL_ENGINE_HPP

#include <cstddef>
#include <vector>

#include "sysrisk/types.hpp"

namespace sysrisk {

struct LambdaStar {
    double value = 0.0;    // lambda* > 0
    double residual = 0.0; // first-order-condition residual at the solution
    std::size_t iterations = 0;
};

struct DualAscentState {
    DensityVector q;
    double objective = 0.0;    // dual value at q
    double stationarity = 0.0; // max over groups of std_s of within-group sums of Yhat
    std::size_t iterations = 0;
};

struct DualEngineOptions {
    double lambda_bracket_rel_tol = 1e-14; // bracket width cap, relative to eta
    double lambda_residual_tol = 1e-12;
    std::size_t max_doublings = 200;
    double ascent_tol = 1e-6;       // stationarity certificate, scaled by 1 + |rho|
    std::size_t max_iterations = 50000;
};

struct RhoGivenQ {
    double rho_q = 0.0;
    Matrix yhat; // N x S, the fixed-Q optimal allocation
};

// Solves the first-order condition for the penalty multiplier:
//   -B + sum_n E[v_n(lambda xi_n)] - lambda sum_n E[xi_n v'_n(lambda xi_n)] = 0,
// working in eta = 1/lambda where the objective is strictly convex. The
// bracket is grown by doubling/halving from eta = 1 until the derivative
// changes sign, then bisected.
LambdaStar solve_lambda_star(const Model& model, const DensityVector& q,
                             const DualEngineOptions& options = {});

// Penalty alpha_B(Q) = sum_n E[xi_n v'_n(lambda* xi_n)] for any utilities.
double penalty_general(const Model& model, const DensityVector& q,
                       const DualEngineOptions& options = {});

// Fixed-Q risk rho^Q = -sum_n E_{Q^n}[X^n] - alpha_B(Q) and the allocation
// Yhat^n = -X^n - v'_n(lambda* xi_n). A vanishing density on a charged
// scenario makes Yhat unbounded there and raises ZeroDensityScenario.
RhoGivenQ rho_given_q(const Model& model, const DensityVector& q,
                      const DualEngineOptions& options = {});

// Maximizes the dual objective sum_m E_{Q^m}[-Xbar_m] - alpha_B(Q) over
// normalized nonnegative group densities. Densities are parametrized by
// per-scenario scores mapped through a normalized exponential, which keeps
// the iterates strictly inside the simplex. Stops on the optimality
// certificate: within-group sums of Yhat_Q scenario-constant up to
// ascent_tol * (1 + |rho|).
DualAscentState maximize_dual(const Model& model, const DualEngineOptions& options = {});

// Bank value function U_n(a) = inf_{lambda>0} { lambda (E_{Q^n}[X^n] + a)
//                                               + E[v_n(lambda xi_n)] }.
double value_function(const Model& model, std::size_t bank,
                      std::span<const double> density_row, double budget,
                      const DualEngineOptions& options = {});

// Splits a total budget A across banks to maximize sum_n U_n(a_n); the
// first-order condition equalizes U'_n, solved by bisection on the common
// multiplier.
std::vector<double> optimal_split(const Model& model, const DensityVector& q,
                                  double total,
                                  const DualEngineOptions& options = {});

} // namespace sysrisk

#endif
