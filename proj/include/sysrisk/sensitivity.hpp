#ifndef SYSRISK_SENSITIVITY_HPP
#define SYSRISK_SENSITIVITY_HPP

#include <optional>
#include <string>
#include <vector>

#include "sysrisk/types.hpp"

namespace sysrisk {

// Perturbation direction with per-group aggregates Vbar_m.
struct Direction {
    Matrix v;    // N x S
    Matrix vbar; // h x S
};

Direction make_direction(const Model& model, Matrix v);

struct FdEntry {
    std::string name;
    double analytic = 0.0;
    double finite_difference = 0.0;
    double mismatch = 0.0; // |analytic - finite_difference|
};

struct SensitivityReport {
    std::vector<double> group_marginals;      // d/de d_m
    double total_marginal = 0.0;              // d/de rho
    std::vector<double> local_causal;         // d/de E_{Q^m}[Y^n_{X+eV}], fixed Q
    std::vector<double> allocation_marginals; // d/de E_{Q^m_{X+eV}}[Y^n_{X+eV}]
    double penalty_marginal = 0.0;            // d/de alpha_B(Q_{X+eV})
    std::vector<FdEntry> fd_residuals;
};

struct CashShiftReport {
    double rho_base = 0.0;
    double rho_shifted = 0.0;
    double expected = 0.0; // rho_base - sum of group levels of the shift
    double defect = 0.0;   // |rho_shifted - expected|
    // Central-difference check of d/de rho(X + eZ) against -sum_n Z^n; only
    // meaningful (and only filled) for scenario-constant shifts.
    std::optional<double> directional_defect;
};

// Cash additivity along an allocation-class element: rho(X + Z) must equal
// rho(X) minus the total of Z's group levels. Z has to satisfy clearing;
// otherwise NotInC.
CashShiftReport cash_shift_check(const Model& model, const Allocation& shift);

struct MarginalReport {
    std::vector<double> per_group;    // analytic E_{Q^m}[-Vbar_m]
    double total = 0.0;
    std::vector<double> per_group_fd; // central differences of d_m
    double total_fd = 0.0;
    double max_mismatch = 0.0;
};

// Marginal risk contributions for an exponential model, analytic against
// central finite differences of the group levels at the given step.
MarginalReport marginal_contribution(const Model& model, const Direction& direction,
                                     double fd_eps = 1e-4);

// Finite-difference total marginal through the primal solver; the fallback
// path for general utilities.
double fd_total_marginal_primal(const Model& model, const Direction& direction,
                                double fd_eps = 1e-4);

// Full sensitivity table: group and total marginals, local causal
// responsibilities, marginal risk allocations, penalty sensitivity, and the
// per-group density sensitivities evaluated at Z = Xbar_m. Every analytic
// value is paired with a central finite difference in fd_residuals.
SensitivityReport allocation_sensitivities(const Model& model, const Direction& direction,
                                           double fd_eps = 1e-4);

// d/de E_{Q^m_{X+eV}}[Z] for a fixed payoff row Z: analytic covariance form
// and its finite difference.
FdEntry density_sensitivity(const Model& model, const Direction& direction,
                            std::size_t group, std::span<const double> payoff,
                            double fd_eps = 1e-4);

struct SplitReport {
    double lhs = 0.0;   // E_{Q^m}[sum of subgroup allocations], original grouping
    double rhs = 0.0;   // subgroup level after splitting it out
    double slack = 0.0; // rhs - lhs, nonnegative up to tolerance
};

// Compares the valuation of a subgroup's allocation before and after the
// subgroup is split into its own group. `subgroup` holds bank indices that
// must lie inside group `group`; passing the whole group degenerates to the
// identity refinement and yields equality.
SplitReport split_compare(const Model& model, std::size_t group,
                          const std::vector<std::size_t>& subgroup);

// Singleton form of the comparison for every bank; returns one report per
// bank, in bank order.
std::vector<SplitReport> singleton_sweep(const Model& model);

// Fully pooled (one group) allocations valued against the fully
// deterministic per-bank levels. Grouping of the input model is ignored;
// positions, utilities and B are reused.
std::vector<SplitReport> pooled_vs_deterministic(const Model& model);

// Rebuilds the model with a different grouping (positions, utilities and B
// unchanged).
Model regroup(const Model& model, std::vector<std::vector<std::size_t>> groups);

} // namespace sysrisk

#endif
