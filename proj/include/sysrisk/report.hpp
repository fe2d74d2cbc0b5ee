#ifndef SYSRISK_REPORT_HPP
#define SYSRISK_REPORT_HPP

#include <optional>
#include <vector>

#include "sysrisk/types.hpp"

namespace sysrisk {

struct Residuals {
    double budget = 0.0;          // |E[sum u_n(X^n + Y^n)] - B|
    double clearing = 0.0;        // worst relative clearing defect
    std::optional<double> duality_gap;     // |rho - dual objective at Q|
    std::optional<double> full_allocation; // |sum_n rho^n - rho|
    std::optional<double> cross_method;    // max pairwise |delta rho| (method=all)
};

// Assembled solution of one risk computation. Dual-side fields are absent
// when the producing engine does not construct a dual optimizer.
struct RiskReport {
    double rho = 0.0;
    std::vector<double> group_levels;           // d_m
    Matrix allocation;                          // Y, N x S
    std::optional<DensityVector> dual_densities;
    std::optional<std::vector<double>> risk_allocations; // rho^n = E_{Q^m(n)}[Y^n]
    std::optional<double> penalty;              // alpha_B(Q)
    std::optional<double> lambda_star;
    Residuals residuals;
};

} // namespace sysrisk

#endif
