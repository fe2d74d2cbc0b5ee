#include "sysrisk/sensitivity.hpp"

#include <algorithm>
#include <cmath>

#include "sysrisk/exponential_engine.hpp"
#include "sysrisk/primal_oracle.hpp"
#include "sysrisk/probability.hpp"

namespace sysrisk {

namespace {

Model shift_positions(const Model& model, const Matrix& v, double eps) {
    Model shifted = model;
    for (std::size_t n = 0; n < model.banks(); ++n)
        for (std::size_t s = 0; s < model.scenarios(); ++s)
            shifted.positions.values.at(n, s) += eps * v.at(n, s);
    return shifted;
}

double total_of(const std::vector<double>& values) {
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc;
}

} // namespace

Model regroup(const Model& model, std::vector<std::vector<std::size_t>> groups) {
    return validate_model(model.space, model.positions, std::move(groups),
                          model.utilities, model.acceptance_level);
}

Direction make_direction(const Model& model, Matrix v) {
    if (v.rows() != model.banks() || v.cols() != model.scenarios())
        throw Error(ErrorCode::ShapeMismatch, "direction shape");
    Direction direction;
    direction.vbar = Matrix(model.group_count(), model.scenarios());
    for (std::size_t m = 0; m < model.group_count(); ++m)
        for (std::size_t bank : model.grouping.groups[m])
            for (std::size_t s = 0; s < model.scenarios(); ++s)
                direction.vbar.at(m, s) += v.at(bank, s);
    direction.v = std::move(v);
    return direction;
}

CashShiftReport cash_shift_check(const Model& model, const Allocation& shift) {
    if (shift.y.rows() != model.banks() || shift.y.cols() != model.scenarios() ||
        shift.d.size() != model.group_count())
        throw Error(ErrorCode::ShapeMismatch, "shift shape");
    if (clearing_defect(model, shift) > 1e-12)
        throw Error(ErrorCode::NotInC, "shift violates clearing");

    CashShiftReport report;
    report.rho_base = total_of(group_levels(model));
    report.rho_shifted = total_of(group_levels(shift_positions(model, shift.y, 1.0)));
    report.expected = report.rho_base - total_of(shift.d);
    report.defect = std::abs(report.rho_shifted - report.expected);

    bool deterministic = true;
    for (std::size_t n = 0; n < model.banks() && deterministic; ++n)
        for (std::size_t s = 1; s < model.scenarios(); ++s)
            if (shift.y.at(n, s) != shift.y.at(n, 0)) {
                deterministic = false;
                break;
            }
    if (deterministic) {
        const double eps = 1e-4;
        const double up = total_of(group_levels(shift_positions(model, shift.y, eps)));
        const double down = total_of(group_levels(shift_positions(model, shift.y, -eps)));
        double cash = 0.0;
        for (std::size_t n = 0; n < model.banks(); ++n) cash += shift.y.at(n, 0);
        report.directional_defect = std::abs((up - down) / (2.0 * eps) + cash);
    }
    return report;
}

MarginalReport marginal_contribution(const Model& model, const Direction& direction,
                                     double fd_eps) {
    const DensityVector q = dual_density(model);
    MarginalReport report;
    report.per_group.resize(model.group_count());
    for (std::size_t m = 0; m < model.group_count(); ++m)
        report.per_group[m] = -expect_q(model.space, q.row(m), direction.vbar.row(m));
    report.total = total_of(report.per_group);

    const std::vector<double> up = group_levels(shift_positions(model, direction.v, fd_eps));
    const std::vector<double> down =
        group_levels(shift_positions(model, direction.v, -fd_eps));
    report.per_group_fd.resize(model.group_count());
    for (std::size_t m = 0; m < model.group_count(); ++m) {
        report.per_group_fd[m] = (up[m] - down[m]) / (2.0 * fd_eps);
        report.max_mismatch =
            std::max(report.max_mismatch,
                     std::abs(report.per_group_fd[m] - report.per_group[m]));
    }
    report.total_fd = total_of(report.per_group_fd);
    return report;
}

double fd_total_marginal_primal(const Model& model, const Direction& direction,
                                double fd_eps) {
    const double up = primal_solve(shift_positions(model, direction.v, fd_eps)).rho;
    const double down = primal_solve(shift_positions(model, direction.v, -fd_eps)).rho;
    return (up - down) / (2.0 * fd_eps);
}

FdEntry density_sensitivity(const Model& model, const Direction& direction,
                            std::size_t group, std::span<const double> payoff,
                            double fd_eps) {
    if (group >= model.group_count())
        throw Error(ErrorCode::BadSubgroup, "group index");
    const ExponentialDerived derived = derive_exponential(model);
    const DensityVector q = dual_density(model);

    FdEntry entry;
    entry.analytic = -cov_q(model.space, q.row(group), direction.vbar.row(group), payoff) /
                     derived.beta_m[group];
    const DensityVector q_up = dual_density(shift_positions(model, direction.v, fd_eps));
    const DensityVector q_down = dual_density(shift_positions(model, direction.v, -fd_eps));
    entry.finite_difference = (expect_q(model.space, q_up.row(group), payoff) -
                               expect_q(model.space, q_down.row(group), payoff)) /
                              (2.0 * fd_eps);
    entry.mismatch = std::abs(entry.analytic - entry.finite_difference);
    return entry;
}

SensitivityReport allocation_sensitivities(const Model& model, const Direction& direction,
                                           double fd_eps) {
    const ExponentialDerived derived = derive_exponential(model);
    const DensityVector q = dual_density(model);
    const Allocation base = optimal_allocation(model, group_levels(model));

    const Model model_up = shift_positions(model, direction.v, fd_eps);
    const Model model_down = shift_positions(model, direction.v, -fd_eps);
    const Allocation alloc_up = optimal_allocation(model_up, group_levels(model_up));
    const Allocation alloc_down = optimal_allocation(model_down, group_levels(model_down));
    const DensityVector q_up = dual_density(model_up);
    const DensityVector q_down = dual_density(model_down);

    SensitivityReport report;
    auto push = [&report](FdEntry entry) { report.fd_residuals.push_back(std::move(entry)); };

    // Item 1: group marginals, d/de d_m = E_{Q^m}[-Vbar_m].
    report.group_marginals.resize(model.group_count());
    {
        const std::vector<double> d_up = group_levels(model_up);
        const std::vector<double> d_down = group_levels(model_down);
        for (std::size_t m = 0; m < model.group_count(); ++m) {
            report.group_marginals[m] =
                -expect_q(model.space, q.row(m), direction.vbar.row(m));
            FdEntry entry;
            entry.name = "item1_group" + std::to_string(m + 1);
            entry.analytic = report.group_marginals[m];
            entry.finite_difference = (d_up[m] - d_down[m]) / (2.0 * fd_eps);
            entry.mismatch = std::abs(entry.analytic - entry.finite_difference);
            push(std::move(entry));
        }
    }

    // Item 2: local causal responsibility, density held at Q_X.
    report.local_causal.resize(model.banks());
    for (std::size_t n = 0; n < model.banks(); ++n) {
        const std::size_t m = model.grouping.group_of[n];
        report.local_causal[n] = -expect_q(model.space, q.row(m), direction.v.row(n));
        FdEntry entry;
        entry.name = "item2_bank" + std::to_string(n + 1);
        entry.analytic = report.local_causal[n];
        entry.finite_difference = (expect_q(model.space, q.row(m), alloc_up.y.row(n)) -
                                   expect_q(model.space, q.row(m), alloc_down.y.row(n))) /
                                  (2.0 * fd_eps);
        entry.mismatch = std::abs(entry.analytic - entry.finite_difference);
        push(std::move(entry));
    }

    // Item 3 at the canonical payoff Z = Xbar_m.
    for (std::size_t m = 0; m < model.group_count(); ++m) {
        FdEntry entry = density_sensitivity(model, direction, m, derived.xbar.row(m), fd_eps);
        entry.name = "item3_group" + std::to_string(m + 1) + "_Z=Xbar";
        push(std::move(entry));
    }

    // Item 4: marginal risk allocation per bank (6.9).
    report.allocation_marginals.resize(model.banks());
    for (std::size_t n = 0; n < model.banks(); ++n) {
        const std::size_t m = model.grouping.group_of[n];
        report.allocation_marginals[n] =
            -expect_q(model.space, q.row(m), direction.v.row(n)) -
            cov_q(model.space, q.row(m), direction.vbar.row(m), base.y.row(n)) /
                derived.beta_m[m];
        FdEntry entry;
        entry.name = "item4_bank" + std::to_string(n + 1);
        entry.analytic = report.allocation_marginals[n];
        entry.finite_difference = (expect_q(model.space, q_up.row(m), alloc_up.y.row(n)) -
                                   expect_q(model.space, q_down.row(m), alloc_down.y.row(n))) /
                                  (2.0 * fd_eps);
        entry.mismatch = std::abs(entry.analytic - entry.finite_difference);
        push(std::move(entry));
    }

    // Item 5: penalty sensitivity.
    report.penalty_marginal = 0.0;
    for (std::size_t m = 0; m < model.group_count(); ++m)
        report.penalty_marginal +=
            cov_q(model.space, q.row(m), direction.vbar.row(m), derived.xbar.row(m)) /
            derived.beta_m[m];
    {
        FdEntry entry;
        entry.name = "item5_penalty";
        entry.analytic = report.penalty_marginal;
        entry.finite_difference = (penalty_exponential(model, q_up) -
                                   penalty_exponential(model, q_down)) /
                                  (2.0 * fd_eps);
        entry.mismatch = std::abs(entry.analytic - entry.finite_difference);
        push(std::move(entry));
    }

    // Item 6: systemic marginal, the sum of the group marginals.
    report.total_marginal = total_of(report.group_marginals);
    {
        FdEntry entry;
        entry.name = "item6_total";
        entry.analytic = report.total_marginal;
        entry.finite_difference =
            (total_of(group_levels(model_up)) - total_of(group_levels(model_down))) /
            (2.0 * fd_eps);
        entry.mismatch = std::abs(entry.analytic - entry.finite_difference);
        push(std::move(entry));
    }
    return report;
}

SplitReport split_compare(const Model& model, std::size_t group,
                          const std::vector<std::size_t>& subgroup) {
    if (group >= model.group_count())
        throw Error(ErrorCode::BadSubgroup, "group index out of range");
    if (subgroup.empty()) throw Error(ErrorCode::BadSubgroup, "empty subgroup");
    const auto& members = model.grouping.groups[group];
    for (std::size_t bank : subgroup) {
        if (std::find(members.begin(), members.end(), bank) == members.end())
            throw Error(ErrorCode::BadSubgroup, "bank not in the group");
    }
    std::vector<std::size_t> sorted = subgroup;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw Error(ErrorCode::BadSubgroup, "duplicate bank in subgroup");

    // Left side: value of the subgroup's allocation under the original grouping.
    const Allocation alloc = optimal_allocation(model, group_levels(model));
    const DensityVector q = dual_density(model);
    std::vector<double> subgroup_sum(model.scenarios(), 0.0);
    for (std::size_t bank : sorted)
        for (std::size_t s = 0; s < model.scenarios(); ++s)
            subgroup_sum[s] += alloc.y.at(bank, s);

    SplitReport report;
    report.lhs = expect_q(model.space, q.row(group), subgroup_sum);

    // Right side: the subgroup's own level after refining the partition.
    std::vector<std::size_t> complement;
    for (std::size_t bank : members)
        if (std::find(sorted.begin(), sorted.end(), bank) == sorted.end())
            complement.push_back(bank);
    std::vector<std::vector<std::size_t>> refined;
    std::size_t subgroup_slot = 0;
    for (std::size_t m = 0; m < model.group_count(); ++m) {
        if (m == group) {
            subgroup_slot = refined.size();
            refined.push_back(sorted);
            if (!complement.empty()) refined.push_back(complement);
        } else {
            refined.push_back(model.grouping.groups[m]);
        }
    }
    const Model refined_model = regroup(model, std::move(refined));
    report.rhs = group_levels(refined_model)[subgroup_slot];
    report.slack = report.rhs - report.lhs;
    return report;
}

std::vector<SplitReport> singleton_sweep(const Model& model) {
    std::vector<SplitReport> reports(model.banks());
    for (std::size_t n = 0; n < model.banks(); ++n)
        reports[n] = split_compare(model, model.grouping.group_of[n], {n});
    return reports;
}

std::vector<SplitReport> pooled_vs_deterministic(const Model& model) {
    std::vector<std::size_t> everyone(model.banks());
    for (std::size_t n = 0; n < model.banks(); ++n) everyone[n] = n;
    const Model pooled = regroup(model, {everyone});

    std::vector<std::vector<std::size_t>> singletons(model.banks());
    for (std::size_t n = 0; n < model.banks(); ++n) singletons[n] = {n};
    const Model deterministic = regroup(model, std::move(singletons));

    const Allocation pooled_alloc = optimal_allocation(pooled, group_levels(pooled));
    const DensityVector pooled_q = dual_density(pooled);
    const std::vector<double> deterministic_levels = group_levels(deterministic);

    std::vector<SplitReport> reports(model.banks());
    for (std::size_t n = 0; n < model.banks(); ++n) {
        reports[n].lhs = expect_q(model.space, pooled_q.row(0), pooled_alloc.y.row(n));
        reports[n].rhs = deterministic_levels[n];
        reports[n].slack = reports[n].rhs - reports[n].lhs;
    }
    return reports;
}

} // namespace sysrisk
