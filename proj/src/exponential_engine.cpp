#include "sysrisk/exponential_engine.hpp"

#include <cmath>

#include "sysrisk/probability.hpp"

namespace sysrisk {

namespace {

void require_exponential(const Model& model) {
    if (!model.all_exponential())
        throw Error(ErrorCode::NotExponential, "closed form needs exponential utilities");
}

// ln E[exp(-Xbar_m / beta_m)] = LSE_s(ln p_s - Xbar_m(s) / beta_m).
double log_mgf(const Model& model, const ExponentialDerived& derived, std::size_t m) {
    std::vector<double> terms(model.scenarios());
    for (std::size_t s = 0; s < model.scenarios(); ++s)
        terms[s] = std::log(model.space.probabilities[s]) -
                   derived.xbar.at(m, s) / derived.beta_m[m];
    return log_sum_exp(terms);
}

} // namespace

ExponentialDerived derive_exponential(const Model& model) {
    require_exponential(model);
    ExponentialDerived derived;
    const std::size_t h = model.group_count();
    derived.beta_m.assign(h, 0.0);
    derived.xbar = Matrix(h, model.scenarios());
    for (std::size_t m = 0; m < h; ++m) {
        for (std::size_t bank : model.grouping.groups[m]) {
            derived.beta_m[m] += 1.0 / model.utilities[bank].alpha();
            for (std::size_t s = 0; s < model.scenarios(); ++s)
                derived.xbar.at(m, s) += model.positions.values.at(bank, s);
        }
        derived.beta += derived.beta_m[m];
    }
    return derived;
}

std::vector<double> group_levels(const Model& model) {
    const ExponentialDerived derived = derive_exponential(model);
    const double log_scale = std::log(derived.beta / -model.acceptance_level);
    std::vector<double> levels(model.group_count());
    for (std::size_t m = 0; m < model.group_count(); ++m)
        levels[m] = derived.beta_m[m] * (log_scale + log_mgf(model, derived, m));
    return levels;
}

Allocation optimal_allocation(const Model& model, const std::vector<double>& levels) {
    const ExponentialDerived derived = derive_exponential(model);
    if (levels.size() != model.group_count())
        throw Error(ErrorCode::DimensionMismatch, "levels vs group count");
    Allocation alloc;
    alloc.d = levels;
    alloc.y = Matrix(model.banks(), model.scenarios());
    for (std::size_t m = 0; m < model.group_count(); ++m) {
        for (std::size_t bank : model.grouping.groups[m]) {
            const double share = 1.0 / (derived.beta_m[m] * model.utilities[bank].alpha());
            for (std::size_t s = 0; s < model.scenarios(); ++s)
                alloc.y.at(bank, s) = -model.positions.values.at(bank, s) +
                                      share * (derived.xbar.at(m, s) + levels[m]);
        }
    }
    return alloc;
}

DensityVector dual_density(const Model& model) {
    const ExponentialDerived derived = derive_exponential(model);
    DensityVector q;
    q.densities = Matrix(model.group_count(), model.scenarios());
    for (std::size_t m = 0; m < model.group_count(); ++m) {
        const double log_norm = log_mgf(model, derived, m);
        for (std::size_t s = 0; s < model.scenarios(); ++s)
            q.densities.at(m, s) =
                std::exp(-derived.xbar.at(m, s) / derived.beta_m[m] - log_norm);
    }
    return q;
}

double penalty_exponential(const Model& model, const DensityVector& q) {
    require_exponential(model);
    validate_density(model.space, q, model.group_count());
    const ExponentialDerived derived = derive_exponential(model);
    const double log_ratio = std::log(-model.acceptance_level / derived.beta);
    double penalty = 0.0;
    for (std::size_t m = 0; m < model.group_count(); ++m) {
        const double entropy = relative_entropy(model.space, q.row(m));
        penalty += derived.beta_m[m] * (entropy + log_ratio);
    }
    return penalty;
}

double expected_aggregate_utility(const Model& model, const Matrix& y) {
    if (y.rows() != model.banks() || y.cols() != model.scenarios())
        throw Error(ErrorCode::DimensionMismatch, "allocation shape");
    double acc = 0.0;
    for (std::size_t s = 0; s < model.scenarios(); ++s) {
        double scenario_sum = 0.0;
        for (std::size_t n = 0; n < model.banks(); ++n)
            scenario_sum += model.utilities[n].u(model.positions.values.at(n, s) + y.at(n, s));
        acc += model.space.probabilities[s] * scenario_sum;
    }
    return acc;
}

RiskReport risk_report(const Model& model) {
    const ExponentialDerived derived = derive_exponential(model);
    RiskReport report;
    report.group_levels = group_levels(model);
    double rho = 0.0;
    for (double d : report.group_levels) rho += d;
    report.rho = rho;

    Allocation alloc = optimal_allocation(model, report.group_levels);
    DensityVector q = dual_density(model);

    std::vector<double> per_bank(model.banks());
    double allocated = 0.0;
    for (std::size_t n = 0; n < model.banks(); ++n) {
        const std::size_t m = model.grouping.group_of[n];
        per_bank[n] = expect_q(model.space, q.row(m), alloc.y.row(n));
        allocated += per_bank[n];
    }

    // Dual objective at Q: sum_m E_{Q^m}[-Xbar_m] - alpha_B(Q).
    const double penalty = penalty_exponential(model, q);
    double dual_value = -penalty;
    for (std::size_t m = 0; m < model.group_count(); ++m)
        dual_value -= expect_q(model.space, q.row(m), derived.xbar.row(m));

    report.residuals.budget =
        std::abs(expected_aggregate_utility(model, alloc.y) - model.acceptance_level);
    report.residuals.clearing = clearing_defect(model, alloc);
    report.residuals.duality_gap = std::abs(rho - dual_value);
    report.residuals.full_allocation = std::abs(allocated - rho);

    report.allocation = std::move(alloc.y);
    report.dual_densities = std::move(q);
    report.risk_allocations = std::move(per_bank);
    report.penalty = penalty;
    report.lambda_star = -model.acceptance_level / derived.beta;
    return report;
}

} // namespace sysrisk
