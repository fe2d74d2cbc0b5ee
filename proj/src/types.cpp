#include "sysrisk/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace sysrisk {

namespace {

constexpr double kProbabilitySumTol = 1e-12;
constexpr double kDensityNormTol = 1e-10;

// Default probe grid for the Inada checks on general utilities.
const std::vector<double> kDefaultInadaProbes = {-64.0, -32.0, -16.0, -8.0, -4.0, -2.0,
                                                 -1.0,  0.0,   1.0,  2.0,  4.0,  8.0,
                                                 16.0,  32.0,  64.0};

std::string describe_index(std::size_t i) {
    std::ostringstream os;
    os << "index " << i;
    return os.str();
}

} // namespace

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Matrix();
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != m.cols())
            throw Error(ErrorCode::DimensionMismatch, "ragged matrix rows");
        std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    }
    return m;
}

Utility Utility::exponential(double alpha) {
    Utility u;
    u.exponential_ = true;
    u.alpha_ = alpha;
    return u;
}

Utility Utility::general(Fn u_fn, Fn uprime_fn) {
    Utility u;
    u.exponential_ = false;
    u.u_ = std::move(u_fn);
    u.uprime_ = std::move(uprime_fn);
    return u;
}

double Utility::alpha() const {
    if (!exponential_)
        throw Error(ErrorCode::NotExponential, "alpha() on a general utility");
    return alpha_;
}

double Utility::u(double x) const {
    if (exponential_) return -std::exp(-alpha_ * x) / alpha_;
    return u_(x);
}

double Utility::uprime(double x) const {
    if (exponential_) return std::exp(-alpha_ * x);
    return uprime_(x);
}

double Utility::u_sup() const {
    if (exponential_) return 0.0;
    // Probe by doubling until the increments die out. A utility unbounded
    // from above reports +inf, which makes every B feasible.
    double x = 1.0;
    double value = u_(x);
    for (int i = 0; i < 60; ++i) {
        x *= 2.0;
        const double next = u_(x);
        if (!std::isfinite(next)) return std::numeric_limits<double>::infinity();
        if (std::abs(next - value) <= 1e-13 * (1.0 + std::abs(next))) return next;
        value = next;
    }
    return std::numeric_limits<double>::infinity();
}

bool Model::all_exponential() const {
    return std::all_of(utilities.begin(), utilities.end(),
                       [](const Utility& u) { return u.is_exponential(); });
}

Model validate_model(ScenarioSpace space, Positions positions,
                     std::vector<std::vector<std::size_t>> groups,
                     UtilityFamily utilities, double acceptance_level,
                     std::span<const double> inada_probes) {
    const std::size_t scenario_count = space.size();
    if (scenario_count == 0)
        throw Error(ErrorCode::BadProbability, "no scenarios");

    double sum = 0.0;
    for (std::size_t s = 0; s < scenario_count; ++s) {
        const double p = space.probabilities[s];
        if (!(p > 0.0) || !std::isfinite(p))
            throw Error(ErrorCode::BadProbability, "weight <= 0 at " + describe_index(s));
        sum += p;
    }
    if (std::abs(sum - 1.0) > kProbabilitySumTol)
        throw Error(ErrorCode::BadProbability, "weights do not sum to 1");

    const std::size_t bank_count = positions.banks();
    if (bank_count == 0)
        throw Error(ErrorCode::DimensionMismatch, "no banks");
    if (positions.scenarios() != scenario_count)
        throw Error(ErrorCode::DimensionMismatch, "positions vs scenario count");
    for (std::size_t n = 0; n < bank_count; ++n)
        for (double x : positions.values.row(n))
            if (!std::isfinite(x))
                throw Error(ErrorCode::DimensionMismatch,
                            "non-finite position for bank " + describe_index(n));

    if (groups.empty() || groups.size() > bank_count)
        throw Error(ErrorCode::NonPartition, "group count out of range");
    std::vector<std::size_t> group_of(bank_count, groups.size());
    for (std::size_t m = 0; m < groups.size(); ++m) {
        if (groups[m].empty())
            throw Error(ErrorCode::NonPartition, "empty group " + describe_index(m));
        for (std::size_t bank : groups[m]) {
            if (bank >= bank_count)
                throw Error(ErrorCode::NonPartition, "bank out of range in group");
            if (group_of[bank] != groups.size())
                throw Error(ErrorCode::NonPartition,
                            "bank " + describe_index(bank) + " in two groups");
            group_of[bank] = m;
        }
    }
    for (std::size_t bank = 0; bank < bank_count; ++bank)
        if (group_of[bank] == groups.size())
            throw Error(ErrorCode::NonPartition, "bank " + describe_index(bank) + " unassigned");

    if (utilities.size() != bank_count)
        throw Error(ErrorCode::BadUtility, "utilities count != bank count");

    const std::span<const double> probes =
        inada_probes.empty() ? std::span<const double>(kDefaultInadaProbes) : inada_probes;
    double lambda_sup = 0.0; // sum_n u_n(+inf)
    for (std::size_t n = 0; n < bank_count; ++n) {
        const Utility& u = utilities[n];
        if (u.is_exponential()) {
            if (!(u.alpha() > 0.0) || !std::isfinite(u.alpha()))
                throw Error(ErrorCode::BadUtility, "alpha <= 0 for bank " + describe_index(n));
        } else {
            double prev = std::numeric_limits<double>::infinity();
            for (double x : probes) {
                const double slope = u.uprime(x);
                if (!(slope > 0.0) || !std::isfinite(slope))
                    throw Error(ErrorCode::BadUtility,
                                "u' not positive at probe for bank " + describe_index(n));
                if (!(slope < prev))
                    throw Error(ErrorCode::BadUtility,
                                "u' not strictly decreasing for bank " + describe_index(n));
                prev = slope;
            }
        }
        lambda_sup += u.u_sup();
    }
    if (!(acceptance_level < lambda_sup))
        throw Error(ErrorCode::InfeasibleB, "B >= sum of utility upper limits");

    Model model;
    model.space = std::move(space);
    model.positions = std::move(positions);
    model.grouping.groups = std::move(groups);
    model.grouping.group_of = std::move(group_of);
    model.utilities = std::move(utilities);
    model.acceptance_level = acceptance_level;
    return model;
}

void validate_density(const ScenarioSpace& space, const DensityVector& q,
                      std::size_t expected_groups) {
    if (q.densities.rows() != expected_groups || q.densities.cols() != space.size())
        throw Error(ErrorCode::DimensionMismatch, "density shape");
    for (std::size_t m = 0; m < q.densities.rows(); ++m) {
        double mass = 0.0;
        for (std::size_t s = 0; s < space.size(); ++s) {
            const double xi = q.densities.at(m, s);
            if (xi < 0.0 || !std::isfinite(xi))
                throw Error(ErrorCode::NonNormalizedQ, "negative density entry");
            mass += space.probabilities[s] * xi;
        }
        if (std::abs(mass - 1.0) > kDensityNormTol)
            throw Error(ErrorCode::NonNormalizedQ, "group density mass != 1");
    }
}

double clearing_defect(const Model& model, const Allocation& alloc) {
    double worst = 0.0;
    for (std::size_t m = 0; m < model.group_count(); ++m) {
        for (std::size_t s = 0; s < model.scenarios(); ++s) {
            double group_sum = 0.0;
            double scale = 1.0 + std::abs(alloc.d[m]);
            for (std::size_t bank : model.grouping.groups[m]) {
                group_sum += alloc.y.at(bank, s);
                scale += std::abs(alloc.y.at(bank, s));
            }
            worst = std::max(worst, std::abs(group_sum - alloc.d[m]) / scale);
        }
    }
    return worst;
}

} // namespace sysrisk
