#include "sysrisk/probability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sysrisk {

namespace {

void require_size(std::span<const double> v, std::size_t n, const char* what) {
    if (v.size() != n) throw Error(ErrorCode::DimensionMismatch, what);
}

} // namespace

double log_sum_exp(std::span<const double> values) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : values) hi = std::max(hi, v);
    if (!std::isfinite(hi)) return hi; // empty or all -inf
    double acc = 0.0;
    for (double v : values) acc += std::exp(v - hi);
    return hi + std::log(acc);
}

double expect_p(const ScenarioSpace& space, std::span<const double> values) {
    require_size(values, space.size(), "expect_p values");
    double acc = 0.0;
    for (std::size_t s = 0; s < space.size(); ++s)
        acc += space.probabilities[s] * values[s];
    return acc;
}

double expect_q(const ScenarioSpace& space, std::span<const double> density,
                std::span<const double> values) {
    require_size(density, space.size(), "expect_q density");
    require_size(values, space.size(), "expect_q values");
    double acc = 0.0;
    for (std::size_t s = 0; s < space.size(); ++s)
        acc += space.probabilities[s] * density[s] * values[s];
    return acc;
}

double cov_q(const ScenarioSpace& space, std::span<const double> density,
             std::span<const double> a, std::span<const double> b) {
    require_size(density, space.size(), "cov_q density");
    require_size(a, space.size(), "cov_q a");
    require_size(b, space.size(), "cov_q b");
    double mean_a = 0.0, mean_b = 0.0, mean_ab = 0.0;
    for (std::size_t s = 0; s < space.size(); ++s) {
        const double w = space.probabilities[s] * density[s];
        mean_a += w * a[s];
        mean_b += w * b[s];
        mean_ab += w * a[s] * b[s];
    }
    return mean_ab - mean_a * mean_b;
}

double relative_entropy(const ScenarioSpace& space, std::span<const double> density) {
    require_size(density, space.size(), "relative_entropy density");
    double acc = 0.0;
    for (std::size_t s = 0; s < space.size(); ++s) {
        const double xi = density[s];
        if (xi < 0.0)
            throw Error(ErrorCode::NonNormalizedQ, "negative density in entropy");
        if (xi > 0.0) acc += space.probabilities[s] * xi * std::log(xi);
    }
    return acc;
}

} // namespace sysrisk
