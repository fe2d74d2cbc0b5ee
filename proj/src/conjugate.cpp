#include "sysrisk/conjugate.hpp"

#include <cmath>

namespace sysrisk {

namespace {

constexpr int kMaxDoublings = 200;
constexpr double kInversionRelTol = 1e-12;

// Solves u'(x) = y for the general path. u' is strictly decreasing, so the
// root is bracketed by expanding from 0 in the direction indicated by u'(0).
double invert_uprime(const Utility& utility, double y) {
    double lo = 0.0, hi = 0.0; // u'(lo) >= y >= u'(hi), lo <= hi
    const double at_zero = utility.uprime(0.0);
    if (at_zero == y) return 0.0;
    double step = 1.0;
    if (at_zero > y) {
        // move right until u' drops below y
        lo = 0.0;
        hi = step;
        int i = 0;
        while (utility.uprime(hi) > y) {
            lo = hi;
            step *= 2.0;
            hi = step;
            if (++i > kMaxDoublings)
                throw Error(ErrorCode::InversionFailure, "bracket expansion right");
        }
    } else {
        hi = 0.0;
        lo = -step;
        int i = 0;
        while (utility.uprime(lo) < y) {
            hi = lo;
            step *= 2.0;
            lo = -step;
            if (++i > kMaxDoublings)
                throw Error(ErrorCode::InversionFailure, "bracket expansion left");
        }
    }
    // Bisection on the monotone slope.
    for (int i = 0; i < 400; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double slope = utility.uprime(mid);
        if (std::abs(slope - y) <= kInversionRelTol * y) return mid;
        if (slope > y)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-16 * (1.0 + std::abs(lo) + std::abs(hi))) return mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

ConjugateValue conjugate_eval(const Utility& utility, double y) {
    if (!(y > 0.0))
        throw Error(ErrorCode::NonPositiveDual, "conjugate_eval requires y > 0");
    if (utility.is_exponential()) {
        const double a = utility.alpha();
        return {(y * std::log(y) - y) / a, std::log(y) / a};
    }
    const double x = invert_uprime(utility, y);
    // v(y) = u(x) - x y at the maximizing x, v'(y) = -x.
    return {utility.u(x) - x * y, -x};
}

double conjugate_at_zero(const Utility& utility) { return utility.u_sup(); }

} // namespace sysrisk
