#ifndef SYSRISK_CONJUGATE_HPP
#define SYSRISK_CONJUGATE_HPP

#include "sysrisk/types.hpp"

namespace sysrisk {

struct ConjugateValue {
    double v;      // v(y) = sup_x { u(x) - x y }
    double vprime; // v'(y) = -(u')^{-1}(y)
};

// Evaluates the convex conjugate of one bank's utility at y > 0.
//
// Exponential utilities use the closed form v(y) = (y ln y - y)/alpha,
// v'(y) = ln(y)/alpha. General utilities invert u' by bracketing bisection
// (doubling outward from x = 0 until u' straddles y, at most 200 doublings)
// to |u'(x) - y| <= 1e-12 * y, then recover v through the conjugacy identity
// u(-v'(y)) = -y v'(y) + v(y).
//
// Throws NonPositiveDual for y <= 0 and InversionFailure if the bracket
// expansion hits its cap.
ConjugateValue conjugate_eval(const Utility& utility, double y);

// v(0+) = u(+inf); the zero-density limit used by expectation sums that meet
// vanishing densities.
double conjugate_at_zero(const Utility& utility);

} // namespace sysrisk

#endif
