#include "sysrisk/dual_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "sysrisk/conjugate.hpp"
#include "sysrisk/probability.hpp"

namespace sysrisk {

namespace {

// F'(eta) of the penalty objective F(eta) = -B eta + eta sum_n E[v_n(xi_n/eta)],
// with xi_n the density of bank n's group. Scenarios with vanishing density
// contribute v_n(0+) = u_n(+inf) to the value term and nothing to the
// derivative term (0 * v'(0+) := 0).
double penalty_derivative(const Model& model, const DensityVector& q, double eta) {
    const double lambda = 1.0 / eta;
    double value_term = 0.0;
    double slope_term = 0.0;
    for (std::size_t n = 0; n < model.banks(); ++n) {
        const Utility& u = model.utilities[n];
        const auto xi = q.row(model.grouping.group_of[n]);
        for (std::size_t s = 0; s < model.scenarios(); ++s) {
            const double p = model.space.probabilities[s];
            if (xi[s] > 0.0) {
                const ConjugateValue c = conjugate_eval(u, lambda * xi[s]);
                value_term += p * c.v;
                slope_term += p * xi[s] * c.vprime;
            } else {
                value_term += p * conjugate_at_zero(u);
            }
        }
    }
    return -model.acceptance_level + value_term - lambda * slope_term;
}

LambdaStar solve_lambda_impl(const Model& model, const DensityVector& q,
                             const DualEngineOptions& options, double eta_hint) {
    double lo = eta_hint, hi = eta_hint;
    double f_lo = penalty_derivative(model, q, eta_hint);
    double f_hi = f_lo;
    std::size_t iterations = 1;

    // F is strictly convex in eta, so F' is increasing: grow the bracket in
    // the direction opposite to the sign of F'.
    if (f_lo > 0.0) {
        for (std::size_t i = 0;; ++i) {
            if (i >= options.max_doublings)
                throw Error(ErrorCode::BracketFailure, "no sign change shrinking eta");
            hi = lo;
            f_hi = f_lo;
            lo *= 0.5;
            f_lo = penalty_derivative(model, q, lo);
            ++iterations;
            if (f_lo <= 0.0) break;
        }
    } else if (f_lo < 0.0) {
        for (std::size_t i = 0;; ++i) {
            if (i >= options.max_doublings)
                throw Error(ErrorCode::BracketFailure, "no sign change growing eta");
            lo = hi;
            f_lo = f_hi;
            hi *= 2.0;
            f_hi = penalty_derivative(model, q, hi);
            ++iterations;
            if (f_hi >= 0.0) break;
        }
    } else {
        return {1.0 / eta_hint, 0.0, iterations};
    }

    double eta = 0.5 * (lo + hi);
    double f_mid = 0.0;
    for (std::size_t i = 0; i < 200; ++i) {
        eta = 0.5 * (lo + hi);
        f_mid = penalty_derivative(model, q, eta);
        ++iterations;
        if (std::abs(f_mid) <= options.lambda_residual_tol) break;
        if (f_mid > 0.0)
            hi = eta;
        else
            lo = eta;
        if (hi - lo <= options.lambda_bracket_rel_tol * eta) {
            eta = 0.5 * (lo + hi);
            f_mid = penalty_derivative(model, q, eta);
            ++iterations;
            break;
        }
    }
    return {1.0 / eta, f_mid, iterations};
}

// Per-group within-group sums of the fixed-Q allocation,
// Ybar_m(s) = sum_{k in I_m} (-X^k(s) - v'_k(lambda xi_m(s))), as an h x S
// table. Requires strictly positive densities.
Matrix group_yhat_sums(const Model& model, const DensityVector& q, double lambda) {
    Matrix ybar(model.group_count(), model.scenarios());
    for (std::size_t m = 0; m < model.group_count(); ++m) {
        const auto xi = q.row(m);
        for (std::size_t s = 0; s < model.scenarios(); ++s) {
            double acc = 0.0;
            for (std::size_t bank : model.grouping.groups[m])
                acc += -model.positions.values.at(bank, s) -
                       conjugate_eval(model.utilities[bank], lambda * xi[s]).vprime;
            ybar.at(m, s) = acc;
        }
    }
    return ybar;
}

} // namespace

LambdaStar solve_lambda_star(const Model& model, const DensityVector& q,
                             const DualEngineOptions& options) {
    validate_density(model.space, q, model.group_count());
    return solve_lambda_impl(model, q, options, 1.0);
}

double penalty_general(const Model& model, const DensityVector& q,
                       const DualEngineOptions& options) {
    validate_density(model.space, q, model.group_count());
    const LambdaStar lambda = solve_lambda_impl(model, q, options, 1.0);
    double penalty = 0.0;
    for (std::size_t n = 0; n < model.banks(); ++n) {
        const auto xi = q.row(model.grouping.group_of[n]);
        for (std::size_t s = 0; s < model.scenarios(); ++s) {
            if (xi[s] <= 0.0) continue;
            penalty += model.space.probabilities[s] * xi[s] *
                       conjugate_eval(model.utilities[n], lambda.value * xi[s]).vprime;
        }
    }
    return penalty;
}

RhoGivenQ rho_given_q(const Model& model, const DensityVector& q,
                      const DualEngineOptions& options) {
    validate_density(model.space, q, model.group_count());
    for (std::size_t m = 0; m < model.group_count(); ++m)
        for (std::size_t s = 0; s < model.scenarios(); ++s)
            if (q.densities.at(m, s) <= 0.0)
                throw Error(ErrorCode::ZeroDensityScenario,
                            "allocation unbounded on a charged scenario with zero density");

    const LambdaStar lambda = solve_lambda_impl(model, q, options, 1.0);
    RhoGivenQ result;
    result.yhat = Matrix(model.banks(), model.scenarios());
    double rho = 0.0;
    for (std::size_t n = 0; n < model.banks(); ++n) {
        const auto xi = q.row(model.grouping.group_of[n]);
        for (std::size_t s = 0; s < model.scenarios(); ++s) {
            const double y = -model.positions.values.at(n, s) -
                             conjugate_eval(model.utilities[n], lambda.value * xi[s]).vprime;
            result.yhat.at(n, s) = y;
        }
        rho += expect_q(model.space, xi, result.yhat.row(n));
    }
    result.rho_q = rho;
    return result;
}

DualAscentState maximize_dual(const Model& model, const DualEngineOptions& options) {
    const std::size_t h = model.group_count();
    const std::size_t S = model.scenarios();
    const double tiny = std::numeric_limits<double>::min();

    Matrix scores(h, S, 0.0);
    auto to_density = [&](const Matrix& theta) {
        DensityVector q;
        q.densities = Matrix(h, S);
        std::vector<double> terms(S);
        for (std::size_t m = 0; m < h; ++m) {
            for (std::size_t s = 0; s < S; ++s)
                terms[s] = std::log(model.space.probabilities[s]) + theta.at(m, s);
            const double log_norm = log_sum_exp(terms);
            for (std::size_t s = 0; s < S; ++s)
                q.densities.at(m, s) =
                    std::max(std::exp(theta.at(m, s) - log_norm), tiny);
        }
        return q;
    };

    struct Evaluation {
        DensityVector q;
        double eta = 1.0;
        double objective = 0.0;
        Matrix ybar;
    };
    double eta_hint = 1.0;
    auto evaluate = [&](const Matrix& theta) {
        Evaluation e;
        e.q = to_density(theta);
        const LambdaStar lambda = solve_lambda_impl(model, e.q, options, eta_hint);
        e.eta = 1.0 / lambda.value;
        e.ybar = group_yhat_sums(model, e.q, lambda.value);
        // Dual objective: sum_m E_{Q^m}[-Xbar_m] - alpha_B(Q) = sum_m E_{Q^m}[Ybar_m].
        e.objective = 0.0;
        for (std::size_t m = 0; m < h; ++m)
            e.objective += expect_q(model.space, e.q.row(m), e.ybar.row(m));
        return e;
    };
    auto stationarity_of = [&](const Evaluation& e) {
        double worst = 0.0;
        for (std::size_t m = 0; m < h; ++m) {
            const double mean = expect_p(model.space, e.ybar.row(m));
            double var = 0.0;
            for (std::size_t s = 0; s < S; ++s) {
                const double dev = e.ybar.at(m, s) - mean;
                var += model.space.probabilities[s] * dev * dev;
            }
            worst = std::max(worst, std::sqrt(std::max(var, 0.0)));
        }
        return worst;
    };

    Evaluation current = evaluate(scores);
    eta_hint = current.eta;
    std::vector<double> step(h, 1.0);
    Matrix prev_dir;
    std::vector<double> prev_step;

    DualAscentState state;
    for (std::size_t iteration = 0; iteration < options.max_iterations; ++iteration) {
        const double stationarity = stationarity_of(current);
        if (stationarity <= options.ascent_tol * (1.0 + std::abs(current.objective))) {
            state.q = std::move(current.q);
            state.objective = current.objective;
            state.stationarity = stationarity;
            state.iterations = iteration;
            return state;
        }

        // Mirror-ascent direction: within-group sums of Yhat centered under Q.
        // The ascent gradient in score space is q * dir, so the predicted
        // first-order gain of a step is sum_m step_m * Var_{Q^m}(Ybar_m).
        Matrix dir(h, S);
        std::vector<double> variance(h, 0.0);
        for (std::size_t m = 0; m < h; ++m) {
            const double mean_q = expect_q(model.space, current.q.row(m), current.ybar.row(m));
            for (std::size_t s = 0; s < S; ++s) {
                const double dev = current.ybar.at(m, s) - mean_q;
                dir.at(m, s) = dev;
                variance[m] += model.space.probabilities[s] * current.q.densities.at(m, s) *
                               dev * dev;
            }
        }

        // Barzilai-Borwein curvature estimate per group from the previous
        // accepted step; for exponential groups this locks onto 1/beta_m.
        if (prev_dir.rows() == h) {
            for (std::size_t m = 0; m < h; ++m) {
                double ss = 0.0, sy = 0.0;
                for (std::size_t s = 0; s < S; ++s) {
                    const double ds = prev_step[m] * prev_dir.at(m, s);
                    ss += ds * ds;
                    sy += ds * (prev_dir.at(m, s) - dir.at(m, s));
                }
                if (sy > 0.0 && ss > 0.0)
                    step[m] = std::clamp(ss / sy, 1e-8, 1e8);
            }
        }

        bool accepted = false;
        for (int backtrack = 0; backtrack < 60; ++backtrack) {
            Matrix trial = scores;
            double predicted = 0.0;
            for (std::size_t m = 0; m < h; ++m) {
                predicted += step[m] * variance[m];
                for (std::size_t s = 0; s < S; ++s)
                    trial.at(m, s) += step[m] * dir.at(m, s);
                // Re-center to keep the score magnitudes bounded.
                double top = trial.at(m, 0);
                for (std::size_t s = 1; s < S; ++s) top = std::max(top, trial.at(m, s));
                for (std::size_t s = 0; s < S; ++s) trial.at(m, s) -= top;
            }
            Evaluation next = evaluate(trial);
            if (next.objective >= current.objective + 1e-4 * predicted) {
                prev_dir = dir;
                prev_step = step;
                scores = std::move(trial);
                current = std::move(next);
                eta_hint = current.eta;
                accepted = true;
                break;
            }
            for (double& s_m : step) s_m *= 0.5;
        }
        if (!accepted) break; // step underflow: certificate check below decides
    }

    const double stationarity = stationarity_of(current);
    if (stationarity <= options.ascent_tol * (1.0 + std::abs(current.objective))) {
        state.q = std::move(current.q);
        state.objective = current.objective;
        state.stationarity = stationarity;
        state.iterations = options.max_iterations;
        return state;
    }
    throw Error(ErrorCode::NoConvergence, "dual ascent certificate unmet");
}

double value_function(const Model& model, std::size_t bank,
                      std::span<const double> density_row, double budget,
                      const DualEngineOptions& options) {
    if (bank >= model.banks())
        throw Error(ErrorCode::DimensionMismatch, "bank index");
    if (density_row.size() != model.scenarios())
        throw Error(ErrorCode::DimensionMismatch, "density row size");
    const Utility& u = model.utilities[bank];
    const double shifted = expect_q(model.space, density_row, model.positions.values.row(bank)) +
                           budget;

    // phi(lambda) = lambda * shifted + E[v(lambda xi)]; phi' is strictly
    // increasing with phi'(0+) = -inf, so a sign change always brackets.
    auto derivative = [&](double lambda) {
        double acc = shifted;
        for (std::size_t s = 0; s < model.scenarios(); ++s) {
            const double xi = density_row[s];
            if (xi <= 0.0) continue;
            acc += model.space.probabilities[s] * xi *
                   conjugate_eval(u, lambda * xi).vprime;
        }
        return acc;
    };

    double lo = 1.0, hi = 1.0;
    double f = derivative(1.0);
    if (f > 0.0) {
        for (std::size_t i = 0; derivative(lo) > 0.0; ++i) {
            if (i >= options.max_doublings)
                throw Error(ErrorCode::BracketFailure, "value function bracket");
            hi = lo;
            lo *= 0.5;
        }
    } else if (f < 0.0) {
        for (std::size_t i = 0; derivative(hi) < 0.0; ++i) {
            if (i >= options.max_doublings)
                throw Error(ErrorCode::BracketFailure, "value function bracket");
            lo = hi;
            hi *= 2.0;
        }
    }
    for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (derivative(mid) > 0.0)
            hi = mid;
        else
            lo = mid;
    }
    const double lambda = 0.5 * (lo + hi);

    double value = lambda * shifted;
    for (std::size_t s = 0; s < model.scenarios(); ++s) {
        const double xi = density_row[s];
        value += model.space.probabilities[s] *
                 (xi > 0.0 ? conjugate_eval(u, lambda * xi).v : conjugate_at_zero(u));
    }
    return value;
}

std::vector<double> optimal_split(const Model& model, const DensityVector& q,
                                  double total, const DualEngineOptions& options) {
    validate_density(model.space, q, model.group_count());
    const std::size_t N = model.banks();

    // With mu the common marginal value U'_n(a_n), the bank budgets are
    // a_n(mu) = -E_{Q^n}[X^n] - E_{Q^n}[v'_n(mu xi_n)], strictly decreasing
    // in mu; bisect mu until the budgets add up to the requested total.
    auto budgets_at = [&](double mu) {
        std::vector<double> a(N);
        for (std::size_t n = 0; n < N; ++n) {
            const auto xi = q.row(model.grouping.group_of[n]);
            double acc = -expect_q(model.space, xi, model.positions.values.row(n));
            for (std::size_t s = 0; s < model.scenarios(); ++s) {
                if (xi[s] <= 0.0) continue;
                acc -= model.space.probabilities[s] * xi[s] *
                       conjugate_eval(model.utilities[n], mu * xi[s]).vprime;
            }
            a[n] = acc;
        }
        return a;
    };
    auto sum_of = [](const std::vector<double>& a) {
        double acc = 0.0;
        for (double x : a) acc += x;
        return acc;
    };

    double lo = 1.0, hi = 1.0;
    double excess = sum_of(budgets_at(1.0)) - total;
    if (excess < 0.0) {
        // budgets too small: decrease mu
        for (std::size_t i = 0; sum_of(budgets_at(lo)) - total < 0.0; ++i) {
            if (i >= options.max_doublings)
                throw Error(ErrorCode::NoConvergence, "split bracket (lo)");
            hi = lo;
            lo *= 0.5;
        }
    } else if (excess > 0.0) {
        for (std::size_t i = 0; sum_of(budgets_at(hi)) - total > 0.0; ++i) {
            if (i >= options.max_doublings)
                throw Error(ErrorCode::NoConvergence, "split bracket (hi)");
            lo = hi;
            hi *= 2.0;
        }
    }
    double mu = 0.5 * (lo + hi);
    std::vector<double> budgets;
    for (int i = 0; i < 400; ++i) {
        mu = 0.5 * (lo + hi);
        budgets = budgets_at(mu);
        const double gap = sum_of(budgets) - total;
        if (std::abs(gap) <= 1e-12 * (1.0 + std::abs(total))) break;
        if (gap > 0.0)
            lo = mu;
        else
            hi = mu;
        if (hi - lo <= 1e-15 * mu) break;
    }
    if (budgets.empty()) budgets = budgets_at(mu);
    // Spread the residual evenly so the sum matches the total exactly.
    const double correction = (total - sum_of(budgets)) / static_cast<double>(N);
    for (double& a : budgets) a += correction;
    return budgets;
}

} // namespace sysrisk
