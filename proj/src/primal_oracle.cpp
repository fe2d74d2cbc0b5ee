#include "sysrisk/primal_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sysrisk/probability.hpp"

namespace sysrisk {

namespace {

double second_derivative(const Utility& u, double x) {
    if (u.is_exponential()) return -u.alpha() * std::exp(-u.alpha() * x);
    const double step = 1e-6 * (1.0 + std::abs(x));
    return (u.uprime(x + step) - u.uprime(x - step)) / (2.0 * step);
}

// Reduced coordinates for the allocation class: the group levels d_m plus,
// per group and scenario, free cash for all members but the last one. The
// last member absorbs d_m minus the others, so clearing is structural.
class Parametrization {
public:
    explicit Parametrization(const Model& model) : model_(model) {
        const std::size_t h = model.group_count();
        offsets_.resize(h);
        std::size_t offset = h;
        for (std::size_t m = 0; m < h; ++m) {
            offsets_[m] = offset;
            offset += (model.grouping.groups[m].size() - 1) * model.scenarios();
        }
        size_ = offset;
    }

    std::size_t size() const { return size_; }
    std::size_t group_count() const { return model_.group_count(); }

    double level(const std::vector<double>& x, std::size_t m) const { return x[m]; }

    Matrix to_allocation_matrix(const std::vector<double>& x) const {
        const std::size_t S = model_.scenarios();
        Matrix y(model_.banks(), S);
        for (std::size_t m = 0; m < model_.group_count(); ++m) {
            const auto& members = model_.grouping.groups[m];
            for (std::size_t s = 0; s < S; ++s) {
                double rest = 0.0;
                for (std::size_t i = 0; i + 1 < members.size(); ++i) {
                    const double z = x[offsets_[m] + i * S + s];
                    y.at(members[i], s) = z;
                    rest += z;
                }
                y.at(members.back(), s) = x[m] - rest;
            }
        }
        return y;
    }

    std::vector<double> from_allocation(const Matrix& y, const std::vector<double>& d) const {
        const std::size_t S = model_.scenarios();
        std::vector<double> x(size_, 0.0);
        for (std::size_t m = 0; m < model_.group_count(); ++m) {
            x[m] = d[m];
            const auto& members = model_.grouping.groups[m];
            for (std::size_t i = 0; i + 1 < members.size(); ++i)
                for (std::size_t s = 0; s < S; ++s)
                    x[offsets_[m] + i * S + s] = y.at(members[i], s);
        }
        return x;
    }

    // E[sum_n u_n(X^n + Y^n)] with gradient and Hessian in the reduced
    // coordinates. Gradient/Hessian outputs are optional.
    double utility(const std::vector<double>& x, std::vector<double>* grad,
                   Matrix* hess) const {
        const std::size_t S = model_.scenarios();
        if (grad) grad->assign(size_, 0.0);
        if (hess) *hess = Matrix(size_, size_);
        double value = 0.0;
        for (std::size_t m = 0; m < model_.group_count(); ++m) {
            const auto& members = model_.grouping.groups[m];
            const std::size_t free_count = members.size() - 1;
            for (std::size_t s = 0; s < S; ++s) {
                const double p = model_.space.probabilities[s];
                double rest = 0.0;
                for (std::size_t i = 0; i < free_count; ++i)
                    rest += x[offsets_[m] + i * S + s];
                const std::size_t last = members.back();
                const double c_last = model_.positions.values.at(last, s) + x[m] - rest;
                value += p * model_.utilities[last].u(c_last);
                const double slope_last = model_.utilities[last].uprime(c_last);
                const double curv_last =
                    hess ? second_derivative(model_.utilities[last], c_last) : 0.0;
                if (grad) (*grad)[m] += p * slope_last;
                if (hess) hess->at(m, m) += p * curv_last;
                for (std::size_t i = 0; i < free_count; ++i) {
                    const std::size_t bank = members[i];
                    const std::size_t col = offsets_[m] + i * S + s;
                    const double c = model_.positions.values.at(bank, s) + x[col];
                    value += p * model_.utilities[bank].u(c);
                    if (grad)
                        (*grad)[col] += p * (model_.utilities[bank].uprime(c) - slope_last);
                    if (hess) {
                        const double curv = second_derivative(model_.utilities[bank], c);
                        for (std::size_t j = 0; j < free_count; ++j) {
                            const std::size_t col_j = offsets_[m] + j * S + s;
                            hess->at(col, col_j) += p * curv_last;
                            if (j == i) hess->at(col, col_j) += p * curv;
                        }
                        hess->at(col, m) += -p * curv_last;
                        hess->at(m, col) += -p * curv_last;
                    }
                }
            }
        }
        return value;
    }

private:
    const Model& model_;
    std::vector<std::size_t> offsets_;
    std::size_t size_ = 0;
};

// Cholesky solve with Levenberg fallback for marginally conditioned systems.
class SpdSolver {
public:
    explicit SpdSolver(Matrix a) : a_(std::move(a)), n_(a_.rows()) {
        double scale = 0.0;
        for (std::size_t i = 0; i < n_; ++i) scale = std::max(scale, std::abs(a_.at(i, i)));
        double shift = 0.0;
        for (int attempt = 0; attempt < 12; ++attempt) {
            if (factor(shift)) return;
            shift = (shift == 0.0) ? 1e-14 * std::max(scale, 1.0) : shift * 100.0;
        }
        throw Error(ErrorCode::NoConvergence, "KKT system not positive definite");
    }

    std::vector<double> solve(std::vector<double> b) const {
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t k = 0; k < i; ++k) b[i] -= chol_.at(i, k) * b[k];
            b[i] /= chol_.at(i, i);
        }
        for (std::size_t i = n_; i-- > 0;) {
            for (std::size_t k = i + 1; k < n_; ++k) b[i] -= chol_.at(k, i) * b[k];
            b[i] /= chol_.at(i, i);
        }
        return b;
    }

private:
    bool factor(double shift) {
        chol_ = a_;
        for (std::size_t i = 0; i < n_; ++i) chol_.at(i, i) += shift;
        for (std::size_t j = 0; j < n_; ++j) {
            for (std::size_t i = j; i < n_; ++i) {
                double sum = chol_.at(i, j);
                for (std::size_t k = 0; k < j; ++k) sum -= chol_.at(i, k) * chol_.at(j, k);
                if (i == j) {
                    if (!(sum > 0.0)) return false;
                    chol_.at(j, j) = std::sqrt(sum);
                } else {
                    chol_.at(i, j) = sum / chol_.at(j, j);
                }
            }
        }
        return true;
    }

    Matrix a_;
    std::size_t n_;
    Matrix chol_;
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double max_abs(const std::vector<double>& a) {
    double acc = 0.0;
    for (double v : a) acc = std::max(acc, std::abs(v));
    return acc;
}

// Constant shift t with E[sum_n u_n(X^n + t)] = B; always solvable since the
// aggregate utility is continuous, increasing and exceeds B for large t.
double feasible_uniform_shift(const Model& model) {
    auto aggregate = [&](double t) {
        double acc = 0.0;
        for (std::size_t s = 0; s < model.scenarios(); ++s) {
            double sum = 0.0;
            for (std::size_t n = 0; n < model.banks(); ++n)
                sum += model.utilities[n].u(model.positions.values.at(n, s) + t);
            acc += model.space.probabilities[s] * sum;
        }
        return acc;
    };
    double lo = 0.0, hi = 0.0, step = 1.0;
    while (aggregate(hi) < model.acceptance_level) {
        lo = hi;
        hi += step;
        step *= 2.0;
        if (hi > 1e12) throw Error(ErrorCode::Internal, "budget unreachable");
    }
    while (aggregate(lo) > model.acceptance_level) {
        hi = lo;
        lo -= step;
        step *= 2.0;
        if (lo < -1e12) break;
    }
    for (int i = 0; i < 200 && hi - lo > 1e-12 * (1.0 + std::abs(hi)); ++i) {
        const double mid = 0.5 * (lo + hi);
        if (aggregate(mid) < model.acceptance_level)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<double> initial_point(const Model& model, const Parametrization& param,
                                  const PrimalOptions& options) {
    if (options.initial_y) {
        const Matrix& y = *options.initial_y;
        if (y.rows() != model.banks() || y.cols() != model.scenarios())
            throw Error(ErrorCode::DimensionMismatch, "initial allocation shape");
        std::vector<double> d(model.group_count(), 0.0);
        for (std::size_t m = 0; m < model.group_count(); ++m) {
            std::vector<double> sums(model.scenarios(), 0.0);
            for (std::size_t bank : model.grouping.groups[m])
                for (std::size_t s = 0; s < model.scenarios(); ++s)
                    sums[s] += y.at(bank, s);
            d[m] = expect_p(model.space, sums);
        }
        return param.from_allocation(y, d);
    }
    const double shift = feasible_uniform_shift(model);
    Matrix y(model.banks(), model.scenarios(), shift);
    std::vector<double> d(model.group_count());
    for (std::size_t m = 0; m < model.group_count(); ++m)
        d[m] = shift * static_cast<double>(model.grouping.groups[m].size());
    return param.from_allocation(y, d);
}

} // namespace

PrimalSolution primal_solve(const Model& model, const PrimalOptions& options) {
    const Parametrization param(model);
    const std::size_t n = param.size();
    const std::size_t h = model.group_count();
    const double B = model.acceptance_level;

    std::vector<double> x = initial_point(model, param, options);
    std::vector<double> grad_u(n);
    Matrix hess_u;
    double u_val = param.utility(x, &grad_u, &hess_u);

    // Multiplier estimate from the level-coordinate stationarity 1 = nu * dU/dd_m.
    double level_slope = 0.0;
    for (std::size_t m = 0; m < h; ++m) level_slope += grad_u[m];
    double nu = (level_slope > 0.0) ? static_cast<double>(h) / level_slope : 1.0;

    auto residuals = [&](const std::vector<double>& g, double value, double mult,
                         std::vector<double>& r_x) {
        r_x.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) r_x[i] = -mult * g[i];
        for (std::size_t m = 0; m < h; ++m) r_x[m] += 1.0;
        return B - value; // r_c
    };

    std::vector<double> r_x;
    double r_c = residuals(grad_u, u_val, nu, r_x);
    double merit = 0.5 * (dot(r_x, r_x) + r_c * r_c);

    // Absolute residuals alone under-resolve the within-group split in
    // scenarios where every marginal utility is tiny, so additionally demand
    // that the Newton step has collapsed.
    double last_step = std::numeric_limits<double>::infinity();
    std::size_t iteration = 0;
    for (; iteration < options.max_iterations; ++iteration) {
        if (std::max(max_abs(r_x), std::abs(r_c)) <= options.kkt_tol &&
            last_step <= 1e-12 * (1.0 + max_abs(x)))
            break;

        Matrix h_mat(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) h_mat.at(i, j) = -nu * hess_u.at(i, j);
        SpdSolver solver(std::move(h_mat));
        const std::vector<double> w = solver.solve(grad_u);
        const std::vector<double> v = solver.solve(r_x);
        const double denom = dot(grad_u, w);
        if (!(denom > 0.0))
            throw Error(ErrorCode::NoConvergence, "degenerate constraint gradient");
        const double d_nu = (r_c + dot(grad_u, v)) / denom;

        std::vector<double> dx(n);
        for (std::size_t i = 0; i < n; ++i) dx[i] = -v[i] + d_nu * w[i];

        double t = 1.0;
        while (nu + t * d_nu <= 0.05 * nu) t *= 0.5;
        bool accepted = false;
        for (int backtrack = 0; backtrack < 60; ++backtrack) {
            std::vector<double> x_try(n);
            for (std::size_t i = 0; i < n; ++i) x_try[i] = x[i] + t * dx[i];
            const double nu_try = nu + t * d_nu;
            std::vector<double> grad_try(n);
            Matrix hess_try;
            const double u_try = param.utility(x_try, &grad_try, &hess_try);
            std::vector<double> r_x_try;
            const double r_c_try = residuals(grad_try, u_try, nu_try, r_x_try);
            const double merit_try = 0.5 * (dot(r_x_try, r_x_try) + r_c_try * r_c_try);
            if (std::isfinite(merit_try) && merit_try <= (1.0 - 2e-4 * t) * merit) {
                x = std::move(x_try);
                nu = nu_try;
                grad_u = std::move(grad_try);
                hess_u = std::move(hess_try);
                u_val = u_try;
                r_x = std::move(r_x_try);
                r_c = r_c_try;
                merit = merit_try;
                last_step = t * max_abs(dx);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break; // merit at its numerical floor
    }

    const double kkt = std::max(max_abs(r_x), std::abs(r_c));
    if (kkt > 1e-8)
        throw Error(ErrorCode::NoConvergence, "primal KKT residual above 1e-8");

    PrimalSolution solution;
    solution.allocation.y = param.to_allocation_matrix(x);
    solution.allocation.d.assign(x.begin(), x.begin() + h);
    solution.rho = 0.0;
    for (std::size_t m = 0; m < h; ++m) solution.rho += x[m];
    solution.utility_attained = u_val;
    solution.feasibility_residual = u_val - B;
    solution.kkt_residual = kkt;
    solution.iterations = iteration;
    return solution;
}

UtilitySolution solve_max_utility(const Model& model, double total_budget,
                                  const PrimalOptions& options) {
    const Parametrization param(model);
    const std::size_t n = param.size();
    const std::size_t h = model.group_count();

    // Start on the budget plane: the same constant for every bank.
    std::vector<double> x;
    if (options.initial_y) {
        x = initial_point(model, param, options);
        double levels = 0.0;
        for (std::size_t m = 0; m < h; ++m) levels += x[m];
        for (std::size_t m = 0; m < h; ++m)
            x[m] += (total_budget - levels) / static_cast<double>(h);
    } else {
        const double shift = total_budget / static_cast<double>(model.banks());
        Matrix y(model.banks(), model.scenarios(), shift);
        std::vector<double> d(h);
        for (std::size_t m = 0; m < h; ++m)
            d[m] = shift * static_cast<double>(model.grouping.groups[m].size());
        x = param.from_allocation(y, d);
    }

    std::vector<double> grad_u(n);
    Matrix hess_u;
    double u_val = param.utility(x, &grad_u, &hess_u);
    double nu = 0.0;
    for (std::size_t m = 0; m < h; ++m) nu += grad_u[m];
    nu /= static_cast<double>(h);

    // min -U(x) s.t. sum_m d_m = total. r_x = -grad U + nu * a, a = level mask.
    auto residuals = [&](const std::vector<double>& g, const std::vector<double>& point,
                         double mult, std::vector<double>& r_x) {
        r_x.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) r_x[i] = -g[i];
        for (std::size_t m = 0; m < h; ++m) r_x[m] += mult;
        double levels = 0.0;
        for (std::size_t m = 0; m < h; ++m) levels += point[m];
        return levels - total_budget; // r_c
    };

    std::vector<double> r_x;
    double r_c = residuals(grad_u, x, nu, r_x);
    double merit = 0.5 * (dot(r_x, r_x) + r_c * r_c);

    double last_step = std::numeric_limits<double>::infinity();
    std::size_t iteration = 0;
    for (; iteration < options.max_iterations; ++iteration) {
        if (std::max(max_abs(r_x), std::abs(r_c)) <= options.kkt_tol &&
            last_step <= 1e-12 * (1.0 + max_abs(x)))
            break;

        Matrix h_mat(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) h_mat.at(i, j) = -hess_u.at(i, j);
        SpdSolver solver(std::move(h_mat));
        std::vector<double> a(n, 0.0);
        for (std::size_t m = 0; m < h; ++m) a[m] = 1.0;
        const std::vector<double> w = solver.solve(a);
        const std::vector<double> v = solver.solve(r_x);
        const double denom = dot(a, w);
        const double d_nu = (r_c - dot(a, v)) / denom;
        std::vector<double> dx(n);
        for (std::size_t i = 0; i < n; ++i) dx[i] = -v[i] - d_nu * w[i];

        double t = 1.0;
        bool accepted = false;
        for (int backtrack = 0; backtrack < 60; ++backtrack) {
            std::vector<double> x_try(n);
            for (std::size_t i = 0; i < n; ++i) x_try[i] = x[i] + t * dx[i];
            const double nu_try = nu + t * d_nu;
            std::vector<double> grad_try(n);
            Matrix hess_try;
            const double u_try = param.utility(x_try, &grad_try, &hess_try);
            std::vector<double> r_x_try;
            const double r_c_try = residuals(grad_try, x_try, nu_try, r_x_try);
            const double merit_try = 0.5 * (dot(r_x_try, r_x_try) + r_c_try * r_c_try);
            if (std::isfinite(merit_try) && merit_try <= (1.0 - 2e-4 * t) * merit) {
                x = std::move(x_try);
                nu = nu_try;
                grad_u = std::move(grad_try);
                hess_u = std::move(hess_try);
                u_val = u_try;
                r_x = std::move(r_x_try);
                r_c = r_c_try;
                merit = merit_try;
                last_step = t * max_abs(dx);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break; // merit at its numerical floor
    }

    const double kkt = std::max(max_abs(r_x), std::abs(r_c));
    if (kkt > 1e-8)
        throw Error(ErrorCode::NoConvergence, "utility KKT residual above 1e-8");

    UtilitySolution solution;
    solution.value = u_val;
    solution.allocation.y = param.to_allocation_matrix(x);
    solution.allocation.d.assign(x.begin(), x.begin() + h);
    solution.kkt_residual = kkt;
    solution.iterations = iteration;
    return solution;
}

double max_utility(const Model& model, double total_budget, const PrimalOptions& options) {
    return solve_max_utility(model, total_budget, options).value;
}

ConjugacyReport check_conjugacy(const Model& model, const PrimalOptions& options) {
    const PrimalSolution primal = primal_solve(model, options);
    const UtilitySolution utility = solve_max_utility(model, primal.rho, options);
    ConjugacyReport report;
    report.rho = primal.rho;
    report.pi_at_rho = utility.value;
    report.value_gap = std::abs(utility.value - model.acceptance_level);
    double gap = 0.0;
    for (std::size_t n2 = 0; n2 < model.banks(); ++n2)
        for (std::size_t s = 0; s < model.scenarios(); ++s)
            gap = std::max(gap, std::abs(primal.allocation.y.at(n2, s) -
                                         utility.allocation.y.at(n2, s)));
    report.allocation_gap = gap;
    report.pass = report.value_gap <= 1e-6 && report.allocation_gap <= 1e-5;
    return report;
}

} // namespace sysrisk
