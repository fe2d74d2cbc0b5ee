#ifndef SYSRISK_TYPES_HPP
#define SYSRISK_TYPES_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "sysrisk/error.hpp"

namespace sysrisk {

// Dense row-major matrix, sized once at construction. Enough linear algebra
// for N x S position tables; heavier machinery is not needed at desk scale.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Finite probability space: strictly positive scenario weights summing to one.
struct ScenarioSpace {
    std::vector<double> probabilities;

    std::size_t size() const { return probabilities.size(); }
};

// Bank positions at the horizon, one row per bank, one column per scenario.
struct Positions {
    Matrix values;

    std::size_t banks() const { return values.rows(); }
    std::size_t scenarios() const { return values.cols(); }
};

// Partition of the banks {0,...,N-1} into h groups. Group membership is
// arbitrary (not restricted to contiguous index blocks).
struct Grouping {
    std::vector<std::vector<std::size_t>> groups;
    std::vector<std::size_t> group_of; // bank index -> group index

    std::size_t count() const { return groups.size(); }
};

// One bank's utility. Either the exponential family -exp(-alpha x)/alpha with
// closed-form conjugate, or a general strictly concave utility supplied as
// callables (u and its derivative).
class Utility {
public:
    using Fn = std::function<double(double)>;

    static Utility exponential(double alpha);
    static Utility general(Fn u, Fn uprime);

    bool is_exponential() const { return exponential_; }
    double alpha() const;

    double u(double x) const;
    double uprime(double x) const;

    // Limit u(+inf), probed for general utilities. Needed for the
    // feasibility bound on B and for conjugate values at zero density.
    double u_sup() const;

private:
    Utility() = default;

    bool exponential_ = false;
    double alpha_ = 0.0;
    Fn u_;
    Fn uprime_;
};

using UtilityFamily = std::vector<Utility>;

// Fully validated problem instance.
struct Model {
    ScenarioSpace space;
    Positions positions;
    Grouping grouping;
    UtilityFamily utilities;
    double acceptance_level = 0.0; // B

    std::size_t banks() const { return positions.banks(); }
    std::size_t scenarios() const { return space.size(); }
    std::size_t group_count() const { return grouping.count(); }

    bool all_exponential() const;
};

// Dual variable: one density row (dQ^m/dP per scenario) for each group.
struct DensityVector {
    Matrix densities; // h x S

    std::span<const double> row(std::size_t group) const { return densities.row(group); }
};

// Element of the allocation class: per-bank scenario cash plus the
// deterministic group levels d_m (within-group sums in every scenario).
struct Allocation {
    Matrix y;              // N x S
    std::vector<double> d; // h
};

// Validates the raw inputs and assembles a Model. Throws Error with codes
// NonPartition / BadProbability / BadUtility / InfeasibleB on violations.
// `inada_probes` overrides the default probe grid used to sanity check the
// derivative of general utilities.
Model validate_model(ScenarioSpace space, Positions positions,
                     std::vector<std::vector<std::size_t>> groups,
                     UtilityFamily utilities, double acceptance_level,
                     std::span<const double> inada_probes = {});

// Checks the DensityVector invariants against a space: nonnegative entries,
// E_P[xi_m] = 1 within 1e-10 for each group. Throws NonNormalizedQ.
void validate_density(const ScenarioSpace& space, const DensityVector& q,
                      std::size_t expected_groups);

// Max clearing defect of an allocation, relative to the scenario scale:
// max_{m,s} |sum_{k in I_m} Y[k][s] - d_m| / (1 + |d_m| + sum_k |Y[k][s]|).
double clearing_defect(const Model& model, const Allocation& alloc);

} // namespace sysrisk

#endif
