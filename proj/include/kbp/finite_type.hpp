#pragma once

// Graphs with finitely many vertex types. The closed-form functions
//   lambda^l(z) = sum_{l'} kd(l', l) z^{l'}
//   nu_0^l(z)   = -z^l + sum_{k'} nu_{k'}^l(0) P(Poisson(lambda^l) >= k')
//   nu_k^l(z)   = sum_{k'>=k} nu_{k'}^l(0) p(k'-k, lambda^l),   k >= 1
// describe the explored process; the componentwise-minimal zero of nu_0
// gives the final infected fraction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "kbp/errors.hpp"
#include "kbp/model.hpp"
#include "kbp/poisson.hpp"

namespace kbp {

struct FiniteTypeSystem {
    std::size_t type_count = 0;
    std::vector<double> kernel_d;                      // type_count^2, row = source type
    std::vector<std::vector<double>> initial_masses;   // [type][threshold], absolute masses
    std::size_t max_threshold = 0;

    double kernel(std::size_t source, std::size_t target) const { return kernel_d[source * type_count + target]; }
    double initial(std::size_t type, std::size_t k) const {
        return k <= max_threshold ? initial_masses[type][k] : 0.0;
    }
};

inline FiniteTypeSystem make_finite_type_system(std::vector<double> kernel_d,
                                                std::vector<std::vector<double>> initial_masses) {
    const std::size_t n = initial_masses.size();
    detail::require(n >= 1, "FiniteTypeSystem: need at least one type");
    detail::require(kernel_d.size() == n * n, "FiniteTypeSystem: kernel must be type_count x type_count");
    for (double v : kernel_d)
        detail::require(std::isfinite(v) && v >= 0.0, "FiniteTypeSystem: kernel must be non-negative");
    std::size_t width = 0;
    double total = 0.0;
    for (const auto& row : initial_masses) {
        width = std::max(width, row.size());
        for (double v : row) {
            detail::require(std::isfinite(v) && v >= 0.0, "FiniteTypeSystem: masses must be non-negative");
            total += v;
        }
    }
    detail::require(width >= 1, "FiniteTypeSystem: need at least one threshold");
    detail::require(std::abs(total - 1.0) <= 1e-10, "FiniteTypeSystem: initial masses must sum to one");
    for (auto& row : initial_masses) row.resize(width, 0.0);
    return FiniteTypeSystem{n, std::move(kernel_d), std::move(initial_masses), width - 1};
}

/// Collapses a step kernel and a threshold measure into the finite-type
/// system whose types are the kernel's blocks.
inline FiniteTypeSystem finite_system_from_step_kernel(const StepKernel& kernel, const TypeGrid& grid,
                                                       const ThresholdMeasure& measure) {
    detail::require(measure.cell_count() == grid.cell_count(), "finite_system_from_step_kernel: size mismatch");
    const std::size_t n = kernel.level;
    std::vector<std::vector<double>> masses(n, std::vector<double>(measure.max_threshold + 1, 0.0));
    for (std::size_t l = 0; l < n; ++l)
        for (std::size_t c = kernel.partition.ranges[l].first; c < kernel.partition.ranges[l].second; ++c)
            for (std::size_t k = 0; k <= measure.max_threshold; ++k)
                masses[l][k] += measure.densities[k][c] * grid.weights()[c];
    // Renormalize away rounding so the mass check holds to 1e-10.
    double total = 0.0;
    for (const auto& row : masses)
        for (double v : row) total += v;
    for (auto& row : masses)
        for (double& v : row) v /= total;
    return make_finite_type_system(kernel.block_values, std::move(masses));
}

inline std::vector<double> finite_lambda(const FiniteTypeSystem& sys, const std::vector<double>& z) {
    detail::require(z.size() == sys.type_count, "finite_lambda: dimension mismatch");
    std::vector<double> lambda(sys.type_count, 0.0);
    for (std::size_t src = 0; src < sys.type_count; ++src)
        for (std::size_t dst = 0; dst < sys.type_count; ++dst) lambda[dst] += sys.kernel(src, dst) * z[src];
    return lambda;
}

/// nu_k^l(z) for all types l and thresholds k = 0..max_threshold, indexed [l][k].
inline std::vector<std::vector<double>> nu_functions(const FiniteTypeSystem& sys, const std::vector<double>& z) {
    detail::require(z.size() == sys.type_count, "nu_functions: dimension mismatch");
    for (double v : z) detail::require(v >= 0.0 && v <= 1.0, "nu_functions: z must lie in [0,1]");
    const std::vector<double> lambda = finite_lambda(sys, z);
    const std::size_t kmax = sys.max_threshold;
    std::vector<std::vector<double>> out(sys.type_count, std::vector<double>(kmax + 1, 0.0));
    for (std::size_t l = 0; l < sys.type_count; ++l) {
        const std::vector<double> p = poisson_terms(kmax, lambda[l]);
        const std::vector<double> tail = poisson_upper_tails(kmax, lambda[l]);
        double infected = 0.0;
        for (std::size_t k = 0; k <= kmax; ++k) infected += sys.initial(l, k) * tail[k];
        out[l][0] = infected - z[l];
        for (std::size_t k = 1; k <= kmax; ++k) {
            double s = 0.0;
            for (std::size_t kp = k; kp <= kmax; ++kp) s += sys.initial(l, kp) * p[kp - k];
            out[l][k] = s;
        }
    }
    return out;
}

struct FirstJointZero {
    std::vector<double> z_hat;
    double tau_hat = 0.0;
    std::size_t iterations = 0;
};

/// Iterates z^l <- z^l + nu_0^l(z) from z = 0. The map is monotone, so the
/// iterates increase to the componentwise-minimal zero of nu_0.
inline FirstJointZero first_joint_zero(const FiniteTypeSystem& sys, double tolerance = 1e-12,
                                       std::size_t max_iterations = 100000) {
    detail::require(tolerance > 0.0, "first_joint_zero: tolerance must be positive");
    std::vector<double> z(sys.type_count, 0.0);
    double step = 0.0;
    for (std::size_t it = 0; it <= max_iterations; ++it) {
        const auto nu = nu_functions(sys, z);
        step = 0.0;
        std::vector<double> next(z.size());
        for (std::size_t l = 0; l < z.size(); ++l) {
            next[l] = std::clamp(z[l] + nu[l][0], 0.0, 1.0);
            step = std::max(step, std::abs(next[l] - z[l]));
        }
        if (step < tolerance) {
            double tau = 0.0;
            for (double v : z) tau += v;
            return {std::move(z), tau, it};
        }
        z = std::move(next);
    }
    throw ConvergenceFailure("first_joint_zero: no convergence within " + std::to_string(max_iterations) +
                                 " iterations",
                             z, step);
}

/// max over l of sum_{l'} w^{l'} d nu_0^l / d z^{l'} at z. Negative means the
/// derivative condition holds in direction w with epsilon = -margin.
inline double derivative_condition_finite(const FiniteTypeSystem& sys, const std::vector<double>& z,
                                          const std::vector<double>& w) {
    detail::require(w.size() == sys.type_count, "derivative_condition_finite: dimension mismatch");
    for (double v : w) detail::require(v > 0.0, "derivative_condition_finite: direction must be positive");
    const auto nu = nu_functions(sys, z);
    const std::vector<double> pushed = finite_lambda(sys, w);
    double margin = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < sys.type_count; ++l) {
        const double nu1 = sys.max_threshold >= 1 ? nu[l][1] : 0.0;
        margin = std::max(margin, -w[l] + pushed[l] * nu1);
    }
    return margin;
}

inline std::vector<double> uniform_direction(std::size_t type_count) {
    return std::vector<double>(type_count, 1.0 / static_cast<double>(type_count));
}

/// Piecewise-constant grid function with value z^l / mu(block l) on block l.
inline GridFunction embed_step_function(const TypeGrid& grid, const BlockPartition& partition,
                                        const std::vector<double>& z) {
    detail::require(z.size() == partition.block_count(), "embed_step_function: dimension mismatch");
    const std::vector<double> mass = partition.masses(grid);
    GridFunction out(grid.cell_count());
    for (std::size_t l = 0; l < z.size(); ++l) {
        detail::require(mass[l] > 0.0, "embed_step_function: block with zero measure");
        for (std::size_t c = partition.ranges[l].first; c < partition.ranges[l].second; ++c) out[c] = z[l] / mass[l];
    }
    return out;
}

/// Integral of f over each block of the partition.
inline std::vector<double> block_integrals(const TypeGrid& grid, const BlockPartition& partition,
                                           const GridFunction& f) {
    detail::require(f.size() == grid.cell_count(), "block_integrals: dimension mismatch");
    std::vector<double> out(partition.block_count(), 0.0);
    for (std::size_t l = 0; l < out.size(); ++l)
        for (std::size_t c = partition.ranges[l].first; c < partition.ranges[l].second; ++c)
            out[l] += f[c] * grid.weights()[c];
    return out;
}

}  // namespace kbp
