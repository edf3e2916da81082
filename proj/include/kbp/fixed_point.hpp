#pragma once

// Minimal fixed point of Psi by monotone iteration from zero, the derivative
// condition at the fixed point, and the step-kernel bracketing of the
// predicted final fraction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kbp/errors.hpp"
#include "kbp/model.hpp"
#include "kbp/operators.hpp"

namespace kbp {

enum class ConditionStatus { satisfied, violated, inconclusive };

inline const char* to_string(ConditionStatus s) {
    switch (s) {
        case ConditionStatus::satisfied: return "satisfied";
        case ConditionStatus::violated: return "violated";
        case ConditionStatus::inconclusive: return "inconclusive";
    }
    return "unknown";
}

/// Outcome of checking D Psi f[h] - h < -eps for some non-negative h.
/// margin is eps for the reported witness (positive iff satisfied).
struct DerivativeCondition {
    ConditionStatus status = ConditionStatus::inconclusive;
    GridFunction witness;
    double margin = 0.0;
    double spectral_radius = 0.0;
};

struct TraceRow {
    std::size_t iteration = 0;
    double residual = 0.0;
    double integral = 0.0;
};

struct FixedPointResult {
    GridFunction f_hat;
    double integral = 0.0;
    std::size_t iterations = 0;
    double residual = 0.0;
    DerivativeCondition derivative_condition;
    std::vector<TraceRow> trace;
};

struct PicardOptions {
    double tolerance = 1e-10;
    std::size_t max_iterations = 10000;
    bool check_derivative_condition = true;
    std::size_t power_steps = 50;
    double condition_band = 1e-3;
};

namespace detail {

/// Power iteration for h -> Lambda[h] * v with sup-norm normalization,
/// starting from h = 1. Returns (radius, direction).
inline std::pair<double, GridFunction> linearized_power_iteration(const OperatorContext& ctx, const GridFunction& v,
                                                                  std::size_t steps) {
    GridFunction h(ctx.size(), 1.0);
    double radius = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
        GridFunction g = lambda_op(ctx, h);
        for (std::size_t c = 0; c < g.size(); ++c) g[c] *= v[c];
        const double top = g.sup_norm();
        radius = top / h.sup_norm();
        if (top == 0.0) break;
        for (std::size_t c = 0; c < g.size(); ++c) g[c] /= top;
        h = std::move(g);
    }
    return {radius, h};
}

inline double max_excess(const GridFunction& dh, const GridFunction& h) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < h.size(); ++c) m = std::max(m, dh[c] - h[c]);
    return m;
}

}  // namespace detail

/// Checks the derivative condition at f with h = 1 first and then with the
/// dominant direction of the linearization h -> Lambda[h] V[f].
inline DerivativeCondition evaluate_derivative_condition(const OperatorContext& ctx, const GridFunction& f,
                                                         std::size_t power_steps = 50, double band = 1e-3) {
    const GridFunction v = v_op(ctx, f);
    auto apply = [&](const GridFunction& h) {
        GridFunction out = lambda_op(ctx, h);
        for (std::size_t c = 0; c < out.size(); ++c) out[c] *= v[c];
        return out;
    };

    DerivativeCondition out;
    auto [radius, direction] = detail::linearized_power_iteration(ctx, v, power_steps);
    out.spectral_radius = radius;

    const GridFunction ones(ctx.size(), 1.0);
    const double excess_ones = detail::max_excess(apply(ones), ones);
    if (excess_ones < 0.0) {
        out.status = ConditionStatus::satisfied;
        out.witness = ones;
        out.margin = -excess_ones;
        return out;
    }

    out.witness = direction;
    const double excess = detail::max_excess(apply(direction), direction);
    out.margin = -excess;
    if (std::abs(radius - 1.0) <= band)
        out.status = ConditionStatus::inconclusive;
    else if (radius > 1.0 + band)
        out.status = ConditionStatus::violated;
    else
        out.status = excess < 0.0 ? ConditionStatus::satisfied : ConditionStatus::inconclusive;
    return out;
}

/// Iterates f_{n+1} = Psi[f_n] from f_0 = 0 until the sup-norm step drops
/// below the tolerance. The iterates increase pointwise towards the minimal
/// fixed point; the returned f_hat is the last iterate whose residual
/// ||Psi f_hat - f_hat|| was measured below tolerance.
inline FixedPointResult solve_picard(const OperatorContext& ctx, const PicardOptions& options = {}) {
    detail::require(options.tolerance > 0.0, "solve_picard: tolerance must be positive");
    const TypeGrid& grid = ctx.grid();
    FixedPointResult result;
    GridFunction f(ctx.size(), 0.0);
    double step = 0.0;
    for (std::size_t n = 0; n <= options.max_iterations; ++n) {
        GridFunction next = psi_op(ctx, f);
        step = 0.0;
        for (std::size_t c = 0; c < f.size(); ++c) {
            const double d = next[c] - f[c];
            // Monotone from below; allow rounding noise once converged.
            if (d < -1e-12) throw std::logic_error("solve_picard: iterates decreased, Psi is not monotone");
            step = std::max(step, std::abs(d));
        }
        result.trace.push_back({n, step, grid.integrate(f)});
        if (step < options.tolerance) {
            result.f_hat = std::move(f);
            result.iterations = n;
            result.residual = step;
            result.integral = grid.integrate(result.f_hat);
            if (options.check_derivative_condition)
                result.derivative_condition =
                    evaluate_derivative_condition(ctx, result.f_hat, options.power_steps, options.condition_band);
            return result;
        }
        f = std::move(next);
    }
    throw ConvergenceFailure("solve_picard: no convergence within " + std::to_string(options.max_iterations) +
                                 " iterations",
                             f.vector(), step);
}

struct SandwichLevel {
    std::size_t level = 0;
    double lower_integral = 0.0;
    double upper_integral = 0.0;

    double width() const noexcept { return upper_integral - lower_integral; }
};

/// Solves the fixed point under the lower and upper step kernels of the
/// context's kernel at each level.
inline std::vector<SandwichLevel> coupling_sandwich(const OperatorContext& ctx, const std::vector<std::size_t>& levels,
                                                    PicardOptions options = {}) {
    for (std::size_t i = 1; i < levels.size(); ++i)
        detail::require(levels[i] > levels[i - 1], "coupling_sandwich: levels must be ascending");
    options.check_derivative_condition = false;
    std::vector<SandwichLevel> out;
    out.reserve(levels.size());
    for (std::size_t level : levels) {
        auto [upper, lower] = make_step_kernels(ctx.kernel(), ctx.grid(), level);
        const OperatorContext lo(ctx.grid(), lower, ctx.measure());
        const OperatorContext hi(ctx.grid(), upper, ctx.measure());
        out.push_back({level, solve_picard(lo, options).integral, solve_picard(hi, options).integral});
    }
    return out;
}

}  // namespace kbp
