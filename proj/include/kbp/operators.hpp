#pragma once

// Lambda, Psi and the Frechet derivative of Psi evaluated on grid functions.
// Integrals over the type space use the midpoint rule of the grid:
//   Lambda[f](x_j) = sum_i kappa(x_i, x_j) f(x_i) w_i.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "kbp/errors.hpp"
#include "kbp/model.hpp"
#include "kbp/poisson.hpp"

namespace kbp {

/// Grid, kernel and threshold measure with the kernel tabulated at all pairs
/// of midpoints. Immutable after construction.
class OperatorContext {
public:
    OperatorContext(TypeGrid grid, KernelModel kernel, ThresholdMeasure measure)
        : grid_(std::move(grid)), kernel_(std::move(kernel)), measure_(std::move(measure)) {
        const std::size_t m = grid_.cell_count();
        detail::require(measure_.cell_count() == m, "OperatorContext: measure and grid sizes differ");
        auto mids = grid_.midpoints();
        matrix_.resize(m * m);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                const double v = kernel_(mids[i], mids[j]);
                detail::require(v >= 0.0 && v <= kernel_.bound * (1.0 + 1e-12) + 1e-300,
                                "OperatorContext: kernel outside [0, bound] at a midpoint pair");
                matrix_[i * m + j] = v;
            }
        }
    }

    OperatorContext(TypeGrid grid, const StepKernel& kernel, ThresholdMeasure measure)
        : OperatorContext(std::move(grid), kernel.as_kernel(), std::move(measure)) {}

    const TypeGrid& grid() const noexcept { return grid_; }
    const KernelModel& kernel() const noexcept { return kernel_; }
    const ThresholdMeasure& measure() const noexcept { return measure_; }
    std::size_t size() const noexcept { return grid_.cell_count(); }

    /// kappa(x_source, x_target) at the grid midpoints.
    double kernel_at(std::size_t source, std::size_t target) const { return matrix_[source * size() + target]; }
    std::span<const double> kernel_matrix() const noexcept { return matrix_; }

    /// Same grid and measure with a different kernel.
    OperatorContext with_kernel(KernelModel kernel) const { return OperatorContext(grid_, std::move(kernel), measure_); }

private:
    TypeGrid grid_;
    KernelModel kernel_;
    ThresholdMeasure measure_;
    std::vector<double> matrix_;
};

namespace detail {

/// sum_i kappa(x_i, x_j) f_i w_i for any finite f.
inline GridFunction apply_kernel(const OperatorContext& ctx, const GridFunction& f) {
    const std::size_t m = ctx.size();
    auto w = ctx.grid().weights();
    auto k = ctx.kernel_matrix();
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double a = f[i] * w[i];
        if (a == 0.0) continue;
        const double* row = k.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) out[j] += row[j] * a;
    }
    return GridFunction(std::move(out));
}

}  // namespace detail

inline GridFunction lambda_op(const OperatorContext& ctx, const GridFunction& f) {
    detail::require(f.size() == ctx.size(), "lambda_op: dimension mismatch");
    detail::require(f.nonnegative_finite(), "lambda_op: f must be non-negative");
    return detail::apply_kernel(ctx, f);
}

namespace detail {

struct CellResponse {
    double psi = 0.0;  // sum_k eta_k(c) P(Poisson(lambda) >= k)
    double v = 0.0;    // sum_{k>=1} eta_k(c) p(k-1, lambda) = d psi / d lambda
};

/// Psi and its sensitivity to lambda in one cell, without allocation. The
/// Poisson cdf is accumulated with Kahan compensation.
inline CellResponse cell_response(const ThresholdMeasure& measure, std::size_t cell, double lambda) {
    detail::require(lambda >= 0.0 && !std::isnan(lambda), "cell_response: lambda must be non-negative");
    CellResponse out;
    const bool log_space = lambda > log_space_lambda;
    double p = lambda == 0.0 ? 1.0 : (log_space ? 0.0 : std::exp(-lambda));
    double cdf = 0.0, carry = 0.0;
    for (std::size_t k = 0; k <= measure.max_threshold; ++k) {
        if (log_space) p = poisson_log_term(k, lambda);
        else if (k > 0) p *= lambda / static_cast<double>(k);
        const double eta = measure.densities[k][cell];
        out.psi += eta * std::max(0.0, 1.0 - cdf);
        if (k + 1 <= measure.max_threshold) out.v += measure.densities[k + 1][cell] * p;
        const double y = p - carry;
        const double t = cdf + y;
        carry = (t - cdf) - y;
        cdf = t;
    }
    return out;
}

inline double psi_at(const ThresholdMeasure& measure, std::size_t cell, double lambda) {
    return cell_response(measure, cell, lambda).psi;
}

inline double v_at(const ThresholdMeasure& measure, std::size_t cell, double lambda) {
    return cell_response(measure, cell, lambda).v;
}

}  // namespace detail

/// Psi applied to a precomputed Lambda[f].
inline GridFunction psi_from_lambda(const ThresholdMeasure& measure, const GridFunction& lambda) {
    GridFunction out(lambda.size());
    for (std::size_t c = 0; c < lambda.size(); ++c) out[c] = detail::psi_at(measure, c, lambda[c]);
    return out;
}

inline GridFunction psi_op(const OperatorContext& ctx, const GridFunction& f) {
    detail::require(f.size() == ctx.size(), "psi_op: dimension mismatch");
    detail::require(f.in_unit_interval(), "psi_op: f must take values in [0,1]");
    return psi_from_lambda(ctx.measure(), lambda_op(ctx, f));
}

/// V[f] = sum_{k>=1} eta_k P^{k-1}[f].
inline GridFunction v_op(const OperatorContext& ctx, const GridFunction& f) {
    const GridFunction lambda = lambda_op(ctx, f);
    GridFunction out(lambda.size());
    for (std::size_t c = 0; c < lambda.size(); ++c) out[c] = detail::v_at(ctx.measure(), c, lambda[c]);
    return out;
}

/// D Psi f [h] = Lambda[h] * V[f]; the direction h may take either sign.
inline GridFunction frechet_derivative(const OperatorContext& ctx, const GridFunction& f, const GridFunction& h) {
    detail::require(f.size() == ctx.size() && h.size() == ctx.size(), "frechet_derivative: dimension mismatch");
    detail::require(f.in_unit_interval(), "frechet_derivative: f must take values in [0,1]");
    for (double x : h) detail::require(std::isfinite(x), "frechet_derivative: h must be finite");
    const GridFunction v = v_op(ctx, f);
    GridFunction out = detail::apply_kernel(ctx, h);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] *= v[c];
    return out;
}

}  // namespace kbp
