#pragma once

// Resilience of an uninfected configuration. The derivative of Psi at the
// zero function is the positive linear map h -> Lambda[h] * eta_1; its
// spectral radius decides whether vanishing seeds can grow.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kbp/errors.hpp"
#include "kbp/model.hpp"
#include "kbp/operators.hpp"

namespace kbp {

/// Dense matrix of the derivative at zero; entry (m, i) is
/// kappa(x_i, x_m) w_i eta_1(x_m).
class DerivativeMap {
public:
    DerivativeMap(std::size_t size, std::vector<double> entries) : size_(size), entries_(std::move(entries)) {
        detail::require(entries_.size() == size_ * size_, "DerivativeMap: entries must be size x size");
    }

    std::size_t size() const noexcept { return size_; }
    double at(std::size_t row, std::size_t col) const { return entries_[row * size_ + col]; }
    std::span<const double> entries() const noexcept { return entries_; }

    GridFunction apply(const GridFunction& h) const {
        detail::require(h.size() == size_, "DerivativeMap::apply: dimension mismatch");
        GridFunction out(size_);
        for (std::size_t m = 0; m < size_; ++m) {
            const double* row = entries_.data() + m * size_;
            double s = 0.0;
            for (std::size_t i = 0; i < size_; ++i) s += row[i] * h[i];
            out[m] = s;
        }
        return out;
    }

private:
    std::size_t size_;
    std::vector<double> entries_;
};

inline DerivativeMap derivative_at_zero(const OperatorContext& ctx) {
    const ThresholdMeasure& measure = ctx.measure();
    for (double v : measure.eta(0))
        detail::require(v == 0.0, "derivative_at_zero: configuration has initially infected vertices");
    const std::size_t m = ctx.size();
    auto w = ctx.grid().weights();
    std::vector<double> entries(m * m, 0.0);
    for (std::size_t target = 0; target < m; ++target) {
        const double eta1 = measure.density(1, target);
        if (eta1 == 0.0) continue;
        for (std::size_t source = 0; source < m; ++source)
            entries[target * m + source] = ctx.kernel_at(source, target) * w[source] * eta1;
    }
    return DerivativeMap(m, std::move(entries));
}

enum class Verdict { resilient, non_resilient, inconclusive };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::resilient: return "resilient";
        case Verdict::non_resilient: return "non_resilient";
        case Verdict::inconclusive: return "inconclusive";
    }
    return "unknown";
}

struct ResilienceVerdict {
    double spectral_radius = 0.0;
    GridFunction eigen_direction;
    Verdict verdict = Verdict::inconclusive;
    double margin = 0.0;  // |spectral_radius - 1|
    bool grows_pointwise = false;   // A h > h on the eigen-direction
    bool shrinks_pointwise = false; // A h < h on the eigen-direction
};

/// Power iteration from the all-ones direction with sup-norm normalization,
/// then the pointwise check A h > h / A h < h on the resulting direction.
inline ResilienceVerdict classify(const DerivativeMap& map, double tolerance_band = 1e-3,
                                  std::size_t power_steps = 200) {
    for (double v : map.entries()) detail::require(v >= 0.0, "classify: map must be entrywise non-negative");
    detail::require(tolerance_band >= 0.0, "classify: band must be non-negative");

    ResilienceVerdict out;
    GridFunction h(map.size(), 1.0);
    double radius = 0.0;
    for (std::size_t s = 0; s <= power_steps; ++s) {
        GridFunction g = map.apply(h);
        const double top = g.sup_norm();
        radius = top / h.sup_norm();
        if (top == 0.0 || s == power_steps) break;
        for (std::size_t c = 0; c < g.size(); ++c) g[c] /= top;
        h = std::move(g);
    }
    out.spectral_radius = radius;
    out.margin = std::abs(radius - 1.0);
    out.eigen_direction = h;

    if (radius == 0.0) {
        out.verdict = Verdict::resilient;
        out.shrinks_pointwise = true;
        return out;
    }

    const GridFunction image = map.apply(h);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < h.size(); ++c) {
        lo = std::min(lo, image[c] - h[c]);
        hi = std::max(hi, image[c] - h[c]);
    }
    out.grows_pointwise = lo >= -tolerance_band && hi > tolerance_band;
    out.shrinks_pointwise = hi <= tolerance_band && lo < -tolerance_band;

    if (radius > 1.0 + tolerance_band && out.grows_pointwise && !out.shrinks_pointwise)
        out.verdict = Verdict::non_resilient;
    else if (radius < 1.0 - tolerance_band && out.shrinks_pointwise && !out.grows_pointwise)
        out.verdict = Verdict::resilient;
    else
        out.verdict = Verdict::inconclusive;
    return out;
}

}  // namespace kbp
