#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "kbp/errors.hpp"

namespace kbp {

namespace detail {

inline constexpr double log_space_lambda = 30.0;
inline constexpr std::size_t log_space_k = 20;

inline double poisson_log_term(std::size_t k, double lambda) {
    const double kd = static_cast<double>(k);
    return std::exp(kd * std::log(lambda) - lambda - std::lgamma(kd + 1.0));
}

}  // namespace detail

/// Poisson pmf lambda^k e^{-lambda} / k!.
inline double poisson_term(std::size_t k, double lambda) {
    detail::require(lambda >= 0.0 && !std::isnan(lambda), "poisson_term: lambda must be non-negative");
    if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
    if (k > detail::log_space_k || lambda > detail::log_space_lambda) return detail::poisson_log_term(k, lambda);
    double p = std::exp(-lambda);
    for (std::size_t j = 1; j <= k; ++j) p *= lambda / static_cast<double>(j);
    return p;
}

/// Pmf values p(0..kmax, lambda).
inline std::vector<double> poisson_terms(std::size_t kmax, double lambda) {
    detail::require(lambda >= 0.0 && !std::isnan(lambda), "poisson_terms: lambda must be non-negative");
    std::vector<double> p(kmax + 1, 0.0);
    if (lambda == 0.0) {
        p[0] = 1.0;
        return p;
    }
    if (lambda > detail::log_space_lambda) {
        for (std::size_t k = 0; k <= kmax; ++k) p[k] = detail::poisson_log_term(k, lambda);
        return p;
    }
    p[0] = std::exp(-lambda);
    for (std::size_t k = 1; k <= kmax; ++k) p[k] = p[k - 1] * lambda / static_cast<double>(k);
    return p;
}

/// Upper tails P(X >= k) for X ~ Poisson(lambda), k = 0..kmax, as one minus
/// a Kahan-compensated cumulative sum of the pmf.
inline std::vector<double> poisson_upper_tails(std::size_t kmax, double lambda) {
    const std::vector<double> p = poisson_terms(kmax, lambda);
    std::vector<double> tail(kmax + 1);
    double sum = 0.0, carry = 0.0;
    for (std::size_t k = 0; k <= kmax; ++k) {
        tail[k] = std::max(0.0, 1.0 - sum);
        const double y = p[k] - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    return tail;
}

}  // namespace kbp
