#pragma once

// Reference values computed without the grid operators: scalar fixed points
// for constant kernels, the one-dimensional reduction for rank-one kernels,
// and direct Poisson evaluation. The solvers are tested against these.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kbp/errors.hpp"

namespace kbp::oracle {

/// exp(k log(lambda) - lambda - lgamma(k + 1)).
inline double poisson_pmf(std::size_t k, double lambda) {
    detail::require(lambda >= 0.0, "oracle::poisson_pmf: negative lambda");
    if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
    const double kd = static_cast<double>(k);
    return std::exp(kd * std::log(lambda) - lambda - std::lgamma(kd + 1.0));
}

/// P(Poisson(lambda) >= k) by direct summation of the lower terms.
inline double poisson_tail(std::size_t k, double lambda) {
    double below = 0.0;
    for (std::size_t j = 0; j < k; ++j) below += poisson_pmf(j, lambda);
    return std::max(0.0, 1.0 - below);
}

/// Smallest root in [0, 1] of g, assuming g(0) >= 0. Scans upward for the
/// first sign change, then bisects to machine precision.
inline double first_root(const std::function<double(double)>& g, std::size_t scan_points = 100000) {
    if (g(0.0) <= 0.0) return 0.0;
    double lo = 0.0;
    double hi = 1.0;
    for (std::size_t i = 1; i <= scan_points; ++i) {
        const double x = static_cast<double>(i) / static_cast<double>(scan_points);
        if (g(x) <= 0.0) {
            hi = x;
            break;
        }
        lo = x;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Minimal z with z = sum_k shares[k] P(Poisson(c z) >= k): the fixed point
/// for the constant kernel c and a type-independent threshold law.
inline double constant_kernel_fixed_point(double c, std::span<const std::pair<std::size_t, double>> shares) {
    detail::require(c >= 0.0, "oracle::constant_kernel_fixed_point: negative kernel");
    auto g = [&](double z) {
        double psi = 0.0;
        for (const auto& [k, p] : shares) psi += p * poisson_tail(k, c * z);
        return psi - z;
    };
    return first_root(g);
}

/// Rank-one kernel phi(x) phi(y), seeds with probability a, all other
/// vertices at threshold one. With t = int phi f dmu the fixed point is
/// f(x) = a + (1 - a)(1 - exp(-phi(x) t)), and t solves a scalar equation.
/// Integrals use the given nodes and weights. Returns (t, int f dmu).
inline std::pair<double, double> rank_one_fixed_point(const std::function<double(double)>& phi, double a,
                                                      std::span<const double> nodes, std::span<const double> weights) {
    detail::require(nodes.size() == weights.size(), "oracle::rank_one_fixed_point: size mismatch");
    double phi_mass = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) phi_mass += weights[i] * phi(nodes[i]);
    auto profile = [&](double x, double t) { return a + (1.0 - a) * (1.0 - std::exp(-phi(x) * t)); };
    auto g = [&](double s) {
        // s in [0, 1] parametrizes t in [0, phi_mass], which bounds t.
        const double t = s * phi_mass;
        double lhs = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) lhs += weights[i] * phi(nodes[i]) * profile(nodes[i], t);
        return lhs - t;
    };
    const double t = phi_mass > 0.0 ? first_root(g, 20000) * phi_mass : 0.0;
    double integral = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) integral += weights[i] * profile(nodes[i], t);
    return {t, integral};
}

/// Dominant eigenvalue of h -> phi(.) int phi h dmu, namely int phi^2 dmu.
inline double rank_one_eigenvalue(const std::function<double(double)>& phi, std::span<const double> nodes,
                                  std::span<const double> weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * phi(nodes[i]) * phi(nodes[i]);
    return s;
}

/// Rank-one configuration with phi given by polynomial coefficients
/// (constant term first) and seed share a; other vertices have threshold one.
struct RankOneCase {
    std::string label;
    std::vector<double> phi_coefficients;
    double seed_share = 0.0;

    double phi(double x) const {
        double acc = 0.0;
        for (auto it = phi_coefficients.rbegin(); it != phi_coefficients.rend(); ++it) acc = acc * x + *it;
        return acc;
    }
};

/// Constant kernels c appear as phi = sqrt(c).
inline std::vector<RankOneCase> rank_one_cases() {
    return {
        {"constant 0.5", {std::sqrt(0.5)}, 0.1},
        {"constant 1", {1.0}, 0.05},
        {"constant 2", {std::sqrt(2.0)}, 0.1},
        {"constant 3", {std::sqrt(3.0)}, 0.01},
        {"constant 5", {std::sqrt(5.0)}, 0.2},
        {"phi 2x", {0.0, 2.0}, 0.1},
        {"phi 1+x", {1.0, 1.0}, 0.05},
        {"phi 3x^2", {0.0, 0.0, 3.0}, 0.1},
        {"phi 0.5+2x", {0.5, 2.0}, 0.02},
        {"phi 1+x-x^2", {1.0, 1.0, -1.0}, 0.3},
    };
}

struct SynchronousOutcome {
    std::vector<bool> infected;
    std::size_t rounds = 0;  // rounds that infected at least one vertex
};

/// Bootstrap percolation by synchronous rounds on a dense adjacency matrix
/// (adjacency[i][j] means an edge i -> j): every round recounts infected
/// in-neighbours of every vertex from scratch.
inline SynchronousOutcome synchronous_percolation(const std::vector<std::vector<bool>>& adjacency,
                                                  const std::vector<std::size_t>& thresholds) {
    const std::size_t n = thresholds.size();
    SynchronousOutcome out;
    out.infected.assign(n, false);
    for (std::size_t j = 0; j < n; ++j) out.infected[j] = thresholds[j] == 0;
    for (;;) {
        std::vector<bool> next = out.infected;
        bool changed = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (out.infected[j]) continue;
            std::size_t count = 0;
            for (std::size_t i = 0; i < n; ++i) count += adjacency[i][j] && out.infected[i];
            if (count >= thresholds[j]) next[j] = changed = true;
        }
        if (!changed) return out;
        out.infected = std::move(next);
        ++out.rounds;
    }
}

}  // namespace kbp::oracle
