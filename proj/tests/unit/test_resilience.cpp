#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "kbp/oracles.hpp"
#include "kbp/resilience.hpp"
#include "support.hpp"

using namespace kbp;

namespace {

OperatorContext unseeded(std::size_t cells, KernelModel kernel) {
    const TypeGrid g = build_uniform_grid(cells);
    return OperatorContext(g, std::move(kernel), make_constant_measure(g, {{1, 1.0}}));
}

KernelModel rank_one(std::function<double(double)> phi, const TypeGrid& g) { return make_product_kernel(phi, g); }

}  // namespace

TEST(DerivativeAtZero, ZeroMapIsResilient) {
    const ResilienceVerdict v = classify(derivative_at_zero(unseeded(50, make_constant_kernel(0.0))));
    EXPECT_EQ(v.verdict, Verdict::resilient);
    EXPECT_EQ(v.spectral_radius, 0.0);
}

TEST(DerivativeAtZero, ConstantKernelRowSums) {
    const DerivativeMap a = derivative_at_zero(unseeded(40, make_constant_kernel(0.7)));
    const GridFunction image = a.apply(GridFunction(40, 1.0));
    for (double v : image) EXPECT_NEAR(v, 0.7, 1e-14);
}

TEST(DerivativeAtZero, AgreesWithFrechetDerivative) {
    const TypeGrid g = build_uniform_grid(80);
    const GridFunction eta1 = g.tabulate([](double x) { return 0.2 + 0.5 * x; });
    GridFunction rest(80);
    for (std::size_t c = 0; c < 80; ++c) rest[c] = 1.0 - eta1[c];
    const OperatorContext ctx(g, make_case_study_kernel(), make_threshold_measure(g, {{1, eta1}, {3, rest}}));
    const DerivativeMap a = derivative_at_zero(ctx);
    std::mt19937_64 gen(21);
    for (int trial = 0; trial < 20; ++trial) {
        const GridFunction h = kbp::testing::random_function(80, gen, -1.0, 1.0);
        EXPECT_LT(sup_distance(a.apply(h), frechet_derivative(ctx, GridFunction(80), h)), 1e-12);
    }
}

TEST(DerivativeAtZero, RejectsSeededConfigurations) {
    const TypeGrid g = build_uniform_grid(10);
    const OperatorContext ctx(g, make_constant_kernel(1.0), make_constant_measure(g, {{0, 0.1}, {1, 0.9}}));
    EXPECT_THROW(derivative_at_zero(ctx), InvalidArgument);
}

TEST(Classify, ConstantKernels) {
    for (auto [c, expected] : std::vector<std::pair<double, Verdict>>{{0.5, Verdict::resilient},
                                                                      {0.9, Verdict::resilient},
                                                                      {1.0, Verdict::inconclusive},
                                                                      {1.1, Verdict::non_resilient},
                                                                      {2.0, Verdict::non_resilient}}) {
        const ResilienceVerdict v = classify(derivative_at_zero(unseeded(100, make_constant_kernel(c))));
        EXPECT_EQ(v.verdict, expected) << "c=" << c;
        EXPECT_NEAR(v.spectral_radius, c, 1e-12);
        EXPECT_NEAR(v.margin, std::abs(c - 1.0), 1e-12);
    }
}

TEST(Classify, RankOneEigenvalue) {
    const TypeGrid g = build_uniform_grid(200);
    auto phi = [](double x) { return 2.0 * x; };
    const ResilienceVerdict v = classify(derivative_at_zero(unseeded(200, rank_one(phi, g))));
    EXPECT_NEAR(v.spectral_radius, 4.0 / 3.0, 1e-3);
    EXPECT_NEAR(v.spectral_radius, oracle::rank_one_eigenvalue(phi, g.midpoints(), g.weights()), 1e-6);
    EXPECT_EQ(v.verdict, Verdict::non_resilient);
    EXPECT_TRUE(v.grows_pointwise);
    EXPECT_FALSE(v.shrinks_pointwise);
    EXPECT_NEAR(v.eigen_direction.sup_norm(), 1.0, 1e-12);
}

TEST(Classify, SubcriticalRankOne) {
    const TypeGrid g = build_uniform_grid(200);
    auto phi = [](double x) { return 0.5 + 0.5 * x; };
    const ResilienceVerdict v = classify(derivative_at_zero(unseeded(200, rank_one(phi, g))));
    EXPECT_NEAR(v.spectral_radius, oracle::rank_one_eigenvalue(phi, g.midpoints(), g.weights()), 1e-6);
    EXPECT_EQ(v.verdict, Verdict::resilient);
    EXPECT_TRUE(v.shrinks_pointwise);
}

TEST(Classify, VerdictsAreExclusive) {
    for (double c : {0.3, 0.999, 1.0005, 1.5}) {
        const ResilienceVerdict v = classify(derivative_at_zero(unseeded(30, make_constant_kernel(c))));
        EXPECT_FALSE(v.grows_pointwise && v.shrinks_pointwise);
        if (std::abs(c - 1.0) <= 1e-3) { EXPECT_EQ(v.verdict, Verdict::inconclusive); }
    }
}

TEST(DerivativeMap, LinearAndPositive) {
    const DerivativeMap a = derivative_at_zero(unseeded(60, make_case_study_kernel()));
    std::mt19937_64 gen(3);
    const GridFunction f = kbp::testing::random_function(60, gen, -1.0, 1.0);
    const GridFunction h = kbp::testing::random_function(60, gen, -1.0, 1.0);
    GridFunction mix(60);
    for (std::size_t c = 0; c < 60; ++c) mix[c] = 2.0 * f[c] - 3.0 * h[c];
    const GridFunction af = a.apply(f), ah = a.apply(h), am = a.apply(mix);
    for (std::size_t c = 0; c < 60; ++c) EXPECT_NEAR(am[c], 2.0 * af[c] - 3.0 * ah[c], 1e-12);
    const GridFunction pos = a.apply(kbp::testing::random_function(60, gen, 0.0, 1.0));
    for (double v : pos) EXPECT_GE(v, 0.0);
}

TEST(Classify, StableUnderGridRefinement) {
    const double coarse = classify(derivative_at_zero(unseeded(150, kbp::testing::sum_kernel()))).spectral_radius;
    const double fine = classify(derivative_at_zero(unseeded(300, kbp::testing::sum_kernel()))).spectral_radius;
    EXPECT_LT(std::abs(coarse - fine), 1e-3);
}

TEST(Classify, RejectsNegativeEntries) {
    EXPECT_THROW(classify(DerivativeMap(2, {0.1, -0.2, 0.3, 0.4})), InvalidArgument);
    EXPECT_THROW(DerivativeMap(2, {0.1, 0.2}), InvalidArgument);
    EXPECT_THROW(classify(DerivativeMap(1, {0.5}), -1.0), InvalidArgument);
}
