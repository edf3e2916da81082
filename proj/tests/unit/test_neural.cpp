#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "kbp/neural.hpp"
#include "kbp/oracles.hpp"

using namespace kbp;

namespace {

constexpr double scalar_root = 0.82828797161884326468;

OperatorContext constant_context(std::size_t cells, double c, std::vector<std::pair<std::size_t, double>> shares) {
    const TypeGrid g = build_uniform_grid(cells);
    return OperatorContext(g, make_constant_kernel(c), make_constant_measure(g, shares));
}

}  // namespace

TEST(NeuralApproximator, OutputInOpenUnitInterval) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        NeuralApproximator net = NeuralApproximator::standard(1e-3, seed);
        for (double& p : net.parameters()) p *= 8.0;
        for (int i = 0; i <= 100; ++i) {
            const double y = net(i / 100.0);
            ASSERT_GT(y, 0.0);
            ASSERT_LT(y, 1.0);
        }
    }
}

TEST(NeuralApproximator, RejectsBadShapesAndPenalty) {
    EXPECT_THROW(NeuralApproximator({1, 20, 1}, 0.0), InvalidArgument);
    EXPECT_THROW(NeuralApproximator({1, 20, 1}, 1.0), InvalidArgument);
    EXPECT_THROW(NeuralApproximator({2, 20, 1}, 1e-3), InvalidArgument);
    EXPECT_THROW(NeuralApproximator({1, 0, 1}, 1e-3), InvalidArgument);
    EXPECT_THROW(NeuralApproximator({1}, 1e-3), InvalidArgument);
    EXPECT_EQ(NeuralApproximator::standard().parameter_count(), 2u * 20 + 20 * 20 + 20 + 20 + 1);
}

TEST(NeuralApproximator, BackpropMatchesFiniteDifferences) {
    NeuralApproximator net = NeuralApproximator::standard(1e-3, 9);
    const std::vector<double> xs{0.0, 0.13, 0.5, 0.77, 1.0};
    const std::vector<double> upstream{1.0, -0.5, 2.0, 0.25, -1.5};
    std::vector<double> grad(net.parameter_count(), 0.0);
    net.accumulate_gradient(xs, upstream, grad);
    auto weighted_sum = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) s += upstream[i] * net(xs[i]);
        return s;
    };
    const double h = 1e-6;
    for (std::size_t k = 0; k < net.parameter_count(); ++k) {
        const double keep = net.parameters()[k];
        net.parameters()[k] = keep + h;
        const double up = weighted_sum();
        net.parameters()[k] = keep - h;
        const double dn = weighted_sum();
        net.parameters()[k] = keep;
        ASSERT_NEAR(grad[k], (up - dn) / (2.0 * h), 1e-7) << "parameter " << k;
    }
}

TEST(LearningRateSchedule, HoldDecayFloor) {
    const LearningRateSchedule s{0.1, 10, 0.5, 5, 0.01};
    EXPECT_EQ(s.rate(0), 0.1);
    EXPECT_EQ(s.rate(9), 0.1);
    EXPECT_NEAR(s.rate(15), 0.05, 1e-15);
    EXPECT_NEAR(s.rate(20), 0.025, 1e-15);
    EXPECT_EQ(s.rate(1000), 0.01);
}

TEST(SolveNN, ZeroKernelFitsSeedDensity) {
    const OperatorContext ctx = constant_context(200, 0.0, {{0, 0.1}, {2, 0.9}});
    const NeuralResult r = solve_nn(ctx, NeuralApproximator::standard());
    for (double v : r.fixed_point.f_hat) EXPECT_NEAR(v, 0.1, 0.01);
    EXPECT_LT(r.fixed_point.residual, 0.01);
    EXPECT_LT(r.objective_trace.back(), 1e-3 * (1.0 + 1e-3));
}

TEST(SolveNN, ScalarRankOneMatchesOracle) {
    const OperatorContext ctx = constant_context(200, 2.0, {{0, 0.1}, {1, 0.9}});
    const NeuralResult r = solve_nn(ctx, NeuralApproximator::standard());
    EXPECT_NEAR(r.fixed_point.integral, scalar_root, 0.01);
    EXPECT_NEAR(r.fixed_point.integral, solve_picard(ctx).integral, 0.01);
}

TEST(SolveNN, AdamAgreesWithPicardOnThresholdTwo) {
    const OperatorContext ctx = constant_context(200, 2.0, {{0, 0.1}, {2, 0.9}});
    NeuralOptions o;
    o.optimizer = Optimizer::adam;
    o.schedule = {3e-3, 2000, 0.5, 5000, 1e-5};
    const NeuralResult r = solve_nn(ctx, NeuralApproximator::standard(), o);
    EXPECT_NEAR(r.fixed_point.integral, solve_picard(ctx).integral, 0.01);
    EXPECT_LT(r.fixed_point.residual, 0.01);
}

TEST(SolveNN, MomentumRuns) {
    const OperatorContext ctx = constant_context(100, 0.0, {{0, 0.3}, {1, 0.7}});
    NeuralOptions o;
    o.optimizer = Optimizer::momentum;
    o.schedule = {0.05, 5000, 0.5, 5000, 1e-5};
    const NeuralResult r = solve_nn(ctx, NeuralApproximator::standard(), o);
    EXPECT_NEAR(r.fixed_point.integral, 0.3, 0.01);
}

TEST(SolveNN, DeterministicForFixedSeeds) {
    const OperatorContext ctx = constant_context(100, 2.0, {{0, 0.1}, {1, 0.9}});
    NeuralOptions o;
    o.optimizer = Optimizer::adam;
    o.schedule = {3e-3, 2000, 0.5, 5000, 1e-5};
    o.seed = 3;
    const NeuralResult a = solve_nn(ctx, NeuralApproximator::standard(1e-3, 4), o);
    const NeuralResult b = solve_nn(ctx, NeuralApproximator::standard(1e-3, 4), o);
    EXPECT_EQ(a.objective_trace, b.objective_trace);
    EXPECT_EQ(a.fixed_point.f_hat, b.fixed_point.f_hat);
    EXPECT_LT(std::abs(a.fixed_point.derivative_condition.margin - b.fixed_point.derivative_condition.margin), 1e-8);
}

TEST(SolveNN, FailureCarriesObjectiveTrace) {
    const OperatorContext ctx = constant_context(100, 2.0, {{0, 0.1}, {1, 0.9}});
    NeuralOptions o;
    o.max_steps = 5;
    try {
        solve_nn(ctx, NeuralApproximator::standard(), o);
        FAIL() << "expected ConvergenceFailure";
    } catch (const ConvergenceFailure& e) {
        EXPECT_EQ(e.trace().size(), 5u);
        EXPECT_EQ(e.last_iterate().size(), 100u);
    }
    o.sample_count = 1;
    EXPECT_THROW(solve_nn(ctx, NeuralApproximator::standard(), o), InvalidArgument);
}
