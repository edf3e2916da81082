#pragma once

// Neural-network approximation of the minimal fixed point. A small tanh
// network with a logistic output head is trained to minimize
//
//   J(theta) = 1/N sum_i |f(x_i) - Psi f(x_i)| + gamma * int f dmu,
//
// where Psi f(x_i) uses the grid Riemann sum for Lambda. Gradients are exact:
// the chain rule runs through the network at the sample points, through
// Psi (dPsi/dLambda = V), and through the quadrature back into the network at
// the grid midpoints.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kbp/errors.hpp"
#include "kbp/fixed_point.hpp"
#include "kbp/model.hpp"
#include "kbp/operators.hpp"
#include "kbp/rng.hpp"

namespace kbp {

/// Fully connected network R -> (0,1): tanh hidden layers, logistic output.
/// Parameters live in one flat vector; layer l stores its weight matrix
/// (out x in, row-major) followed by its bias.
class NeuralApproximator {
public:
    NeuralApproximator(std::vector<std::size_t> layer_sizes, double penalty_gamma, std::uint64_t seed = 0)
        : sizes_(std::move(layer_sizes)), gamma_(penalty_gamma) {
        detail::require(sizes_.size() >= 2, "NeuralApproximator: need input and output layers");
        detail::require(sizes_.front() == 1 && sizes_.back() == 1, "NeuralApproximator: input and output width must be 1");
        for (std::size_t s : sizes_) detail::require(s >= 1, "NeuralApproximator: empty layer");
        detail::require(gamma_ > 0.0 && gamma_ < 1.0, "NeuralApproximator: penalty gamma must lie in (0,1)");
        std::size_t total = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            offsets_.push_back(total);
            total += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
        }
        params_.assign(total, 0.0);
        // Glorot-uniform weights, zero biases.
        std::mt19937_64 gen(seed);
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            const double limit = std::sqrt(6.0 / static_cast<double>(sizes_[l] + sizes_[l + 1]));
            std::uniform_real_distribution<double> dist(-limit, limit);
            double* w = params_.data() + offsets_[l];
            for (std::size_t i = 0; i < sizes_[l + 1] * sizes_[l]; ++i) w[i] = dist(gen);
        }
    }

    /// Two hidden layers of 20 tanh units.
    static NeuralApproximator standard(double penalty_gamma = 1e-3, std::uint64_t seed = 0) {
        return NeuralApproximator({1, 20, 20, 1}, penalty_gamma, seed);
    }

    const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
    double penalty_gamma() const noexcept { return gamma_; }
    std::span<const double> parameters() const noexcept { return params_; }
    std::span<double> parameters() noexcept { return params_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }

    void set_output_bias(double b) { params_.back() = b; }

    double operator()(double x) const {
        const double in[1] = {x};
        Activations cache;
        return forward(in, cache)[0];
    }

    std::vector<double> evaluate(std::span<const double> xs) const {
        Activations cache;
        return forward(xs, cache);
    }

    /// Per-layer activations of a batch, kept for the backward pass.
    struct Activations {
        std::size_t points = 0;
        std::vector<std::vector<double>> layers;  // [layer][point * width + unit]
    };

    /// Evaluates the network at every point and stores the activations.
    std::vector<double> forward(std::span<const double> xs, Activations& cache) const {
        const std::size_t layers = sizes_.size() - 1;
        cache.points = xs.size();
        cache.layers.resize(layers + 1);
        cache.layers[0].resize(xs.size());
        for (std::size_t p = 0; p < xs.size(); ++p) cache.layers[0][p] = 2.0 * xs[p] - 1.0;
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = sizes_[l], out = sizes_[l + 1];
            const double* w = params_.data() + offsets_[l];
            const double* b = w + out * in;
            const bool last = l + 1 == layers;
            const std::vector<double>& a = cache.layers[l];
            std::vector<double>& z = cache.layers[l + 1];
            z.resize(xs.size() * out);
            for (std::size_t p = 0; p < xs.size(); ++p) {
                const double* ap = a.data() + p * in;
                double* zp = z.data() + p * out;
                for (std::size_t o = 0; o < out; ++o) {
                    double v = b[o];
                    const double* wo = w + o * in;
                    for (std::size_t i = 0; i < in; ++i) v += wo[i] * ap[i];
                    zp[o] = last ? logistic(v) : std::tanh(v);
                }
            }
        }
        return cache.layers[layers];
    }

    /// Adds sum_p upstream[p] * d f(x_p) / d theta into grad, reusing the
    /// activations of the matching forward pass.
    void backward(const Activations& cache, std::span<const double> upstream, std::span<double> grad) const {
        detail::require(upstream.size() == cache.points, "NeuralApproximator::backward: size mismatch");
        detail::require(grad.size() == params_.size(), "NeuralApproximator::backward: gradient size mismatch");
        const std::size_t layers = sizes_.size() - 1;
        std::size_t widest = 0;
        for (std::size_t s : sizes_) widest = std::max(widest, s);
        std::vector<double> delta(widest), prev(widest);
        for (std::size_t p = 0; p < cache.points; ++p) {
            if (upstream[p] == 0.0) continue;
            const double y = cache.layers[layers][p];
            delta[0] = upstream[p] * y * (1.0 - y);
            for (std::size_t l = layers; l-- > 0;) {
                const std::size_t in = sizes_[l], out = sizes_[l + 1];
                const double* w = params_.data() + offsets_[l];
                double* gw = grad.data() + offsets_[l];
                double* gb = gw + out * in;
                const double* a = cache.layers[l].data() + p * in;
                for (std::size_t o = 0; o < out; ++o) {
                    gb[o] += delta[o];
                    for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += delta[o] * a[i];
                }
                if (l == 0) break;
                std::fill(prev.begin(), prev.begin() + static_cast<std::ptrdiff_t>(in), 0.0);
                for (std::size_t o = 0; o < out; ++o)
                    for (std::size_t i = 0; i < in; ++i) prev[i] += w[o * in + i] * delta[o];
                for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - a[i] * a[i];
                std::swap(delta, prev);
            }
        }
    }

    void accumulate_gradient(std::span<const double> xs, std::span<const double> upstream,
                             std::span<double> grad) const {
        Activations cache;
        forward(xs, cache);
        backward(cache, upstream, grad);
    }

private:
    static double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
    double gamma_;
};

/// Constant rate for hold_steps, then exponential decay by `decay` every
/// decay_every steps, never below floor.
struct LearningRateSchedule {
    double initial = 0.3;
    std::size_t hold_steps = 5000;
    double decay = 0.5;
    std::size_t decay_every = 10000;
    double floor = 1e-5;

    double rate(std::size_t step) const {
        if (step < hold_steps) return initial;
        const double e = static_cast<double>(step - hold_steps) / static_cast<double>(decay_every);
        return std::max(floor, initial * std::pow(decay, e));
    }
};

enum class Optimizer { gradient_descent, momentum, adam };

struct NeuralOptions {
    LearningRateSchedule schedule{};
    Optimizer optimizer = Optimizer::gradient_descent;
    double momentum = 0.9;
    /// Stop once J falls below this; non-positive means 1e-3 (1 + gamma).
    double stop_epsilon = 0.0;
    std::size_t max_steps = 50000;
    std::size_t sample_count = 200;
    std::uint64_t seed = 0;
    /// Initial output level of the network (through the output bias). Values
    /// well above the seed level keep training out of the low region where
    /// the linearization of Psi exceeds one and |f - Psi f| has spurious minima.
    double initial_level = 0.5;
};

struct NeuralResult {
    FixedPointResult fixed_point;
    NeuralApproximator net;
    std::vector<double> objective_trace;
    double sample_residual = 0.0;  // max_i |f(x_i) - Psi f(x_i)| at termination
};

namespace detail {

struct NeuralObjective {
    double value = 0.0;
    double mean_abs = 0.0;
    double max_abs = 0.0;
};

}  // namespace detail

/// Trains the network on J with the chosen first-order optimizer. The subgradient of |r|
/// uses sign(0) = 0. Throws ConvergenceFailure carrying the J trace when J
/// does not reach the stopping threshold within max_steps.
inline NeuralResult solve_nn(const OperatorContext& ctx, NeuralApproximator net, const NeuralOptions& options = {}) {
    detail::require(options.sample_count >= 2, "solve_nn: need at least two sample points");
    const double gamma = net.penalty_gamma();
    const double stop = options.stop_epsilon > 0.0 ? options.stop_epsilon : 1e-3 * (1.0 + gamma);
    const TypeGrid& grid = ctx.grid();
    const ThresholdMeasure& measure = ctx.measure();
    const std::size_t m = grid.cell_count();
    const std::size_t n = options.sample_count;
    auto mids = grid.midpoints();
    auto w = grid.weights();

    std::vector<double> xs(n);
    std::vector<std::size_t> cells(n);
    const CounterRng rng(options.seed, Stream::training);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = rng.uniform(i);
        cells[i] = grid.cell_of(xs[i]);
    }
    // weighted[i * m + j] = kappa(x_j, sample_i) * w_j
    std::vector<double> weighted(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) weighted[i * m + j] = ctx.kernel()(mids[j], xs[i]) * w[j];

    {
        const double level = std::clamp(options.initial_level, 1e-3, 1.0 - 1e-3);
        net.set_output_bias(std::log(level / (1.0 - level)));
    }

    const std::size_t p = net.parameter_count();
    std::vector<double> grad(p), vel(p, 0.0), m1(p, 0.0), m2(p, 0.0);
    std::vector<double> up_samples(n), up_grid(m);
    std::vector<double> trace;

    auto objective = [&](const std::vector<double>& on_grid, const std::vector<double>& on_samples,
                         std::vector<double>* signs, std::vector<double>* sens) {
        detail::NeuralObjective obj;
        for (std::size_t i = 0; i < n; ++i) {
            double lambda = 0.0;
            const double* row = weighted.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) lambda += row[j] * on_grid[j];
            const detail::CellResponse resp = detail::cell_response(measure, cells[i], lambda);
            const double r = on_samples[i] - resp.psi;
            obj.mean_abs += std::abs(r);
            obj.max_abs = std::max(obj.max_abs, std::abs(r));
            if (signs) (*signs)[i] = static_cast<double>((r > 0.0) - (r < 0.0));
            if (sens) (*sens)[i] = resp.v;
        }
        obj.mean_abs /= static_cast<double>(n);
        double integral = 0.0;
        for (std::size_t j = 0; j < m; ++j) integral += w[j] * on_grid[j];
        obj.value = obj.mean_abs + gamma * integral;
        return obj;
    };

    std::vector<double> signs(n), sens(n);
    NeuralApproximator::Activations grid_cache, sample_cache;
    bool converged = false;
    double last_max = 0.0;
    for (std::size_t step = 0; step < options.max_steps; ++step) {
        const std::vector<double> on_grid = net.forward(mids, grid_cache);
        const std::vector<double> on_samples = net.forward(xs, sample_cache);
        const detail::NeuralObjective obj = objective(on_grid, on_samples, &signs, &sens);
        trace.push_back(obj.value);
        last_max = obj.max_abs;
        if (obj.value < stop) {
            converged = true;
            break;
        }

        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) up_samples[i] = signs[i] * inv_n;
        for (std::size_t j = 0; j < m; ++j) up_grid[j] = gamma * w[j];
        for (std::size_t i = 0; i < n; ++i) {
            const double c = signs[i] * inv_n * sens[i];
            if (c == 0.0) continue;
            const double* row = weighted.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) up_grid[j] -= c * row[j];
        }
        std::fill(grad.begin(), grad.end(), 0.0);
        net.backward(sample_cache, up_samples, grad);
        net.backward(grid_cache, up_grid, grad);

        const double lr = options.schedule.rate(step);
        auto theta = net.parameters();
        switch (options.optimizer) {
            case Optimizer::gradient_descent:
                for (std::size_t k = 0; k < p; ++k) theta[k] -= lr * grad[k];
                break;
            case Optimizer::momentum:
                for (std::size_t k = 0; k < p; ++k) {
                    vel[k] = options.momentum * vel[k] - lr * grad[k];
                    theta[k] += vel[k];
                }
                break;
            case Optimizer::adam: {
                constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                const double t = static_cast<double>(step + 1);
                const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
                for (std::size_t k = 0; k < p; ++k) {
                    m1[k] = b1 * m1[k] + (1.0 - b1) * grad[k];
                    m2[k] = b2 * m2[k] + (1.0 - b2) * grad[k] * grad[k];
                    theta[k] -= lr * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + eps);
                }
                break;
            }
        }
    }

    GridFunction f_hat(net.evaluate(mids));
    if (!converged) {
        throw ConvergenceFailure("solve_nn: objective did not reach " + std::to_string(stop) + " within " +
                                     std::to_string(options.max_steps) + " steps",
                                 f_hat.vector(), trace.empty() ? 0.0 : trace.back(), trace);
    }

    NeuralResult out{FixedPointResult{}, std::move(net), std::move(trace), last_max};
    FixedPointResult& fp = out.fixed_point;
    fp.residual = sup_distance(psi_op(ctx, f_hat), f_hat);
    fp.integral = grid.integrate(f_hat);
    fp.iterations = out.objective_trace.size() - 1;
    fp.derivative_condition = evaluate_derivative_condition(ctx, f_hat);
    fp.f_hat = std::move(f_hat);
    return out;
}

}  // namespace kbp
