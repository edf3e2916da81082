#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "kbp/model.hpp"

namespace kbp::testing {

/// Random grid function with values in [lo, hi].
inline GridFunction random_function(std::size_t size, std::mt19937_64& gen, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    GridFunction f(size);
    for (std::size_t i = 0; i < size; ++i) f[i] = dist(gen);
    return f;
}

inline KernelModel sum_kernel() {
    return KernelModel{[](double x, double y) { return x + y; }, 2.0, "x+y"};
}

}  // namespace kbp::testing
