#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kbp {

/// Raised when an argument violates an operation's precondition.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative solver exhausts its budget. Carries the last
/// iterate, its residual, and the per-step objective trace so callers can
/// inspect how far the solver got.
class ConvergenceFailure : public std::runtime_error {
public:
    ConvergenceFailure(const std::string& what, std::vector<double> last_iterate,
                       double residual, std::vector<double> trace = {})
        : std::runtime_error(what),
          last_iterate_(std::move(last_iterate)),
          residual_(residual),
          trace_(std::move(trace)) {}

    const std::vector<double>& last_iterate() const noexcept { return last_iterate_; }
    double residual() const noexcept { return residual_; }
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> last_iterate_;
    double residual_;
    std::vector<double> trace_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
    if (!condition) throw InvalidArgument(message);
}

}  // namespace detail

}  // namespace kbp
