#pragma once
// Exception types. The CLI maps each family onto an exit code.

#include <stdexcept>
#include <string>
#include <vector>

namespace blau {

/// Invalid configuration, schema, or argument (exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure: non-convergence, non positive-definite matrices (exit code 3).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File access or parse failure (exit code 4).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Optimizer ran out of iterations. Carries the last iterate for diagnostics.
class NonConvergenceError : public NumericError {
public:
    NonConvergenceError(const std::string& what, std::vector<double> last_iterate,
                        double gradient_norm)
        : NumericError(what), last_iterate_(std::move(last_iterate)),
          gradient_norm_(gradient_norm) {}

    const std::vector<double>& last_iterate() const { return last_iterate_; }
    double gradient_norm() const { return gradient_norm_; }

private:
    std::vector<double> last_iterate_;
    double gradient_norm_;
};

}  // namespace blau
