#pragma once

#include <stdexcept>
#include <string>

namespace sysid {

// Root of everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments, broken invariants, malformed configs or files.
// The CLI maps these to exit code 1.
struct ValidationError : Error {
    using Error::Error;
};

// Runtime numerical failures: divergence, degenerate data, non-convergence.
// The CLI maps these to exit code 2.
struct NumericError : Error {
    using Error::Error;
};

struct ConfigError : ValidationError {
    using ValidationError::ValidationError;
};

// File could not be opened, read, or atomically replaced.
struct IoError : ValidationError {
    using ValidationError::ValidationError;
};

// Leading coefficient of a characteristic polynomial vanished.
struct DegenerateOrderError : ValidationError {
    using ValidationError::ValidationError;
};

// Two series that must share a time grid do not.
struct GridMismatchError : ValidationError {
    using ValidationError::ValidationError;
};

// Fewer data points (or distinct abscissae) than the fit needs.
struct InsufficientDataError : ValidationError {
    using ValidationError::ValidationError;
};

// A record is too short or too coarsely sampled for the requested analysis.
struct WindowError : NumericError {
    using NumericError::NumericError;
};

// Inversion target outside the image of a monotone map.
struct OutOfRangeError : NumericError {
    using NumericError::NumericError;
};

// Input signal carries no usable component at the analysis frequency.
struct DegenerateInputError : NumericError {
    using NumericError::NumericError;
};

// Transfer function evaluated at (numerically) a root of its denominator.
struct SingularityError : NumericError {
    using NumericError::NumericError;
};

// Trajectory left the representable range during integration.
struct DivergenceError : NumericError {
    double t_fail;
    DivergenceError(const std::string& msg, double t) : NumericError(msg), t_fail(t) {}
};

// Objective became non-finite during a search.
struct NonFiniteError : NumericError {
    using NumericError::NumericError;
};

}  // namespace sysid
