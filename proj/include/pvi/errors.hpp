#pragma once

#include <stdexcept>
#include <string>

namespace pvi {

// Base class for every error raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A coefficient returned a non-finite value when probed.
struct EvaluationError : Error {
    using Error::Error;
};

// A simulated state became non-finite (reports path and step).
struct SimulationError : Error {
    using Error::Error;
};

// A discretization is infeasible (chain probabilities, CFL, boundary setup).
struct DiscretizationError : Error {
    using Error::Error;
};

// Regression design is rank-deficient beyond the ridge fallback.
struct ConditioningError : Error {
    using Error::Error;
};

// A fixed-point step cannot contract at the requested step size.
struct StepSizeError : Error {
    using Error::Error;
};

// Backward values diverged to non-finite numbers.
struct DivergenceError : Error {
    using Error::Error;
};

// Experiment config violates the schema.
struct ConfigError : Error {
    using Error::Error;
};

// Structural mismatch: wrong constraint form, grid mismatch, unsupported diagnostic.
struct ShapeError : Error {
    using Error::Error;
};

} // namespace pvi
