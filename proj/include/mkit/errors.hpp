#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mkit {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A coordinate or argument outside the domain where a quantity is defined.
struct DomainError : Error {
    using Error::Error;
};

/// A primitive failed while evaluating an expression graph.
struct EvaluationError : DomainError {
    EvaluationError(std::size_t node, const std::string& what)
        : DomainError("node " + std::to_string(node) + ": " + what), node_id(node) {}
    std::size_t node_id;
};

/// Inconsistent or insufficient configuration (jet order, multi-index, grids).
struct ConfigurationError : Error {
    using Error::Error;
};

/// A requested size exceeds a hard cap.
struct ResourceError : Error {
    using Error::Error;
};

/// Model coefficients violate a runtime-checkable hypothesis.
struct ModelViolation : Error {
    using Error::Error;
};

/// A Monte Carlo estimator produced non-finite samples.
struct EstimatorFailure : Error {
    EstimatorFailure(const std::string& what, std::size_t bad)
        : Error(what + " (" + std::to_string(bad) + " non-finite samples)"), offending(bad) {}
    std::size_t offending;
};

}  // namespace mkit
