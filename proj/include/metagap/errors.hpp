#pragma once

#include <stdexcept>
#include <string>

namespace metagap {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed inputs: bad dimensions, invalid probabilities, schema
/// violations, out-of-range parameters. Maps to process exit code 1.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(what) {}
};

/// A matrix that the math requires to be invertible is singular or has
/// condition number beyond the configured guard.
class SingularMatrixError : public Error {
public:
    explicit SingularMatrixError(const std::string& what) : Error(what) {}
};

/// A cross-check between independent computations failed. Maps to process
/// exit code 2.
class VerificationError : public Error {
public:
    explicit VerificationError(const std::string& what) : Error(what) {}
};

/// An iterative trainer blew up (‖w‖ above the divergence guard). Maps to
/// process exit code 3.
class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& what) : Error(what) {}
};

}  // namespace metagap
