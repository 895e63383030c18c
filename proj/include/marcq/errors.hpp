#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace marcq {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented invariant (workload file, config, CLI argument).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Workload file could not be read or is not well-formed JSON / schema.
class ParseError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Argument outside the domain of a formula, e.g. lambda >= lambda*.
class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Linear solve failed, chain is reducible, or a residual check did not pass.
class NumericError : public Error {
public:
    using Error::Error;
};

/// State enumeration hit the configured cap.
class CapExceeded : public NumericError {
public:
    CapExceeded(std::size_t reached, std::size_t cap)
        : NumericError("state cap exceeded: reached " + std::to_string(reached) +
                       " states (cap " + std::to_string(cap) + ")"),
          reached_(reached) {}

    std::size_t reached() const noexcept { return reached_; }

private:
    std::size_t reached_;
};

/// Simulation queue grew past the runaway bound; the load is almost surely >= lambda*.
class InstabilityError : public Error {
public:
    using Error::Error;
};

} // namespace marcq
