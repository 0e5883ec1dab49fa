#pragma once

#include <stdexcept>
#include <string>

namespace fol {

/// Base of all library errors. `exit_code()` is what the CLI returns.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

/// Bad arguments, malformed input, violated preconditions.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Solver non-convergence, singular operators, non-finite losses.
class NumericalError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class IoError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class ParseError : public ValidationError {
public:
    ParseError(std::size_t line, const std::string& what)
        : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class SingularJacobianError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// A model, sample set or field was produced for a different mesh/dof layout.
class FingerprintMismatch : public ValidationError {
public:
    using ValidationError::ValidationError;
};

} // namespace fol
