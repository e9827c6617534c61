#pragma once

#include <stdexcept>
#include <string>

namespace ncmech {

/// Base class for all engine errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed expression text. Carries the byte offset of the first bad token.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t offset)
        : Error(msg + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Evaluation failure: unbound symbol or a domain error (log/sqrt of a
/// negative argument, division by zero, invalid pow).
class EvalError : public Error {
public:
    using Error::Error;
};

/// The velocity Hessian of the doubled Lagrangian is (numerically) singular.
class NonRegularError : public Error {
public:
    using Error::Error;
};

/// Newton iteration failed to invert the momentum map.
class NoConvergenceError : public Error {
public:
    NoConvergenceError(const std::string& msg, double lastResidual)
        : Error(msg), lastResidual_(lastResidual) {}
    double last_residual() const { return lastResidual_; }

private:
    double lastResidual_;
};

/// Adaptive integration drove the step size below the representable floor,
/// which signals stiffness or a singularity (e.g. a central-force collision).
class StepUnderflowError : public Error {
public:
    using Error::Error;
};

/// Scenario/config file problems.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace ncmech
