// error.hpp - exception hierarchy shared by every vibsync module.
//
// ConfigError covers anything the user can fix by changing inputs; the CLI
// maps it to exit code 1. NumericalError covers solver/integrator failures
// (exit code 2).

#pragma once

#include <stdexcept>
#include <string>

namespace vibsync {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

// Truncation produces a Hilbert space larger than the configured maximum.
class DimensionOverflow : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Dense superoperator would not fit the configured dimension budget.
class MemoryBudgetExceeded : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class UnknownPreset : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class IndexOutOfRange : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class WindowTooShort : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Operands carry different basis tags (local product basis vs eigenbasis).
class BasisMismatch : public Error {
public:
    using Error::Error;
};

class SolverFailure : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class StepSizeUnderflow : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class InvariantViolation : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace vibsync
