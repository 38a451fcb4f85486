#pragma once

#include <stdexcept>
#include <string>

namespace moce {

// Error taxonomy shared by the whole library. Every throwing path uses one
// of these so callers (and the CLI) can map failure classes to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape mismatch between operands (matrix dims, expert counts, batch sizes).
struct DimensionError : Error {
    using Error::Error;
};

// NaN/Inf encountered where a finite value is required.
struct NumericError : Error {
    using Error::Error;
};

// Structurally well-formed input that violates a documented precondition
// (label out of range, negative loss component, bad degradation rate, ...).
struct ValidationError : Error {
    using Error::Error;
};

// Invalid configuration values (zero-slope sigmoid, single-role taxonomy, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed serialized input; carries the 1-based line number.
struct ParseError : Error {
    int line;
    ParseError(const std::string& msg, int line_number)
        : Error(msg + " (line " + std::to_string(line_number) + ")"), line(line_number) {}
};

} // namespace moce
