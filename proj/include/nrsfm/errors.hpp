#pragma once

#include <stdexcept>
#include <string>

namespace nrsfm {

// Caller misuse: bad arguments, wrong shapes at an API boundary, bad flags.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes incompatible for a graph op.
struct DimensionError : UsageError {
    explicit DimensionError(const std::string& msg) : UsageError(msg) {}
};

// Invalid configuration value; message names the offending field.
struct ConfigError : UsageError {
    explicit ConfigError(const std::string& msg) : UsageError(msg) {}
};

// Non-finite value produced during computation.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Rank-deficient input where a full-rank shape is required.
struct DegeneracyError : std::runtime_error {
    explicit DegeneracyError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file content; message carries line/record position.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally valid file violating a schema constraint.
struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failure (open/write).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace nrsfm
