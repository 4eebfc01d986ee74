#pragma once

#include <stdexcept>
#include <string>

namespace fedprune {

/// Invalid configuration: bad architecture, out-of-range hyperparameter, malformed config file.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid runtime input: shape mismatch, label out of range, empty dataset, bad CSV cell.
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure: non-finite gradient or loss, diverging client.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Broken internal invariant. Reaching this is a bug, not a user error.
struct InternalError : std::logic_error {
    explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace fedprune
