#pragma once

#include <stdexcept>
#include <string>

namespace sandlab {

/// Bad parameters or malformed input. Maps to CLI exit code 2.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A requested computation exceeds the configured size/memory budget. Exit code 3.
struct ResourceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A deterministic identity that must hold on every sample was violated. Exit code 4.
struct InvariantViolation : std::logic_error {
    using std::logic_error::logic_error;
};

/// Unreadable, corrupt, or mismatched checkpoint. Exit code 5.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

inline void ensure(bool ok, const std::string& what) {
    if (!ok) throw InvariantViolation(what);
}

}  // namespace sandlab
