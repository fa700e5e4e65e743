#pragma once

#include <stdexcept>
#include <string>

namespace sdar {

/// Invalid shapes, dimensions or option combinations.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A non-finite value appeared where a finite one is required.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller violated an operation's precondition (e.g. sampling an empty buffer).
class PreconditionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Environment or wire-protocol misuse (step after termination, malformed reply, ...).
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace sdar
