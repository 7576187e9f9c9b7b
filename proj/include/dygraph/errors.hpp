#pragma once

#include <stdexcept>
#include <string>

namespace dygraph {

/// Bad argument to a library call (shape mismatch, out-of-range parameter).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or unreadable input file.
class LoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent model or training configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when training diverges (non-finite loss).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace dygraph
