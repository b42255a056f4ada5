#pragma once

#include <stdexcept>
#include <string>

namespace triadstego {

// Bad shapes, invalid settings, malformed config files.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable or malformed data files (images, messages, checkpoints).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Message does not fit the carrier image.
class CapacityError : public std::runtime_error {
public:
    explicit CapacityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or gradient during training.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training did not reach its contract (e.g. no improvement past the abort
// horizon).
class TrainingError : public std::runtime_error {
public:
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace triadstego
