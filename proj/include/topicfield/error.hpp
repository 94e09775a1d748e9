#pragma once

#include <stdexcept>
#include <string>

namespace topicfield {

enum class ErrorKind {
    not_found,
    invalid_argument,
    parse,
    validation,
    state,
    non_finite,
    conflict,
    io,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library. The kind decides how callers
/// (HTTP status, CLI exit code) react; the message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace topicfield
