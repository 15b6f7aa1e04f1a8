#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace s2s {

enum class ErrorKind {
    shape,
    argument,
    degenerate_batch,
    numeric,
    io,
    parse,
    format,
    corruption,
    unsupported_version,
    config,
    validation,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library. `kind()` distinguishes the category
/// so callers (and the CLI exit-code mapping) never have to parse messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace s2s
