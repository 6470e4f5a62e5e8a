#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace editground {

enum class ErrorKind : std::uint8_t {
    io,
    format,
    truncation,
    unsupported_dtype,
    validation,
    numeric,
    config,
    single_class,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the categories above so
/// callers (and the evaluation harness) can tell corrupt input from bad config.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace editground
