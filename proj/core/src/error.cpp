#include "s2s/error.hpp"

namespace s2s {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::shape: return "shape error";
    case ErrorKind::argument: return "argument error";
    case ErrorKind::degenerate_batch: return "degenerate batch";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::format: return "format error";
    case ErrorKind::corruption: return "corruption error";
    case ErrorKind::unsupported_version: return "unsupported version";
    case ErrorKind::config: return "configuration error";
    case ErrorKind::validation: return "validation error";
    }
    return "error";
}

} // namespace s2s
