#include "featmerge/error.hpp"

namespace featmerge {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Dimension: return "dimension error";
        case ErrorKind::Structure: return "structural error";
        case ErrorKind::Format: return "format error";
        case ErrorKind::Validation: return "validation error";
        case ErrorKind::Io: return "I/O error";
        case ErrorKind::Unsupported: return "unsupported";
        case ErrorKind::InvalidArgument: return "invalid argument";
        case ErrorKind::Invariant: return "invariant violation";
    }
    return "error";
}

void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, std::string(to_string(kind)) + ": " + what);
}

}  // namespace featmerge
