#include "mirenc/error.hpp"

namespace mirenc {

const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::unsupported_format: return "unsupported_format";
    case ErrorKind::empty_input: return "empty_input";
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::insufficient_data: return "insufficient_data";
    case ErrorKind::rank_deficient: return "rank_deficient";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::version_mismatch: return "version_mismatch";
    case ErrorKind::config: return "config";
    }
    return "unknown";
}

} // namespace mirenc
