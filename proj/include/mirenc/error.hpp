#ifndef MIRENC_ERROR_HPP
#define MIRENC_ERROR_HPP

#include <stdexcept>
#include <string>

namespace mirenc {

enum class ErrorKind {
    io,                 // file missing, unreadable or unwritable
    unsupported_format, // parseable container, codec we do not handle
    empty_input,        // zero-length audio, empty matrices
    invalid_argument,   // precondition violated by the caller
    insufficient_data,  // not enough samples/classes/distinct vectors
    rank_deficient,     // PCA asked for more directions than the data has
    numerical,          // NaN/Inf, PSD violation, solver breakdown
    version_mismatch,   // artifact header or lineage does not match
    config,             // malformed or out-of-range configuration
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what)
{
    throw Error(kind, what);
}

inline void require(bool cond, const std::string& what,
                    ErrorKind kind = ErrorKind::invalid_argument)
{
    if (!cond) throw Error(kind, what);
}

} // namespace mirenc

#endif
