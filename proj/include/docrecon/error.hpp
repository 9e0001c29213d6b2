#pragma once

#include <stdexcept>
#include <string>

namespace docrecon {

enum class ErrorKind {
    invalid_argument,
    duplicate_node,
    degenerate_graph,
    shape_mismatch,
    io,
    malformed,
    unsupported_version,
    invariant_violation,
    not_found,
    conflict,
    unavailable,
};

const char* to_string(ErrorKind kind) noexcept;

// Every module reports failures through this one exception type; callers that
// need to branch (the HTTP layer, the CLI exit codes) switch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace docrecon
