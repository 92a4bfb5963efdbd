#pragma once

#include <stdexcept>
#include <string>

namespace voxatn {

// Bad input: malformed files, invalid config, degenerate data. CLI exit code 1.
struct UserError : std::runtime_error {
    explicit UserError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken internal invariant (shape mismatch inside the graph, NaN loss). CLI exit code 2.
struct InternalError : std::logic_error {
    explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace voxatn
