#pragma once

#include <stdexcept>
#include <string>

namespace ps {

// Error taxonomy mirrored 1:1 by the C API status codes.
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Requested target cannot be reached (e.g. gamma adjustment of a degenerate mask).
struct InfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// External reconstructor subprocess misbehaved (bad exit, timeout, malformed output).
struct AdapterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A pipeline stage needed an artifact that an earlier stage never produced.
struct DependencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace ps
