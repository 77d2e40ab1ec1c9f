#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gasforge {

// Error taxonomy. Transport errors are the only retryable kind; everything
// else reports a defect in the input or the request itself.

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotFoundError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DecodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised by fetch_range when a block could not be acquired after retries.
struct PartialRangeError : std::runtime_error {
    std::uint64_t first_missing_block;

    PartialRangeError(std::uint64_t block, const std::string& what)
        : std::runtime_error(what), first_missing_block(block) {}
};

}  // namespace gasforge
