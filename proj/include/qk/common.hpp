#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

// Packed payloads are memcpy'd in and out of host structs.
static_assert(std::endian::native == std::endian::little,
              "qkernels assumes a little-endian host");

namespace qk {

enum class ErrorCode {
    invalid_argument,
    bad_length,
    non_finite,
    shape_mismatch,
    bad_magic,
    bad_version,
    unknown_dtype,
    truncated,
    misaligned,
    size_mismatch,
    duplicate_name,
    missing_codebooks,
    codebook_too_large,
    empty_cluster,
    duplicate_centroid,
    io,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

}  // namespace qk
