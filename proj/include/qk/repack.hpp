#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qk/blockquant.hpp"
#include "qk/dtype.hpp"

namespace qk {

/// Flip bit 3 of both nibbles. Self-inverse; applied once, offline, at repack.
constexpr std::uint8_t toggle_msb(std::uint8_t b) noexcept {
    return static_cast<std::uint8_t>(b ^ 0x88u);
}
void toggle_msb(std::span<std::uint8_t> bytes) noexcept;

struct DecodedNibbles {
    std::int8_t lo;
    std::int8_t hi;
};

/// Decode one MSB-toggled byte to 16x the signed nibble values:
/// lo = int8(b << 4), hi = int8(b & 0xF0).
constexpr DecodedNibbles fast_decode_byte(std::uint8_t b) noexcept {
    return {static_cast<std::int8_t>(static_cast<std::uint8_t>(b << 4)),
            static_cast<std::int8_t>(static_cast<std::uint8_t>(b & 0xf0u))};
}

/// Subtract-8 decode of an untoggled byte (the baseline path).
constexpr DecodedNibbles reference_decode_byte(std::uint8_t b) noexcept {
    return {static_cast<std::int8_t>((b & 0x0f) - 8), static_cast<std::int8_t>((b >> 4) - 8)};
}

/// Repacked Q4_0 weight matrix. Strips of `variant.channels` output channels;
/// within a strip, one tile per group: the N FP16 scales, then N*16 MSB-toggled
/// nibble bytes round-robin over channels in `variant.chunk`-byte pieces.
/// Channel counts not divisible by N are padded with d = 0 channels.
struct InterleavedWeights {
    Variant variant;
    std::size_t channels = 0;  // logical output channels
    std::size_t k = 0;         // input channels

    std::vector<std::uint8_t> bytes;

    std::size_t groups() const noexcept { return k / kQ4GroupSize; }
    std::size_t strips() const noexcept {
        const auto n = static_cast<std::size_t>(variant.channels);
        return (channels + n - 1) / n;
    }
    std::size_t padded_channels() const noexcept {
        return strips() * static_cast<std::size_t>(variant.channels);
    }
    std::size_t strip_bytes() const noexcept { return groups() * variant.tile_bytes(); }

    const std::uint8_t* tile(std::size_t strip, std::size_t group) const noexcept {
        return bytes.data() + strip * strip_bytes() + group * variant.tile_bytes();
    }
};

/// Byte count of a repacked matrix, including pad channels.
std::size_t interleaved_weight_bytes(Variant v, std::size_t channels, std::size_t k) noexcept;

/// `blocks` is row-major: n_channels rows of equal group count.
InterleavedWeights repack_weights(std::span<const BlockQ4_0> blocks, std::size_t n_channels,
                                  Variant variant);

/// Wraps a stored payload; validates its length.
InterleavedWeights interleaved_from_bytes(std::vector<std::uint8_t> bytes, Variant variant,
                                          std::size_t channels, std::size_t k);

/// Inverse of repack_weights on the unpadded channels.
std::vector<BlockQ4_0> unpack_weights(const InterleavedWeights& w);

/// Q8_0 rows interleaved for micro-tiles of `rows_per_tile` rows. Per
/// (row tile, group): MR FP16 scales, then the MR 32-byte blocks round-robin
/// in `chunk`-byte pieces. Short tiles are padded with d = 0 zero rows.
struct InterleavedActivations {
    int rows_per_tile = 2;
    int chunk = 8;
    std::size_t rows = 0;  // logical rows
    std::size_t k = 0;

    std::vector<std::uint8_t> bytes;

    std::size_t groups() const noexcept { return k / kQ4GroupSize; }
    std::size_t row_tiles() const noexcept {
        const auto mr = static_cast<std::size_t>(rows_per_tile);
        return (rows + mr - 1) / mr;
    }
    std::size_t tile_bytes() const noexcept {
        return static_cast<std::size_t>(rows_per_tile) * (2 + 32);
    }
    const std::uint8_t* tile(std::size_t row_tile, std::size_t group) const noexcept {
        return bytes.data() + (row_tile * groups() + group) * tile_bytes();
    }
};

/// `blocks` is row-major: `rows` rows of equal group count.
InterleavedActivations repack_activations(std::span<const BlockQ8_0> blocks, std::size_t rows,
                                          int rows_per_tile, int chunk);
std::vector<BlockQ8_0> unpack_activations(const InterleavedActivations& a);

}  // namespace qk
