#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qk/dtype.hpp"

namespace qk {

inline constexpr std::size_t kQ4GroupSize = 32;

/// 32 weights as bias-8 nibbles. Byte j holds w_j in the low nibble and
/// w_{j+16} in the high nibble; value = fp16(d) * (nibble - 8).
struct BlockQ4_0 {
    std::uint16_t d = 0;
    std::array<std::uint8_t, 16> qs{};

    friend bool operator==(const BlockQ4_0&, const BlockQ4_0&) = default;
};

/// 32 activations as int8 in [-127, 127]; value = fp16(d) * q.
struct BlockQ8_0 {
    std::uint16_t d = 0;
    std::array<std::int8_t, 32> qs{};

    friend bool operator==(const BlockQ8_0&, const BlockQ8_0&) = default;
};

static_assert(sizeof(BlockQ4_0) == 18, "Q4_0 block must be 18 bytes");
static_assert(sizeof(BlockQ8_0) == 34, "Q8_0 block must be 34 bytes");

/// Logical nibble i of a block in [0, 15].
constexpr std::uint8_t q4_nibble(const BlockQ4_0& b, std::size_t i) noexcept {
    return i < 16 ? static_cast<std::uint8_t>(b.qs[i] & 0x0f)
                  : static_cast<std::uint8_t>(b.qs[i - 16] >> 4);
}

/// Pack 32 logical nibbles into the w0,w16,w1,w17,... byte order.
std::array<std::uint8_t, 16> interleave_nibbles(std::span<const std::uint8_t, 32> nibbles) noexcept;
std::array<std::uint8_t, 32> deinterleave_nibbles(std::span<const std::uint8_t, 16> qs) noexcept;

std::vector<BlockQ4_0> quantize_q4_0(std::span<const float> row);
std::vector<float> dequantize_q4_0(std::span<const BlockQ4_0> blocks);

std::vector<BlockQ8_0> quantize_q8_0(std::span<const float> row);
std::vector<float> dequantize_q8_0(std::span<const BlockQ8_0> blocks);

/// Single-block encoders; `out` receives one block for 32 input values.
BlockQ4_0 quantize_block_q4_0(std::span<const float, 32> x);
BlockQ8_0 quantize_block_q8_0(std::span<const float, 32> x);

struct Rational {
    std::uint64_t num = 0;
    std::uint64_t den = 1;

    constexpr double value() const noexcept {
        return static_cast<double>(num) / static_cast<double>(den);
    }
    friend constexpr bool operator==(Rational, Rational) = default;
};

/// Storage cost per weight in bits, reduced to lowest terms.
Rational block_bits_per_weight(DType t);

// Raw byte views of block arrays; layouts match the container payloads.
std::vector<std::uint8_t> to_bytes(std::span<const BlockQ4_0> blocks);
std::vector<std::uint8_t> to_bytes(std::span<const BlockQ8_0> blocks);
std::vector<BlockQ4_0> q4_0_from_bytes(std::span<const std::uint8_t> bytes);
std::vector<BlockQ8_0> q8_0_from_bytes(std::span<const std::uint8_t> bytes);

}  // namespace qk
