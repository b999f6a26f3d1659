#include "qk/blockquant.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include "qk/common.hpp"
#include "qk/fp16.hpp"

namespace qk {

namespace {

void check_row(std::span<const float> row) {
    if (row.size() % kQ4GroupSize != 0) {
        fail(ErrorCode::bad_length,
             "row length " + std::to_string(row.size()) + " is not a multiple of 32");
    }
}

// Stores a scale as FP16; returns the FP32 value the decoder will see.
float store_scale(float d, std::uint16_t& out) {
    out = fp32_to_fp16(d);
    const float d16 = fp16_to_fp32(out);
    if (std::isinf(d16)) fail(ErrorCode::invalid_argument, "block scale exceeds the FP16 range");
    if (d16 == 0.0f) out = 0;  // scale underflow: the block decodes to zeros
    return fp16_to_fp32(out);
}

}  // namespace

std::array<std::uint8_t, 16> interleave_nibbles(std::span<const std::uint8_t, 32> nibbles) noexcept {
    std::array<std::uint8_t, 16> qs{};
    for (std::size_t j = 0; j < 16; ++j) {
        qs[j] = static_cast<std::uint8_t>((nibbles[j] & 0x0f) | ((nibbles[j + 16] & 0x0f) << 4));
    }
    return qs;
}

std::array<std::uint8_t, 32> deinterleave_nibbles(std::span<const std::uint8_t, 16> qs) noexcept {
    std::array<std::uint8_t, 32> nibbles{};
    for (std::size_t j = 0; j < 16; ++j) {
        nibbles[j] = qs[j] & 0x0f;
        nibbles[j + 16] = static_cast<std::uint8_t>(qs[j] >> 4);
    }
    return nibbles;
}

BlockQ4_0 quantize_block_q4_0(std::span<const float, 32> x) {
    // Anchor the signed max-magnitude element at -8 so it is exact.
    float amax = 0.0f;
    float m = 0.0f;
    for (float v : x) {
        if (!std::isfinite(v)) fail(ErrorCode::non_finite, "non-finite weight in Q4_0 input");
        if (std::fabs(v) > amax) {
            amax = std::fabs(v);
            m = v;
        }
    }

    BlockQ4_0 b;
    const float d = amax == 0.0f ? 0.0f : m / -8.0f;
    const float d16 = store_scale(d, b.d);

    std::array<std::uint8_t, 32> nibbles;
    for (std::size_t i = 0; i < 32; ++i) {
        if (d16 == 0.0f) {
            nibbles[i] = 8;
            continue;
        }
        const float q = std::round(x[i] / d16) + 8.0f;
        nibbles[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0f, 15.0f));
    }
    b.qs = interleave_nibbles(nibbles);
    return b;
}

BlockQ8_0 quantize_block_q8_0(std::span<const float, 32> x) {
    float amax = 0.0f;
    for (float v : x) {
        if (!std::isfinite(v)) fail(ErrorCode::non_finite, "non-finite activation in Q8_0 input");
        amax = std::max(amax, std::fabs(v));
    }

    BlockQ8_0 b;
    const float d16 = store_scale(amax / 127.0f, b.d);
    for (std::size_t i = 0; i < 32; ++i) {
        if (d16 == 0.0f) {
            b.qs[i] = 0;
            continue;
        }
        const float q = std::clamp(std::round(x[i] / d16), -127.0f, 127.0f);
        b.qs[i] = static_cast<std::int8_t>(q);
    }
    return b;
}

std::vector<BlockQ4_0> quantize_q4_0(std::span<const float> row) {
    check_row(row);
    std::vector<BlockQ4_0> out(row.size() / kQ4GroupSize);
    for (std::size_t b = 0; b < out.size(); ++b) {
        out[b] = quantize_block_q4_0(row.subspan(b * kQ4GroupSize).first<32>());
    }
    return out;
}

std::vector<BlockQ8_0> quantize_q8_0(std::span<const float> row) {
    check_row(row);
    std::vector<BlockQ8_0> out(row.size() / kQ4GroupSize);
    for (std::size_t b = 0; b < out.size(); ++b) {
        out[b] = quantize_block_q8_0(row.subspan(b * kQ4GroupSize).first<32>());
    }
    return out;
}

std::vector<float> dequantize_q4_0(std::span<const BlockQ4_0> blocks) {
    std::vector<float> out(blocks.size() * kQ4GroupSize);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const float d = fp16_to_fp32(blocks[b].d);
        for (std::size_t i = 0; i < 32; ++i) {
            out[b * 32 + i] = d * static_cast<float>(int{q4_nibble(blocks[b], i)} - 8);
        }
    }
    return out;
}

std::vector<float> dequantize_q8_0(std::span<const BlockQ8_0> blocks) {
    std::vector<float> out(blocks.size() * kQ4GroupSize);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const float d = fp16_to_fp32(blocks[b].d);
        for (std::size_t i = 0; i < 32; ++i) out[b * 32 + i] = d * static_cast<float>(blocks[b].qs[i]);
    }
    return out;
}

Rational block_bits_per_weight(DType t) {
    std::uint64_t bits = 0;
    std::uint64_t weights = 1;
    switch (t) {
        case DType::fp32: bits = 32; break;
        case DType::fp16: bits = 16; break;
        case DType::q4_0:
        case DType::q4_0x4b4:
        case DType::q4_0x4b8:
        case DType::q4_0x8b8:
            bits = sizeof(BlockQ4_0) * 8;
            weights = kQ4GroupSize;
            break;
        case DType::q8_0:
            bits = sizeof(BlockQ8_0) * 8;
            weights = kQ4GroupSize;
            break;
        case DType::gcq2:
            bits = 78 * 8;
            weights = 256;
            break;
        default:
            fail(ErrorCode::unknown_dtype,
                 "unknown dtype " + std::to_string(static_cast<std::uint32_t>(t)));
    }
    const std::uint64_t g = std::gcd(bits, weights);
    return {bits / g, weights / g};
}

namespace {

template <class Block>
std::vector<std::uint8_t> blocks_to_bytes(std::span<const Block> blocks) {
    std::vector<std::uint8_t> out(blocks.size() * sizeof(Block));
    if (!blocks.empty()) std::memcpy(out.data(), blocks.data(), out.size());
    return out;
}

template <class Block>
std::vector<Block> blocks_from_bytes(std::span<const std::uint8_t> bytes, const char* what) {
    if (bytes.size() % sizeof(Block) != 0) {
        fail(ErrorCode::bad_length, std::string(what) + " payload of " + std::to_string(bytes.size()) +
                                        " bytes is not a whole number of blocks");
    }
    std::vector<Block> out(bytes.size() / sizeof(Block));
    if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

}  // namespace

std::vector<std::uint8_t> to_bytes(std::span<const BlockQ4_0> blocks) { return blocks_to_bytes(blocks); }
std::vector<std::uint8_t> to_bytes(std::span<const BlockQ8_0> blocks) { return blocks_to_bytes(blocks); }

std::vector<BlockQ4_0> q4_0_from_bytes(std::span<const std::uint8_t> bytes) {
    return blocks_from_bytes<BlockQ4_0>(bytes, "Q4_0");
}

std::vector<BlockQ8_0> q8_0_from_bytes(std::span<const std::uint8_t> bytes) {
    return blocks_from_bytes<BlockQ8_0>(bytes, "Q8_0");
}

}  // namespace qk
