#pragma once

#include <bit>
#include <cstdint>

namespace qk {

/// IEEE binary16 -> binary32. Exact for every input, NaN payloads preserved.
constexpr float fp16_to_fp32(std::uint16_t h) noexcept {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    const std::uint32_t exp = (h >> 10) & 0x1fu;
    std::uint32_t mant = h & 0x3ffu;

    std::uint32_t bits = 0;
    if (exp == 0x1f) {
        bits = sign | 0x7f800000u | (mant << 13);
    } else if (exp != 0) {
        bits = sign | ((exp + 112u) << 23) | (mant << 13);
    } else if (mant == 0) {
        bits = sign;
    } else {
        // subnormal: renormalise
        std::uint32_t e = 113;
        while ((mant & 0x400u) == 0) {
            mant <<= 1;
            --e;
        }
        bits = sign | (e << 23) | ((mant & 0x3ffu) << 13);
    }
    return std::bit_cast<float>(bits);
}

/// IEEE binary32 -> binary16 with round-to-nearest-even; overflow goes to inf.
constexpr std::uint16_t fp32_to_fp16(float f) noexcept {
    const std::uint32_t x = std::bit_cast<std::uint32_t>(f);
    const std::uint32_t sign = (x >> 16) & 0x8000u;
    const std::uint32_t mag = x & 0x7fffffffu;

    if (mag >= 0x7f800000u) {
        return static_cast<std::uint16_t>(sign | (mag > 0x7f800000u ? 0x7e00u : 0x7c00u));
    }
    if (mag >= 0x477ff000u) {  // >= 65520 rounds past the largest finite half
        return static_cast<std::uint16_t>(sign | 0x7c00u);
    }
    if (mag >= 0x38800000u) {  // normal half range
        std::uint32_t h = (mag - 0x38000000u) >> 13;
        const std::uint32_t rem = mag & 0x1fffu;
        if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) {
            ++h;
        }
        return static_cast<std::uint16_t>(sign | h);
    }
    if (mag <= 0x33000000u) {  // <= 2^-25 ties to zero
        return static_cast<std::uint16_t>(sign);
    }
    const std::uint32_t e = mag >> 23;
    const std::uint32_t mant = (mag & 0x7fffffu) | 0x800000u;
    const std::uint32_t shift = 126u - e;
    std::uint32_t h = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1u);
    const std::uint32_t half = 1u << (shift - 1u);
    if (rem > half || (rem == half && (h & 1u))) {
        ++h;
    }
    return static_cast<std::uint16_t>(sign | h);
}

/// Round a float through binary16 and back.
constexpr float round_to_fp16(float f) noexcept { return fp16_to_fp32(fp32_to_fp16(f)); }

/// Table-driven conversion for hot scalar loops.
float fp16_to_fp32_lut(std::uint16_t h) noexcept;

}  // namespace qk
