#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace qk {

// Stored as u32 in the container; values are part of the file format.
enum class DType : std::uint32_t {
    fp32 = 0,
    fp16 = 1,
    q4_0 = 2,
    q8_0 = 3,
    q4_0x4b4 = 4,
    q4_0x4b8 = 5,
    q4_0x8b8 = 6,
    gcq2 = 7,
};

inline constexpr std::uint32_t kDTypeCount = 8;

std::string_view dtype_name(DType t) noexcept;
std::optional<DType> parse_dtype(std::string_view name) noexcept;

constexpr bool is_quantized(DType t) noexcept { return t != DType::fp32 && t != DType::fp16; }

constexpr bool is_interleaved(DType t) noexcept {
    return t == DType::q4_0x4b4 || t == DType::q4_0x4b8 || t == DType::q4_0x8b8;
}

/// Elements per quantization group along K (1 for float types).
constexpr std::size_t dtype_group_size(DType t) noexcept {
    switch (t) {
        case DType::fp32:
        case DType::fp16: return 1;
        case DType::gcq2: return 256;
        default: return 32;
    }
}

/// Channel-interleave layout of a repacked Q4_0 weight matrix: `channels`
/// output channels stored round-robin in `chunk`-byte pieces.
struct Variant {
    int channels = 8;
    int chunk = 8;

    static constexpr Variant x4b4() noexcept { return {4, 4}; }
    static constexpr Variant x4b8() noexcept { return {4, 8}; }
    static constexpr Variant x8b8() noexcept { return {8, 8}; }

    constexpr DType dtype() const noexcept {
        if (channels == 4) return chunk == 4 ? DType::q4_0x4b4 : DType::q4_0x4b8;
        return DType::q4_0x8b8;
    }

    constexpr bool valid() const noexcept {
        return (channels == 4 && (chunk == 4 || chunk == 8)) || (channels == 8 && chunk == 8);
    }

    /// Bytes for one (strip, group) tile: N FP16 scales then N×16 nibble bytes.
    constexpr std::size_t tile_bytes() const noexcept {
        return static_cast<std::size_t>(channels) * (2 + 16);
    }

    friend constexpr bool operator==(Variant, Variant) = default;
};

std::string_view variant_name(Variant v) noexcept;  // "4x4", "4x8", "8x8"
std::optional<Variant> parse_variant(std::string_view name) noexcept;
std::optional<Variant> variant_of(DType t) noexcept;

}  // namespace qk
