#include "qk/common.hpp"

#include <array>
#include <optional>

#include "qk/dtype.hpp"
#include "qk/fp16.hpp"

namespace qk {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid argument";
        case ErrorCode::bad_length: return "bad length";
        case ErrorCode::non_finite: return "non-finite value";
        case ErrorCode::shape_mismatch: return "shape mismatch";
        case ErrorCode::bad_magic: return "bad magic";
        case ErrorCode::bad_version: return "unsupported version";
        case ErrorCode::unknown_dtype: return "unknown dtype";
        case ErrorCode::truncated: return "truncated";
        case ErrorCode::misaligned: return "misaligned offset";
        case ErrorCode::size_mismatch: return "size mismatch";
        case ErrorCode::duplicate_name: return "duplicate name";
        case ErrorCode::missing_codebooks: return "missing codebooks";
        case ErrorCode::codebook_too_large: return "codebook table too large";
        case ErrorCode::empty_cluster: return "empty cluster";
        case ErrorCode::duplicate_centroid: return "duplicate centroid";
        case ErrorCode::io: return "i/o error";
    }
    return "unknown error";
}

namespace {

std::array<float, 65536> make_fp16_table() {
    std::array<float, 65536> t{};
    for (std::uint32_t h = 0; h < 65536; ++h) t[h] = fp16_to_fp32(static_cast<std::uint16_t>(h));
    return t;
}

}  // namespace

float fp16_to_fp32_lut(std::uint16_t h) noexcept {
    static const std::array<float, 65536> table = make_fp16_table();
    return table[h];
}

std::string_view dtype_name(DType t) noexcept {
    switch (t) {
        case DType::fp32: return "fp32";
        case DType::fp16: return "fp16";
        case DType::q4_0: return "q4_0";
        case DType::q8_0: return "q8_0";
        case DType::q4_0x4b4: return "q4_0x4b4";
        case DType::q4_0x4b8: return "q4_0x4b8";
        case DType::q4_0x8b8: return "q4_0x8b8";
        case DType::gcq2: return "gcq2";
    }
    return "?";
}

std::optional<DType> parse_dtype(std::string_view name) noexcept {
    for (std::uint32_t i = 0; i < kDTypeCount; ++i) {
        const auto t = static_cast<DType>(i);
        if (dtype_name(t) == name) return t;
    }
    return std::nullopt;
}

std::string_view variant_name(Variant v) noexcept {
    if (v == Variant::x4b4()) return "4x4";
    if (v == Variant::x4b8()) return "4x8";
    if (v == Variant::x8b8()) return "8x8";
    return "?";
}

std::optional<Variant> parse_variant(std::string_view name) noexcept {
    if (name == "4x4") return Variant::x4b4();
    if (name == "4x8") return Variant::x4b8();
    if (name == "8x8") return Variant::x8b8();
    return std::nullopt;
}

std::optional<Variant> variant_of(DType t) noexcept {
    switch (t) {
        case DType::q4_0x4b4: return Variant::x4b4();
        case DType::q4_0x4b8: return Variant::x4b8();
        case DType::q4_0x8b8: return Variant::x8b8();
        default: return std::nullopt;
    }
}

}  // namespace qk
