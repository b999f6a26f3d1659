#pragma once

// 128-bit integer/float vector abstraction used by the optimized kernels.
//
// Two backends with the same interface:
//   qk::simd::scalar  portable reference, always compiled
//   qk::simd::native  SSSE3/SSE4.1(+F16C) or NEON when available, else scalar
//
// Integer ops are exact, so both backends agree bit-for-bit. The activation
// operand (second for dot4, first for mmla) must avoid -128; Q8_0 activations
// are confined to [-127, 127].

#include <array>
#include <cstdint>
#include <cstring>

#include "qk/fp16.hpp"

#if defined(__SSSE3__) && defined(__SSE4_1__)
#include <immintrin.h>
#define QK_SIMD_SSE 1
#elif defined(__ARM_NEON)
#include <arm_neon.h>
#define QK_SIMD_NEON 1
#endif

namespace qk::simd {

namespace scalar {

struct I8x16 {
    std::array<std::int8_t, 16> v;
};
struct I32x4 {
    std::array<std::int32_t, 4> v;
};
struct F32x4 {
    std::array<float, 4> v;
};

inline I8x16 load(const void* p) noexcept {
    I8x16 r;
    std::memcpy(r.v.data(), p, 16);
    return r;
}

/// Broadcast 4 bytes to every 32-bit lane.
inline I8x16 dup32(const void* p) noexcept {
    I8x16 r;
    for (int l = 0; l < 4; ++l) std::memcpy(r.v.data() + 4 * l, p, 4);
    return r;
}

/// Broadcast 8 bytes to both 64-bit halves.
inline I8x16 dup64(const void* p) noexcept {
    I8x16 r;
    std::memcpy(r.v.data(), p, 8);
    std::memcpy(r.v.data() + 8, p, 8);
    return r;
}

/// Per-byte shift left by 4: low nibble into the top half, zero filled.
inline I8x16 shl4(I8x16 a) noexcept {
    for (auto& x : a.v) x = static_cast<std::int8_t>(static_cast<std::uint8_t>(x) << 4);
    return a;
}

/// Per-byte AND 0xF0.
inline I8x16 mask_hi(I8x16 a) noexcept {
    for (auto& x : a.v) x = static_cast<std::int8_t>(static_cast<std::uint8_t>(x) & 0xf0);
    return a;
}

inline I8x16 low_nibbles(I8x16 a) noexcept {
    for (auto& x : a.v) x = static_cast<std::int8_t>(static_cast<std::uint8_t>(x) & 0x0f);
    return a;
}

inline I8x16 high_nibbles(I8x16 a) noexcept {
    for (auto& x : a.v) x = static_cast<std::int8_t>(static_cast<std::uint8_t>(x) >> 4);
    return a;
}

inline I8x16 sub(I8x16 a, std::int8_t s) noexcept {
    for (auto& x : a.v) x = static_cast<std::int8_t>(x - s);
    return a;
}

/// Per-byte OR with a splatted value.
inline I8x16 or_splat(I8x16 a, std::uint8_t s) noexcept {
    for (auto& x : a.v) x = static_cast<std::int8_t>(static_cast<std::uint8_t>(x) | s);
    return a;
}

/// Table lookup: r[i] = table[idx[i]], idx in [0, 16).
inline I8x16 lookup16(I8x16 table, I8x16 idx) noexcept {
    I8x16 r;
    for (int i = 0; i < 16; ++i) r.v[i] = table.v[static_cast<std::uint8_t>(idx.v[i]) & 0x0f];
    return r;
}

inline I32x4 zero_i32() noexcept { return {{0, 0, 0, 0}}; }
inline I32x4 load_i32(const void* p) noexcept {
    I32x4 r;
    std::memcpy(r.v.data(), p, 16);
    return r;
}

inline I32x4 add(I32x4 a, I32x4 b) noexcept {
    for (int l = 0; l < 4; ++l) a.v[l] += b.v[l];
    return a;
}

/// acc[l] += sum_{j<4} a[4l+j] * b[4l+j]
inline I32x4 dot4(I32x4 acc, I8x16 a, I8x16 b) noexcept {
    for (int l = 0; l < 4; ++l) {
        std::int32_t s = 0;
        for (int j = 0; j < 4; ++j) s += std::int32_t{a.v[4 * l + j]} * std::int32_t{b.v[4 * l + j]};
        acc.v[l] += s;
    }
    return acc;
}

/// 2x8 (rows of `a`) times 8x2 (rows of `b` as columns) into a row-major
/// 2x2 int32 block: acc = [a0.b0, a0.b1, a1.b0, a1.b1].
inline I32x4 mmla(I32x4 acc, I8x16 a, I8x16 b) noexcept {
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            std::int32_t s = 0;
            for (int t = 0; t < 8; ++t) s += std::int32_t{a.v[8 * i + t]} * std::int32_t{b.v[8 * j + t]};
            acc.v[2 * i + j] += s;
        }
    }
    return acc;
}

/// Cross-lane horizontal sum.
inline std::int32_t hsum(I32x4 a) noexcept { return (a.v[0] + a.v[1]) + (a.v[2] + a.v[3]); }

/// Horizontal sums of four vectors gathered into one: [hsum(a), .., hsum(d)].
inline I32x4 hsum4(I32x4 a, I32x4 b, I32x4 c, I32x4 d) noexcept {
    return {{hsum(a), hsum(b), hsum(c), hsum(d)}};
}

inline F32x4 splat(float x) noexcept { return {{x, x, x, x}}; }
inline F32x4 make(float a, float b, float c, float d) noexcept { return {{a, b, c, d}}; }
inline F32x4 zero_f32() noexcept { return splat(0.0f); }

inline F32x4 to_f32(I32x4 a) noexcept {
    F32x4 r;
    for (int l = 0; l < 4; ++l) r.v[l] = static_cast<float>(a.v[l]);
    return r;
}

inline F32x4 mul(F32x4 a, F32x4 b) noexcept {
    for (int l = 0; l < 4; ++l) a.v[l] *= b.v[l];
    return a;
}

inline F32x4 add(F32x4 a, F32x4 b) noexcept {
    for (int l = 0; l < 4; ++l) a.v[l] += b.v[l];
    return a;
}

/// acc + a*b with separate rounding of the product (no fused multiply-add).
inline F32x4 mul_add(F32x4 acc, F32x4 a, F32x4 b) noexcept { return add(acc, mul(a, b)); }

/// Duplicate lanes: [a0, a0, a1, a1] and [a2, a2, a3, a3].
inline F32x4 dup_lo_pairs(F32x4 a) noexcept { return {{a.v[0], a.v[0], a.v[1], a.v[1]}}; }
inline F32x4 dup_hi_pairs(F32x4 a) noexcept { return {{a.v[2], a.v[2], a.v[3], a.v[3]}}; }
/// [a0, a1, a0, a1]
inline F32x4 dup_lo_half(F32x4 a) noexcept { return {{a.v[0], a.v[1], a.v[0], a.v[1]}}; }
/// [a2, a3, a2, a3]
inline F32x4 dup_hi_half(F32x4 a) noexcept { return {{a.v[2], a.v[3], a.v[2], a.v[3]}}; }

/// Four FP16 values (8 bytes) to FP32 in one vector step.
inline F32x4 load_f16x4(const void* p) noexcept {
    std::uint16_t h[4];
    std::memcpy(h, p, 8);
    return {{fp16_to_fp32(h[0]), fp16_to_fp32(h[1]), fp16_to_fp32(h[2]), fp16_to_fp32(h[3])}};
}

inline void store(float* p, F32x4 a) noexcept { std::memcpy(p, a.v.data(), 16); }
inline void store(void* p, I8x16 a) noexcept { std::memcpy(p, a.v.data(), 16); }
inline void store(std::int32_t* p, I32x4 a) noexcept { std::memcpy(p, a.v.data(), 16); }
inline float lane(F32x4 a, int l) noexcept { return a.v[l]; }
inline std::int32_t lane(I32x4 a, int l) noexcept { return a.v[l]; }

}  // namespace scalar

#if defined(QK_SIMD_SSE)

namespace native {

inline constexpr const char* kBackend = "sse4.1";

struct I8x16 {
    __m128i v;
};
struct I32x4 {
    __m128i v;
};
struct F32x4 {
    __m128 v;
};

inline I8x16 load(const void* p) noexcept { return {_mm_loadu_si128(static_cast<const __m128i*>(p))}; }

inline I8x16 dup32(const void* p) noexcept {
    std::int32_t x;
    std::memcpy(&x, p, 4);
    return {_mm_set1_epi32(x)};
}

inline I8x16 dup64(const void* p) noexcept {
    std::int64_t x;
    std::memcpy(&x, p, 8);
    return {_mm_set1_epi64x(x)};
}

inline I8x16 shl4(I8x16 a) noexcept {
    return {_mm_and_si128(_mm_slli_epi16(a.v, 4), _mm_set1_epi8(static_cast<char>(0xf0)))};
}

inline I8x16 mask_hi(I8x16 a) noexcept {
    return {_mm_and_si128(a.v, _mm_set1_epi8(static_cast<char>(0xf0)))};
}

inline I8x16 low_nibbles(I8x16 a) noexcept { return {_mm_and_si128(a.v, _mm_set1_epi8(0x0f))}; }

inline I8x16 high_nibbles(I8x16 a) noexcept {
    return {_mm_and_si128(_mm_srli_epi16(a.v, 4), _mm_set1_epi8(0x0f))};
}

inline I8x16 sub(I8x16 a, std::int8_t s) noexcept { return {_mm_sub_epi8(a.v, _mm_set1_epi8(s))}; }

inline I8x16 or_splat(I8x16 a, std::uint8_t s) noexcept {
    return {_mm_or_si128(a.v, _mm_set1_epi8(static_cast<char>(s)))};
}

inline I8x16 lookup16(I8x16 table, I8x16 idx) noexcept {
    return {_mm_shuffle_epi8(table.v, _mm_and_si128(idx.v, _mm_set1_epi8(0x0f)))};
}

inline I32x4 zero_i32() noexcept { return {_mm_setzero_si128()}; }
inline I32x4 load_i32(const void* p) noexcept { return {_mm_loadu_si128(static_cast<const __m128i*>(p))}; }
inline I32x4 add(I32x4 a, I32x4 b) noexcept { return {_mm_add_epi32(a.v, b.v)}; }

namespace detail {
// Signed int8 products summed per 32-bit lane. |a| <= 128 and b != -128 keep
// the 16-bit pair sums of maddubs from saturating.
inline __m128i dot4_raw(__m128i a, __m128i b) noexcept {
    const __m128i pairs = _mm_maddubs_epi16(_mm_abs_epi8(a), _mm_sign_epi8(b, a));
    return _mm_madd_epi16(pairs, _mm_set1_epi16(1));
}
}  // namespace detail

inline I32x4 dot4(I32x4 acc, I8x16 a, I8x16 b) noexcept {
    return {_mm_add_epi32(acc.v, detail::dot4_raw(a.v, b.v))};
}

inline I32x4 mmla(I32x4 acc, I8x16 a, I8x16 b) noexcept {
    const __m128i row0 = _mm_unpacklo_epi64(a.v, a.v);
    const __m128i row1 = _mm_unpackhi_epi64(a.v, a.v);
    const __m128i p = detail::dot4_raw(b.v, row0);
    const __m128i q = detail::dot4_raw(b.v, row1);
    return {_mm_add_epi32(acc.v, _mm_hadd_epi32(p, q))};
}

inline std::int32_t hsum(I32x4 a) noexcept {
    const __m128i hi = _mm_shuffle_epi32(a.v, _MM_SHUFFLE(1, 0, 3, 2));
    const __m128i s = _mm_add_epi32(a.v, hi);
    return _mm_cvtsi128_si32(_mm_add_epi32(s, _mm_shuffle_epi32(s, _MM_SHUFFLE(2, 3, 0, 1))));
}

inline I32x4 hsum4(I32x4 a, I32x4 b, I32x4 c, I32x4 d) noexcept {
    return {_mm_hadd_epi32(_mm_hadd_epi32(a.v, b.v), _mm_hadd_epi32(c.v, d.v))};
}

inline F32x4 splat(float x) noexcept { return {_mm_set1_ps(x)}; }
inline F32x4 make(float a, float b, float c, float d) noexcept { return {_mm_setr_ps(a, b, c, d)}; }
inline F32x4 zero_f32() noexcept { return {_mm_setzero_ps()}; }
inline F32x4 to_f32(I32x4 a) noexcept { return {_mm_cvtepi32_ps(a.v)}; }
inline F32x4 mul(F32x4 a, F32x4 b) noexcept { return {_mm_mul_ps(a.v, b.v)}; }
inline F32x4 add(F32x4 a, F32x4 b) noexcept { return {_mm_add_ps(a.v, b.v)}; }
inline F32x4 mul_add(F32x4 acc, F32x4 a, F32x4 b) noexcept { return add(acc, mul(a, b)); }

inline F32x4 dup_lo_pairs(F32x4 a) noexcept { return {_mm_unpacklo_ps(a.v, a.v)}; }
inline F32x4 dup_hi_pairs(F32x4 a) noexcept { return {_mm_unpackhi_ps(a.v, a.v)}; }
inline F32x4 dup_lo_half(F32x4 a) noexcept { return {_mm_movelh_ps(a.v, a.v)}; }
inline F32x4 dup_hi_half(F32x4 a) noexcept { return {_mm_movehl_ps(a.v, a.v)}; }

inline F32x4 load_f16x4(const void* p) noexcept {
#if defined(__F16C__)
    return {_mm_cvtph_ps(_mm_loadl_epi64(static_cast<const __m128i*>(p)))};
#else
    const auto s = scalar::load_f16x4(p);
    return {_mm_loadu_ps(s.v.data())};
#endif
}

inline void store(float* p, F32x4 a) noexcept { _mm_storeu_ps(p, a.v); }
inline void store(void* p, I8x16 a) noexcept { _mm_storeu_si128(static_cast<__m128i*>(p), a.v); }
inline void store(std::int32_t* p, I32x4 a) noexcept { _mm_storeu_si128(reinterpret_cast<__m128i*>(p), a.v); }

inline float lane(F32x4 a, int l) noexcept {
    alignas(16) float t[4];
    _mm_store_ps(t, a.v);
    return t[l];
}
inline std::int32_t lane(I32x4 a, int l) noexcept {
    alignas(16) std::int32_t t[4];
    _mm_store_si128(reinterpret_cast<__m128i*>(t), a.v);
    return t[l];
}

}  // namespace native

#elif defined(QK_SIMD_NEON)

namespace native {

inline constexpr const char* kBackend = "neon";

struct I8x16 {
    int8x16_t v;
};
struct I32x4 {
    int32x4_t v;
};
struct F32x4 {
    float32x4_t v;
};

inline I8x16 load(const void* p) noexcept { return {vld1q_s8(static_cast<const std::int8_t*>(p))}; }

inline I8x16 dup32(const void* p) noexcept {
    std::int32_t x;
    std::memcpy(&x, p, 4);
    return {vreinterpretq_s8_s32(vdupq_n_s32(x))};
}

inline I8x16 dup64(const void* p) noexcept {
    std::int64_t x;
    std::memcpy(&x, p, 8);
    return {vreinterpretq_s8_s64(vdupq_n_s64(x))};
}

inline I8x16 shl4(I8x16 a) noexcept { return {vshlq_n_s8(a.v, 4)}; }
inline I8x16 mask_hi(I8x16 a) noexcept {
    return {vreinterpretq_s8_u8(vandq_u8(vreinterpretq_u8_s8(a.v), vdupq_n_u8(0xf0)))};
}
inline I8x16 low_nibbles(I8x16 a) noexcept {
    return {vreinterpretq_s8_u8(vandq_u8(vreinterpretq_u8_s8(a.v), vdupq_n_u8(0x0f)))};
}
inline I8x16 high_nibbles(I8x16 a) noexcept {
    return {vreinterpretq_s8_u8(vshrq_n_u8(vreinterpretq_u8_s8(a.v), 4))};
}
inline I8x16 sub(I8x16 a, std::int8_t s) noexcept { return {vsubq_s8(a.v, vdupq_n_s8(s))}; }
inline I8x16 or_splat(I8x16 a, std::uint8_t s) noexcept {
    return {vreinterpretq_s8_u8(vorrq_u8(vreinterpretq_u8_s8(a.v), vdupq_n_u8(s)))};
}
inline I8x16 lookup16(I8x16 table, I8x16 idx) noexcept {
    return {vqtbl1q_s8(table.v, vandq_u8(vreinterpretq_u8_s8(idx.v), vdupq_n_u8(0x0f)))};
}

inline I32x4 zero_i32() noexcept { return {vdupq_n_s32(0)}; }
inline I32x4 load_i32(const void* p) noexcept { return {vld1q_s32(static_cast<const std::int32_t*>(p))}; }
inline I32x4 add(I32x4 a, I32x4 b) noexcept { return {vaddq_s32(a.v, b.v)}; }

inline I32x4 dot4(I32x4 acc, I8x16 a, I8x16 b) noexcept {
#if defined(__ARM_FEATURE_DOTPROD)
    return {vdotq_s32(acc.v, a.v, b.v)};
#else
    const int16x8_t lo = vmull_s8(vget_low_s8(a.v), vget_low_s8(b.v));
    const int16x8_t hi = vmull_s8(vget_high_s8(a.v), vget_high_s8(b.v));
    const int32x4_t pl = vpaddlq_s16(lo);
    const int32x4_t ph = vpaddlq_s16(hi);
    return {vaddq_s32(acc.v, vpaddq_s32(pl, ph))};
#endif
}

inline I32x4 mmla(I32x4 acc, I8x16 a, I8x16 b) noexcept {
#if defined(__ARM_FEATURE_MATMUL_INT8)
    return {vmmlaq_s32(acc.v, a.v, b.v)};
#else
    const int8x16_t row0 = vcombine_s8(vget_low_s8(a.v), vget_low_s8(a.v));
    const int8x16_t row1 = vcombine_s8(vget_high_s8(a.v), vget_high_s8(a.v));
    const I32x4 p = dot4(zero_i32(), I8x16{b.v}, I8x16{row0});
    const I32x4 q = dot4(zero_i32(), I8x16{b.v}, I8x16{row1});
    return {vaddq_s32(acc.v, vpaddq_s32(p.v, q.v))};
#endif
}

inline std::int32_t hsum(I32x4 a) noexcept { return vaddvq_s32(a.v); }

inline I32x4 hsum4(I32x4 a, I32x4 b, I32x4 c, I32x4 d) noexcept {
    return {vpaddq_s32(vpaddq_s32(a.v, b.v), vpaddq_s32(c.v, d.v))};
}

inline F32x4 splat(float x) noexcept { return {vdupq_n_f32(x)}; }
inline F32x4 make(float a, float b, float c, float d) noexcept {
    const float t[4] = {a, b, c, d};
    return {vld1q_f32(t)};
}
inline F32x4 zero_f32() noexcept { return splat(0.0f); }
inline F32x4 to_f32(I32x4 a) noexcept { return {vcvtq_f32_s32(a.v)}; }
inline F32x4 mul(F32x4 a, F32x4 b) noexcept { return {vmulq_f32(a.v, b.v)}; }
inline F32x4 add(F32x4 a, F32x4 b) noexcept { return {vaddq_f32(a.v, b.v)}; }
inline F32x4 mul_add(F32x4 acc, F32x4 a, F32x4 b) noexcept { return add(acc, mul(a, b)); }

inline F32x4 dup_lo_pairs(F32x4 a) noexcept { return {vzip1q_f32(a.v, a.v)}; }
inline F32x4 dup_hi_pairs(F32x4 a) noexcept { return {vzip2q_f32(a.v, a.v)}; }
inline F32x4 dup_lo_half(F32x4 a) noexcept { return {vcombine_f32(vget_low_f32(a.v), vget_low_f32(a.v))}; }
inline F32x4 dup_hi_half(F32x4 a) noexcept {
    return {vcombine_f32(vget_high_f32(a.v), vget_high_f32(a.v))};
}

inline F32x4 load_f16x4(const void* p) noexcept {
    return {vcvt_f32_f16(vreinterpret_f16_u16(vld1_u16(static_cast<const std::uint16_t*>(p))))};
}

inline void store(float* p, F32x4 a) noexcept { vst1q_f32(p, a.v); }
inline void store(void* p, I8x16 a) noexcept { vst1q_s8(static_cast<std::int8_t*>(p), a.v); }
inline void store(std::int32_t* p, I32x4 a) noexcept { vst1q_s32(p, a.v); }
inline float lane(F32x4 a, int l) noexcept {
    float t[4];
    vst1q_f32(t, a.v);
    return t[l];
}
inline std::int32_t lane(I32x4 a, int l) noexcept {
    std::int32_t t[4];
    vst1q_s32(t, a.v);
    return t[l];
}

}  // namespace native

#else

namespace native {
using namespace scalar;
inline constexpr const char* kBackend = "scalar";
}  // namespace native

#endif

}  // namespace qk::simd
