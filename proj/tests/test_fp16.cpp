#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "qk/fp16.hpp"

#if defined(__F16C__)
#include <immintrin.h>
#endif

namespace {

// Decode straight from the bit fields with ldexp.
double oracle_decode(std::uint16_t h) {
    const int sign = h >> 15;
    const int exp = (h >> 10) & 0x1f;
    const int man = h & 0x3ff;
    double v;
    if (exp == 0) {
        v = std::ldexp(static_cast<double>(man), -24);
    } else if (exp == 31) {
        v = man ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
    } else {
        v = std::ldexp(1024.0 + man, exp - 25);
    }
    return sign ? -v : v;
}

// Nearest finite half by search over the sorted positive codes, ties to even.
std::uint16_t oracle_encode(float f) {
    static const std::vector<double> table = [] {
        std::vector<double> t(0x7c00);
        for (std::uint16_t h = 0; h < 0x7c00; ++h) t[h] = oracle_decode(h);
        return t;
    }();
    const std::uint16_t sign = std::signbit(f) ? 0x8000 : 0;
    const double a = std::fabs(static_cast<double>(f));
    if (std::isnan(f)) return 0x7e00;
    if (a >= 65520.0) return sign | 0x7c00;
    const auto it = std::lower_bound(table.begin(), table.end(), a);
    if (it == table.end()) return sign | 0x7bff;
    auto hi = static_cast<std::uint16_t>(it - table.begin());
    if (table[hi] == a || hi == 0) return sign | hi;
    const auto lo = static_cast<std::uint16_t>(hi - 1);
    const double dl = a - table[lo];
    const double dh = table[hi] - a;
    if (dl < dh) return sign | lo;
    if (dh < dl) return sign | hi;
    return sign | ((lo & 1) ? hi : lo);
}

}  // namespace

TEST_CASE("fp16 decode matches the bit-field oracle on every code") {
    for (std::uint32_t h = 0; h < 0x10000; ++h) {
        const auto code = static_cast<std::uint16_t>(h);
        const double want = oracle_decode(code);
        const float got = qk::fp16_to_fp32(code);
        if (std::isnan(want)) {
            REQUIRE(std::isnan(got));
        } else {
            REQUIRE(static_cast<double>(got) == want);
            REQUIRE(std::signbit(got) == ((h >> 15) != 0));
        }
        REQUIRE(std::bit_cast<std::uint32_t>(qk::fp16_to_fp32_lut(code)) == std::bit_cast<std::uint32_t>(got));
    }
}

TEST_CASE("fp16 encode rounds to nearest even") {
    std::mt19937 rng(7);
    std::uniform_int_distribution<std::uint32_t> bits;
    std::vector<float> cases = {0.0f, -0.0f, 1.0f, -2.0f, 65504.0f, 65519.99f, 65520.0f, 1e-8f, 5.96e-8f,
                                2.98e-8f, 2.99e-8f, 6.1035e-5f, 1.0f + 1.0f / 2048.0f, 1.0f + 3.0f / 2048.0f};
    for (int i = 0; i < 200000; ++i) {
        const float f = std::bit_cast<float>(bits(rng));
        if (std::isfinite(f)) cases.push_back(f);
    }
    std::uniform_real_distribution<float> small(-70000.0f, 70000.0f);
    for (int i = 0; i < 200000; ++i) cases.push_back(small(rng));
    // Exact midpoints between adjacent halves.
    for (std::uint16_t h = 0; h < 0x7bff; h += 37) {
        cases.push_back(static_cast<float>(0.5 * (oracle_decode(h) + oracle_decode(h + 1))));
    }
    for (float f : cases) {
        INFO("f = " << f);
        REQUIRE(qk::fp32_to_fp16(f) == oracle_encode(f));
    }
}

TEST_CASE("fp16 special values") {
    CHECK(qk::fp32_to_fp16(std::numeric_limits<float>::infinity()) == 0x7c00);
    CHECK(qk::fp32_to_fp16(-std::numeric_limits<float>::infinity()) == 0xfc00);
    CHECK(std::isnan(qk::fp16_to_fp32(qk::fp32_to_fp16(std::numeric_limits<float>::quiet_NaN()))));
    CHECK(qk::fp32_to_fp16(1e6f) == 0x7c00);
    CHECK(static_cast<double>(qk::round_to_fp16(0.1f)) == 0.0999755859375);
    static_assert(qk::fp32_to_fp16(1.0f) == 0x3c00);
    static_assert(qk::fp16_to_fp32(0xc000) == -2.0f);
}

#if defined(__F16C__)
TEST_CASE("fp16 conversions agree with F16C") {
    std::mt19937 rng(11);
    std::uniform_int_distribution<std::uint32_t> bits;
    for (int i = 0; i < 200000; ++i) {
        const float f = std::bit_cast<float>(bits(rng));
        if (std::isnan(f)) continue;
        const auto hw = static_cast<std::uint16_t>(_cvtss_sh(f, _MM_FROUND_TO_NEAREST_INT));
        REQUIRE(qk::fp32_to_fp16(f) == hw);
    }
    for (std::uint32_t h = 0; h < 0x10000; ++h) {
        const float hw = _cvtsh_ss(static_cast<unsigned short>(h));
        if (std::isnan(hw)) continue;
        REQUIRE(std::bit_cast<std::uint32_t>(qk::fp16_to_fp32(static_cast<std::uint16_t>(h))) ==
                std::bit_cast<std::uint32_t>(hw));
    }
}
#endif
