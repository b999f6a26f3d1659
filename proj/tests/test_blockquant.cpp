#include <doctest.h>

#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "qk/blockquant.hpp"
#include "qk/common.hpp"
#include "qk/fp16.hpp"

using namespace qk;

namespace {

std::vector<float> normal_row(std::size_t n, std::uint32_t seed, float sigma = 1.0f) {
    std::mt19937 rng(seed);
    std::normal_distribution<float> nd(0.0f, sigma);
    std::vector<float> v(n);
    for (float& x : v) x = nd(rng);
    return v;
}

// Direct transcription of the block formulas, element order kept logical.
struct OracleQ4 {
    std::uint16_t d;
    std::array<int, 32> nibble;
};

OracleQ4 oracle_q4(const float* x) {
    float m = 0.0f;
    for (int i = 0; i < 32; ++i) {
        if (std::fabs(x[i]) > std::fabs(m)) m = x[i];
    }
    OracleQ4 o{};
    o.d = fp32_to_fp16(m / -8.0f);
    const float d = fp16_to_fp32(o.d);
    for (int i = 0; i < 32; ++i) {
        if (d == 0.0f) {
            o.nibble[i] = 8;
        } else {
            const long r = std::lround(x[i] / d);
            o.nibble[i] = static_cast<int>(std::min(15L, std::max(0L, r + 8)));
        }
    }
    if (d == 0.0f) o.d = 0;
    return o;
}

}  // namespace

TEST_CASE("q4_0 zero block") {
    const std::vector<float> z(32, 0.0f);
    const auto b = quantize_q4_0(z);
    REQUIRE(b.size() == 1);
    CHECK(b[0].d == 0);
    for (std::size_t i = 0; i < 32; ++i) CHECK(q4_nibble(b[0], i) == 8);
    for (float v : dequantize_q4_0(b)) CHECK(v == 0.0f);
}

TEST_CASE("q4_0 identity grid") {
    std::vector<float> row;
    for (int r = 0; r < 2; ++r) {
        for (int v = -8; v <= 7; ++v) row.push_back(static_cast<float>(v));
    }
    const auto b = quantize_q4_0(row);
    CHECK(fp16_to_fp32(b[0].d) == 1.0f);
    for (std::size_t i = 0; i < 32; ++i) CHECK(q4_nibble(b[0], i) == static_cast<int>(row[i]) + 8);
    CHECK(dequantize_q4_0(b) == row);
}

TEST_CASE("q4_0 nibble storage order") {
    std::array<std::uint8_t, 32> nib;
    for (int i = 0; i < 32; ++i) nib[i] = static_cast<std::uint8_t>(i % 16);
    const auto qs = interleave_nibbles(nib);
    for (int j = 0; j < 16; ++j) {
        CHECK((qs[j] & 0x0f) == nib[j]);
        CHECK((qs[j] >> 4) == nib[j + 16]);
    }
    std::mt19937 rng(3);
    for (int t = 0; t < 1000; ++t) {
        for (auto& n : nib) n = static_cast<std::uint8_t>(rng() & 0x0f);
        REQUIRE(deinterleave_nibbles(interleave_nibbles(nib)) == nib);
    }
}

TEST_CASE("q4_0 matches the scalar oracle bit-for-bit") {
    for (std::uint32_t seed : {7u, 8u, 9u, 10u}) {
        const auto row = normal_row(32 * 64, seed);
        const auto blocks = quantize_q4_0(row);
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const OracleQ4 o = oracle_q4(row.data() + 32 * b);
            REQUIRE(blocks[b].d == o.d);
            for (std::size_t i = 0; i < 32; ++i) REQUIRE(q4_nibble(blocks[b], i) == o.nibble[i]);
        }
    }
}

TEST_CASE("q4_0 roundtrip error bound and clamping frequency") {
    std::size_t clamped = 0;
    std::size_t total = 0;
    for (std::uint32_t seed = 0; seed < 40; ++seed) {
        const auto row = normal_row(32 * 800, 100 + seed, seed % 2 ? 3.0f : 0.01f);
        const auto blocks = quantize_q4_0(row);
        const auto hat = dequantize_q4_0(blocks);
        for (std::size_t i = 0; i < row.size(); ++i) {
            const float d = std::fabs(fp16_to_fp32(blocks[i / 32].d));
            const int nib = q4_nibble(blocks[i / 32], i % 32);
            const bool at_edge = nib == 15 && row[i] / fp16_to_fp32(blocks[i / 32].d) > 7.5f;
            ++total;
            if (at_edge) {
                ++clamped;
                continue;
            }
            REQUIRE(std::fabs(row[i] - hat[i]) <= d * (0.5f + 0x1p-10f));
        }
    }
    CHECK(static_cast<double>(clamped) / static_cast<double>(total) < 0.05);
}

TEST_CASE("q4_0 rejects bad input") {
    std::vector<float> row(31, 1.0f);
    CHECK_THROWS_AS(quantize_q4_0(row), Error);
    row.assign(32, 1.0f);
    row[5] = std::numeric_limits<float>::quiet_NaN();
    try {
        quantize_q4_0(row);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::non_finite);
    }
    row[5] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(quantize_q4_0(row), Error);
}

TEST_CASE("q4_0 scale extremes") {
    std::vector<float> tiny(32, 1e-10f);
    const auto b = quantize_q4_0(tiny);
    CHECK(b[0].d == 0);
    for (float v : dequantize_q4_0(b)) CHECK(v == 0.0f);
    std::vector<float> huge(32, 1e9f);
    CHECK_THROWS_AS(quantize_q4_0(huge), Error);
}

TEST_CASE("q8_0 examples and bound") {
    const std::vector<float> z(32, 0.0f);
    const auto zb = quantize_q8_0(z);
    CHECK(zb[0].d == 0);
    for (auto q : zb[0].qs) CHECK(q == 0);

    std::vector<float> grid(32);
    for (int i = 0; i < 32; ++i) grid[i] = static_cast<float>(i * 4 - 1);
    grid[31] = 127.0f;
    const auto gb = quantize_q8_0(grid);
    CHECK(fp16_to_fp32(gb[0].d) == 1.0f);
    CHECK(dequantize_q8_0(gb) == grid);

    for (std::uint32_t seed = 0; seed < 20; ++seed) {
        const auto row = normal_row(32 * 500, 500 + seed, 2.0f);
        const auto blocks = quantize_q8_0(row);
        const auto hat = dequantize_q8_0(blocks);
        for (std::size_t i = 0; i < row.size(); ++i) {
            const auto& b = blocks[i / 32];
            const float d = std::fabs(fp16_to_fp32(b.d));
            REQUIRE(b.qs[i % 32] >= -127);
            REQUIRE(std::fabs(row[i] - hat[i]) <= d * (0.5f + 0x1p-10f));
            // Oracle: amax / 127 rounded to FP16, round half away from zero.
            float amax = 0.0f;
            for (int j = 0; j < 32; ++j) amax = std::max(amax, std::fabs(row[i / 32 * 32 + j]));
            const float d16 = round_to_fp16(amax / 127.0f);
            REQUIRE(fp16_to_fp32(b.d) == d16);
            REQUIRE(b.qs[i % 32] == std::clamp(std::lround(row[i] / d16), -127L, 127L));
        }
    }
}

TEST_CASE("bits per weight") {
    CHECK(block_bits_per_weight(DType::q4_0).value() == 4.5);
    CHECK(block_bits_per_weight(DType::q8_0).value() == 8.5);
    CHECK(block_bits_per_weight(DType::gcq2).value() == 2.4375);
    CHECK(block_bits_per_weight(DType::q4_0x8b8).value() == 4.5);
    CHECK(block_bits_per_weight(DType::fp32).value() == 32.0);
    CHECK(block_bits_per_weight(DType::fp16).value() == 16.0);
    const Rational r = block_bits_per_weight(DType::gcq2);
    CHECK(r.num == 39);
    CHECK(r.den == 16);
    CHECK_THROWS_AS(block_bits_per_weight(static_cast<DType>(99)), Error);
}

TEST_CASE("block serialization is byte-exact") {
    const auto row = normal_row(32 * 7, 1);
    const auto q4 = quantize_q4_0(row);
    const auto bytes4 = to_bytes(std::span<const BlockQ4_0>(q4));
    REQUIRE(bytes4.size() == 7 * 18);
    CHECK(bytes4[0] == (q4[0].d & 0xff));
    CHECK(bytes4[1] == (q4[0].d >> 8));
    CHECK(bytes4[2] == q4[0].qs[0]);
    CHECK(q4_0_from_bytes(bytes4) == q4);
    CHECK(bytes4.size() * 8 == static_cast<std::size_t>(block_bits_per_weight(DType::q4_0).value() * row.size()));

    const auto q8 = quantize_q8_0(row);
    const auto bytes8 = to_bytes(std::span<const BlockQ8_0>(q8));
    REQUIRE(bytes8.size() == 7 * 34);
    CHECK(q8_0_from_bytes(bytes8) == q8);
    CHECK_THROWS_AS(q8_0_from_bytes(std::span<const std::uint8_t>(bytes8).first(33)), Error);
}
