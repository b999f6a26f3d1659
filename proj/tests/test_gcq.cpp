#include <doctest.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "qk/common.hpp"
#include "qk/fp16.hpp"
#include "qk/gcq.hpp"

using namespace qk;

namespace {

const CodebookSet kFour(4, 4, {-96, -23, 24, 96, -105, -66, 66, 105, -106, -31, 9, 90, -99, -33, 32, 99});

std::vector<float> gaussian(std::size_t n, std::uint64_t seed, float sigma = 1.0f) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd(0.0f, sigma);
    std::vector<float> v(n);
    for (float& x : v) x = nd(rng);
    return v;
}

std::vector<float> laplacian(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::exponential_distribution<float> ex(1.0f);
    std::vector<float> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = (rng() & 1 ? 1.0f : -1.0f) * ex(rng);
    return v;
}

// Two tight clusters near +-amax: a shape no single peaked codebook fits.
std::vector<float> bimodal(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd(0.0f, 0.05f);
    std::vector<float> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = (rng() & 1 ? 1.0f : -1.0f) + nd(rng);
    return v;
}

// Symmetric four-level quantizer per 16 values: {-2,-1,0,1} * d with
// d = m / -2 rounded to FP16, m the signed max-magnitude element.
double uniform2_sse(std::span<const float> w) {
    float m = 0.0f;
    for (float x : w) {
        if (std::fabs(x) > std::fabs(m)) m = x;
    }
    const float d = round_to_fp16(m / -2.0f);
    double sse = 0.0;
    for (float x : w) {
        const float q = d == 0.0f ? 0.0f : std::clamp(std::round(x / d), -2.0f, 1.0f);
        const double e = static_cast<double>(x) - static_cast<double>(q * d);
        sse += e * e;
    }
    return sse;
}

double uniform2_mse(std::span<const float> w) {
    double sse = 0.0;
    for (std::size_t o = 0; o < w.size(); o += kSubgroupSize) sse += uniform2_sse(w.subspan(o, kSubgroupSize));
    return sse / static_cast<double>(w.size());
}

double mse(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double e = static_cast<double>(a[i]) - b[i];
        s += e * e;
    }
    return s / static_cast<double>(a.size());
}

// Brute force over codebooks and all 4 choices per element.
double brute_force_min_mse(std::span<const float> v, const CodebookSet& cbs) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cbs.codebooks(); ++c) {
        double sse = 0.0;
        for (float x : v) {
            double e_min = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < cbs.centroids(); ++k) {
                const double e = static_cast<double>(x) - cbs.at(c, k);
                e_min = std::min(e_min, e * e);
            }
            sse += e_min;
        }
        best = std::min(best, sse / static_cast<double>(v.size()));
    }
    return best;
}

// Decode straight from the serialized bytes.
std::array<float, kSuperblockSize> oracle_decode(std::span<const std::uint8_t, 78> raw, const CodebookSet& cbs) {
    const std::uint16_t d16 = static_cast<std::uint16_t>(raw[0] | (raw[1] << 8));
    const float d = fp16_to_fp32(d16);
    std::array<float, kSuperblockSize> out;
    for (std::size_t g = 0; g < 16; ++g) {
        const int sub = (raw[2 + g / 2] >> (4 * (g % 2))) & 0xf;
        const int cb = (raw[10 + g / 4] >> (2 * (g % 4))) & 0x3;
        for (std::size_t i = 0; i < 16; ++i) {
            const std::size_t e = g * 16 + i;
            const int idx = (raw[14 + e / 4] >> (2 * (e % 4))) & 0x3;
            out[e] = d * static_cast<float>(sub) * static_cast<float>(cbs.at(cb, idx));
        }
    }
    return out;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::io;  // sentinel: nothing thrown
}

}  // namespace

TEST_CASE("scale_group") {
    const std::vector<float> zeros(16, 0.0f);
    const auto z = scale_group(zeros);
    CHECK(z.scale == 0.0f);
    for (float v : z.values) CHECK(v == 0.0f);

    std::vector<float> g(16, 1.0f);
    g[3] = -254.0f;
    const auto s = scale_group(g);
    CHECK(s.scale == 2.0f);
    CHECK(s.values[3] == -127.0f);

    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        const auto v = gaussian(16, seed, 0.01f + seed);
        const auto r = scale_group(v);
        std::size_t arg = 0;
        for (std::size_t i = 1; i < 16; ++i) {
            if (std::fabs(v[i]) > std::fabs(v[arg])) arg = i;
        }
        REQUIRE(std::fabs(r.values[arg]) == 127.0f);
        for (float x : r.values) REQUIRE(std::fabs(x) <= 127.0f);
    }
    g[0] = std::numeric_limits<float>::infinity();
    CHECK(code_of([&] { scale_group(g); }) == ErrorCode::non_finite);
    CHECK(code_of([&] { scale_group(std::span(g).first(15)); }) == ErrorCode::bad_length);
}

TEST_CASE("distributions") {
    const std::vector<float> zeros(16, 0.0f);
    const auto dz = build_distribution(zeros);
    for (std::size_t b = 0; b < kHistogramBins; ++b) CHECK(dz[b] == (b == 16 ? 1.0 : 0.0));

    std::vector<float> grid(32);
    for (int b = 0; b < 32; ++b) grid[b] = static_cast<float>(-127.0 + (b + 0.5) * 254.0 / 32.0);
    for (double p : build_distribution(grid)) CHECK(p == 1.0 / 32.0);

    CHECK(histogram_bin(-127.0f) == 0);
    CHECK(histogram_bin(127.0f) == 31);
    CHECK(code_of([] { histogram_bin(127.5f); }) == ErrorCode::invalid_argument);
    CHECK(code_of([] { histogram_bin(std::numeric_limits<float>::quiet_NaN()); }) == ErrorCode::invalid_argument);

    // Independent histogram: count values against explicit bin edges.
    std::vector<float> scaled;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto s = scale_group(gaussian(16, 1000 + seed));
        scaled.insert(scaled.end(), s.values.begin(), s.values.end());
    }
    const auto dists = build_distributions(scaled);
    REQUIRE(dists.size() == 200);
    for (std::size_t g = 0; g < dists.size(); ++g) {
        GroupDistribution want{};
        for (std::size_t i = 0; i < 16; ++i) {
            const double x = scaled[g * 16 + i];
            std::size_t bin = 31;
            for (std::size_t b = 0; b < 32; ++b) {
                if (x < -127.0 + (b + 1) * (254.0 / 32.0)) {
                    bin = b;
                    break;
                }
            }
            want[bin] += 1.0 / 16.0;
        }
        double total = 0.0;
        for (std::size_t b = 0; b < 32; ++b) {
            REQUIRE(dists[g][b] == doctest::Approx(want[b]).epsilon(1e-15));
            REQUIRE(dists[g][b] >= 0.0);
            total += dists[g][b];
        }
        REQUIRE(std::fabs(total - 1.0) <= 1e-12);
    }
    CHECK_THROWS_AS(build_distributions(std::span(scaled).first(17)), Error);
}

TEST_CASE("cluster_distributions") {
    const auto one = build_distribution(scale_group(gaussian(16, 3)).values);
    const std::vector<GroupDistribution> twins{one, one};
    const auto r1 = cluster_distributions(twins, 1);
    CHECK(r1.labels == std::vector<std::uint32_t>{0, 0});
    CHECK(code_of([&] { cluster_distributions(twins, 3); }) == ErrorCode::invalid_argument);

    // Peaked versus bimodal families.
    std::vector<GroupDistribution> d;
    for (std::uint64_t s = 0; s < 100; ++s) {
        d.push_back(build_distribution(scale_group(laplacian(16, 2 * s)).values));
        d.push_back(build_distribution(scale_group(bimodal(16, 2 * s + 1)).values));
    }
    const auto r2 = cluster_distributions(d, 2, {5});
    for (std::size_t i = 2; i < d.size(); ++i) REQUIRE(r2.labels[i] == r2.labels[i % 2]);
    CHECK(r2.labels[0] != r2.labels[1]);
    CHECK(r2.inertia < cluster_distributions(d, 1, {5}).inertia);

    std::vector<GroupDistribution> rev(d.rbegin(), d.rend());
    CHECK(std::fabs(cluster_distributions(rev, 2, {5}).inertia - r2.inertia) <= 1e-9 * r2.inertia);
}

TEST_CASE("build_codebooks") {
    std::vector<float> vals(16, -100.0f);
    std::fill(vals.begin() + 8, vals.end(), 100.0f);
    const std::vector<std::uint32_t> one_group{0};
    const auto cb = build_codebooks(vals, one_group, 1, 2);
    CHECK(cb.table()[0] == -100);
    CHECK(cb.table()[1] == 100);

    // Symmetric Gaussian pool: mirror every group so the pool is exactly symmetric.
    std::vector<float> pool;
    for (std::uint64_t s = 0; s < 2000; ++s) {
        const auto g = scale_group(gaussian(16, 40 + s)).values;
        pool.insert(pool.end(), g.begin(), g.end());
        for (float x : g) pool.push_back(-x);
    }
    const std::vector<std::uint32_t> all_zero(pool.size() / 16, 0);
    const auto sym = build_codebooks(pool, all_zero, 1, 4, {11});
    CHECK(std::abs(sym.at(0, 0) + sym.at(0, 3)) <= 2);
    CHECK(std::abs(sym.at(0, 1) + sym.at(0, 2)) <= 2);

    std::vector<float> mixed;
    std::vector<std::uint32_t> labels;
    for (std::uint64_t s = 0; s < 64; ++s) {
        const auto g = scale_group(s % 2 ? laplacian(16, s) : bimodal(16, s)).values;
        mixed.insert(mixed.end(), g.begin(), g.end());
        labels.push_back(static_cast<std::uint32_t>(s % 4));
    }
    const auto full = build_codebooks(mixed, labels, 4, 4);
    CHECK(full.table().size() == 16);
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t k = 1; k < 4; ++k) CHECK(full.at(c, k - 1) < full.at(c, k));
    }

    // Cluster 1 never used.
    const std::vector<std::uint32_t> skip{0, 2, 0, 2};
    CHECK(code_of([&] { build_codebooks(std::span(mixed).first(64), skip, 3, 4); }) == ErrorCode::empty_cluster);
    // Two distinct values cannot produce four distinct centroids.
    CHECK(code_of([&] { build_codebooks(vals, one_group, 1, 4); }) == ErrorCode::duplicate_centroid);
    // Distinct values that collapse onto the same int8.
    std::vector<float> close(16, 10.1f);
    std::fill(close.begin() + 8, close.end(), 10.2f);
    CHECK(code_of([&] { build_codebooks(close, one_group, 1, 2); }) == ErrorCode::duplicate_centroid);
    CHECK(code_of([&] { build_codebooks(vals, one_group, 3, 8); }) == ErrorCode::codebook_too_large);
}

TEST_CASE("assign_codebook") {
    std::array<float, 16> exact;
    for (std::size_t i = 0; i < 16; ++i) exact[i] = kFour.at(2, i % 4);
    const auto c = assign_codebook(exact, kFour);
    CHECK(c.codebook == 2);
    CHECK(c.mse == 0.0);
    for (std::size_t i = 0; i < 16; ++i) CHECK(c.indices[i] == i % 4);

    // Constant group: nearest centroids are 24, 66, 9, 32 -> 32 wins for v = 35.
    std::array<float, 16> flat;
    flat.fill(35.0f);
    const auto f = assign_codebook(flat, kFour);
    CHECK(f.codebook == 3);
    CHECK(f.mse == 9.0);

    // Equal MSE -> lower codebook; equal distance -> lower centroid.
    const CodebookSet twins(2, 2, {-10, 10, -10, 10});
    std::array<float, 16> mid{};
    const auto t = assign_codebook(mid, twins);
    CHECK(t.codebook == 0);
    for (auto i : t.indices) CHECK(i == 0);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<float> u(-127.0f, 127.0f);
    for (int i = 0; i < 5000; ++i) {
        std::array<float, 16> v;
        for (float& x : v) x = u(rng);
        const auto a = assign_codebook(v, kFour);
        REQUIRE(a.mse == brute_force_min_mse(v, kFour));
        REQUIRE(a.mse == codebook_mse(v, kFour.codebook(a.codebook)));
    }
}

TEST_CASE("encode: zero and single-group superblocks") {
    const std::vector<float> zeros(256, 0.0f);
    const auto z = encode_superblock(zeros, kFour);
    CHECK(z.d == 0);
    for (std::size_t g = 0; g < 16; ++g) CHECK(z.sub_scale(g) == 0);
    for (float v : decode_superblock(z, kFour)) CHECK(v == 0.0f);

    std::vector<float> one(256, 0.0f);
    const auto g5 = gaussian(16, 2);
    std::copy(g5.begin(), g5.end(), one.begin() + 5 * 16);
    const auto sb = encode_superblock(one, kFour, {false});
    for (std::size_t g = 0; g < 16; ++g) CHECK(sb.sub_scale(g) == (g == 5 ? 15 : 0));
    const auto hat = decode_superblock(sb, kFour);
    for (std::size_t i = 0; i < 256; ++i) {
        if (i / 16 != 5) CHECK(hat[i] == 0.0f);
    }

    // Zero sub-groups never steal a nonzero sub-scale, refined or not.
    for (std::uint64_t s = 0; s < 200; ++s) {
        auto v = gaussian(256, 500 + s);
        std::mt19937_64 rng(s);
        for (std::size_t g = 0; g < 16; ++g) {
            if (rng() % 3 == 0) std::fill_n(v.begin() + g * 16, 16, 0.0f);
            if (rng() % 7 == 0) std::transform(v.begin() + g * 16, v.begin() + g * 16 + 16, v.begin() + g * 16,
                                               [](float x) { return x * 1e-4f; });
        }
        const auto b = encode_superblock(v, kFour);
        for (std::size_t g = 0; g < 16; ++g) {
            const bool zero = std::all_of(v.begin() + g * 16, v.begin() + g * 16 + 16, [](float x) { return x == 0; });
            REQUIRE((b.sub_scale(g) == 0) == zero);
        }
    }
}

TEST_CASE("encode rejects bad input") {
    std::vector<float> v(256, 1.0f);
    v[7] = std::numeric_limits<float>::quiet_NaN();
    CHECK(code_of([&] { encode_superblock(v, kFour); }) == ErrorCode::non_finite);
    CHECK(code_of([&] { encode_superblock(std::span(v).first(255), kFour); }) == ErrorCode::bad_length);
    v[7] = 1.0f;
    CHECK(code_of([&] { encode_superblock(v, CodebookSet{}); }) == ErrorCode::missing_codebooks);
    const CodebookSet eight(2, 8, {-100, -80, -60, -40, 40, 60, 80, 100, -100, -80, -60, -40, 40, 60, 80, 100});
    CHECK(code_of([&] { encode_superblock(v, eight); }) == ErrorCode::codebook_too_large);
    std::fill(v.begin(), v.end(), 1e9f);
    CHECK(code_of([&] { encode_superblock(v, kFour); }) == ErrorCode::invalid_argument);
}

TEST_CASE("Gaussian superblocks beat the uniform 2-bit quantizer") {
    std::vector<float> train = gaussian(256 * 400, 77);
    const std::vector<std::span<const float>> views{train};
    CodebookBuildOptions opts;
    opts.kmeans.seed = 1;
    const auto cbs = build_codebooks_from_tensors(views, opts);

    int wins = 0;
    constexpr int kBlocks = 1000;
    double gcq_sse = 0.0;
    double uni_sse = 0.0;
    for (int b = 0; b < kBlocks; ++b) {
        const auto v = gaussian(256, 10000 + b);
        const auto hat = decode_superblock(encode_superblock(v, cbs), cbs);
        const double g = mse(v, hat);
        const double u = uniform2_mse(v);
        gcq_sse += g;
        uni_sse += u;
        if (g <= u) ++wins;
    }
    CHECK(wins >= kBlocks * 95 / 100);
    CHECK(gcq_sse < uni_sse);
}

TEST_CASE("decode matches the byte-level oracle") {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 300; ++t) {
        GcqSuperblock sb;
        sb.d = static_cast<std::uint16_t>(rng() & 0x7bff) | static_cast<std::uint16_t>((rng() & 1) << 15);
        for (auto& b : sb.sub_scales) b = static_cast<std::uint8_t>(rng());
        for (auto& b : sb.cb_idx) b = static_cast<std::uint8_t>(rng());
        for (auto& b : sb.elem_idx) b = static_cast<std::uint8_t>(rng());
        const auto raw = to_bytes(std::span<const GcqSuperblock>(&sb, 1));
        REQUIRE(raw.size() == 78);
        const auto want = oracle_decode(std::span<const std::uint8_t, 78>(raw.data(), 78), kFour);
        const auto got = decode_superblock(sb, kFour);
        for (std::size_t i = 0; i < 256; ++i) REQUIRE(std::bit_cast<std::uint32_t>(got[i]) == std::bit_cast<std::uint32_t>(want[i]));
        REQUIRE(gcq2_from_bytes(raw)[0] == sb);
    }
    GcqSuperblock bad;
    bad.set_codebook(3, 3);
    CHECK_THROWS_AS(decode_superblock(bad, CodebookSet(2, 4, {-90, -30, 30, 90, -110, -10, 10, 110})), Error);
}

TEST_CASE("re-encoding a representable decoded superblock is a fixed point") {
    // Every codebook spans +-127 and no codebook's centroids are a subset of another's.
    const CodebookSet cbs(4, 4, {-127, -40, 40, 127, -127, -10, 60, 127, -127, -80, 5, 127, -127, 0, 100, 127});
    std::mt19937_64 rng(17);
    for (int t = 0; t < 200; ++t) {
        GcqSuperblock sb;
        sb.d = fp32_to_fp16(std::ldexp(1.0f, static_cast<int>(rng() % 10) - 12));
        for (std::size_t g = 0; g < 16; ++g) {
            sb.set_sub_scale(g, static_cast<std::uint8_t>(1 + rng() % 15));
            sb.set_codebook(g, static_cast<std::uint8_t>(rng() % 4));
            std::array<std::uint8_t, 16> idx;
            for (std::size_t i = 0; i < 16; ++i) idx[i] = static_cast<std::uint8_t>(i < 4 ? i : rng() % 4);
            std::shuffle(idx.begin(), idx.end(), rng);
            for (std::size_t i = 0; i < 16; ++i) sb.set_element(g * 16 + i, idx[i]);
        }
        sb.set_sub_scale(rng() % 16, 15);
        const auto hat = decode_superblock(sb, cbs);
        REQUIRE(encode_superblock(hat, cbs) == sb);
        REQUIRE(encode_superblock(hat, cbs, {false}) == sb);
    }
}

TEST_CASE("tensor quantization") {
    const std::vector<float> zeros(2 * 512, 0.0f);
    const auto z = quantize_tensor_gcq(zeros, 2, 512, kFour);
    CHECK(z.blocks.size() == 4);
    CHECK(z.report.mse == 0.0);
    for (const auto& b : z.blocks) {
        CHECK(b.d == 0);
        CHECK(b.sub_scales == std::array<std::uint8_t, 8>{});
    }

    CHECK(quantize_tensor_gcq(gaussian(256, 1), 1, 256, kFour).blocks.size() == 1);

    const auto w = gaussian(64 * 512, 2, 0.02f);
    const auto t = quantize_tensor_gcq(w, 64, 512, kFour);
    REQUIRE(t.blocks.size() == 128);
    const auto hat = dequantize_gcq(t.blocks, kFour);
    double sse = 0.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double e = static_cast<double>(w[i]) - hat[i];
        sse += e * e;
        worst = std::max(worst, std::fabs(e));
    }
    CHECK(t.report.mse == doctest::Approx(sse / w.size()).epsilon(1e-12));
    CHECK(t.report.max_abs_error == worst);

    // Serialized size is exactly 2.4375 bits per element.
    CHECK(to_bytes(std::span<const GcqSuperblock>(t.blocks)).size() * 128 == w.size() * 39);

    CHECK(code_of([&] { quantize_tensor_gcq(w, 64, 500, kFour); }) == ErrorCode::shape_mismatch);
    CHECK(code_of([&] { quantize_tensor_gcq(w, 63, 512, kFour); }) == ErrorCode::shape_mismatch);
}

TEST_CASE("per-element error bound") {
    std::mt19937_64 rng(23);
    std::size_t checked_at_15 = 0;
    for (int t = 0; t < 400; ++t) {
        std::vector<float> v = t % 2 ? gaussian(256, rng()) : laplacian(256, rng());
        for (std::size_t g = 0; g < 16; ++g) {
            const float mag = std::exp(std::normal_distribution<float>(0.0f, 0.5f)(rng));
            for (std::size_t i = 0; i < 16; ++i) v[g * 16 + i] *= mag;
        }
        const auto sb = encode_superblock(v, kFour, {false});
        const auto hat = decode_superblock(sb, kFour);
        const float d = fp16_to_fp32(sb.d);
        for (std::size_t g = 0; g < 16; ++g) {
            const int sub = sb.sub_scale(g);
            const auto cb = kFour.codebook(sb.codebook(g));
            const double e = static_cast<double>(d) * sub;
            // The segments beyond the outer centroids count as gaps too.
            double gap = std::max(127.0 - cb.back(), 127.0 + cb.front());
            for (std::size_t k = 1; k < cb.size(); ++k) gap = std::max(gap, 0.5 * (cb[k] - cb[k - 1]));
            float amax = 0.0f;
            for (std::size_t i = 0; i < 16; ++i) amax = std::max(amax, std::fabs(v[g * 16 + i]));
            // Overshoot of the scaled group past +-127 caused by rounding its sub-scale.
            const double overshoot = std::max(0.0, amax / e - 127.0);
            for (std::size_t i = 0; i < 16; ++i) {
                const double err = std::fabs(static_cast<double>(v[g * 16 + i]) - hat[g * 16 + i]);
                REQUIRE(err <= e * (gap + overshoot) * (1 + 1e-6));
                if (sub == 15) {
                    REQUIRE(err <= e * gap + e * (1.0 / 30.0 + 0x1p-10) * 127.0);
                    ++checked_at_15;
                }
            }
        }
    }
    CHECK(checked_at_15 > 0);
}

TEST_CASE("adding a codebook never increases MSE") {
    std::vector<float> w;
    for (std::uint64_t s = 0; s < 60; ++s) {
        const auto part = s % 3 == 0 ? gaussian(256, s) : s % 3 == 1 ? laplacian(256, s) : bimodal(256, s);
        w.insert(w.end(), part.begin(), part.end());
    }
    const auto table = kFour.table();
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t c = 1; c <= 4; ++c) {
        const CodebookSet s(c, 4, std::vector<std::int8_t>(table.begin(), table.begin() + 4 * c));
        const double m = quantize_tensor_gcq(w, w.size() / 256, 256, s, {false}).report.mse;
        CHECK(m <= prev);
        prev = m;

        double assign_prev = 0.0;
        double assign_now = 0.0;
        for (std::size_t g = 0; c > 1 && g < w.size() / 16; ++g) {
            const auto sg = scale_group(std::span(w).subspan(16 * g, 16)).values;
            const CodebookSet fewer(c - 1, 4, std::vector<std::int8_t>(table.begin(), table.begin() + 4 * (c - 1)));
            assign_prev += assign_codebook(sg, fewer).mse;
            assign_now += assign_codebook(sg, s).mse;
        }
        CHECK(assign_now <= assign_prev);
    }
}

TEST_CASE("codebook construction pipeline") {
    SUBCASE("one codebook equals pooled 1-D k-means") {
        const auto w = gaussian(256 * 20, 5);
        const std::vector<std::span<const float>> views{w};
        CodebookBuildOptions o;
        o.codebooks = 1;
        o.kmeans.seed = 3;
        const auto got = build_codebooks_from_tensors(views, o);

        std::vector<double> pooled;
        for (std::size_t g = 0; g < w.size() / 16; ++g) {
            const auto s = scale_group(std::span(w).subspan(16 * g, 16)).values;
            pooled.insert(pooled.end(), s.begin(), s.end());
        }
        const auto km = kmeans(pooled, 1, 4, o.kmeans);
        std::vector<std::int8_t> want;
        for (double x : km.centroids) want.push_back(static_cast<std::int8_t>(std::clamp(std::round(x), -127.0, 127.0)));
        std::sort(want.begin(), want.end());
        CHECK(got == CodebookSet(1, 4, want));
    }
    SUBCASE("two planted families want two codebooks") {
        std::vector<float> w;
        for (std::uint64_t s = 0; s < 80; ++s) {
            const auto part = s % 2 ? bimodal(256, s) : laplacian(256, s);
            w.insert(w.end(), part.begin(), part.end());
        }
        const std::vector<std::span<const float>> views{w};
        CodebookBuildOptions o1;
        o1.codebooks = 1;
        CodebookBuildOptions o2;
        o2.codebooks = 2;
        const auto c1 = build_codebooks_from_tensors(views, o1);
        const auto c2 = build_codebooks_from_tensors(views, o2);
        CHECK(c2.table().size() == 8);
        const double m1 = quantize_tensor_gcq(w, w.size() / 256, 256, c1).report.mse;
        const double m2 = quantize_tensor_gcq(w, w.size() / 256, 256, c2).report.mse;
        CHECK(m2 < m1);
    }
    SUBCASE("subsampling is deterministic") {
        const auto a = gaussian(256 * 50, 8);
        const auto b = laplacian(256 * 30, 9);
        const std::vector<std::span<const float>> views{a, b};
        CodebookBuildOptions o;
        o.max_subgroups = 301;
        o.kmeans.seed = 4;
        CHECK(build_codebooks_from_tensors(views, o) == build_codebooks_from_tensors(views, o));
        const auto idx = subsample_indices(1280, 301);
        CHECK(idx.size() == 301);
        CHECK(std::adjacent_find(idx.begin(), idx.end(), std::greater_equal<>()) == idx.end());
        CHECK(idx.back() < 1280);
        CHECK(subsample_indices(10, 301).size() == 10);
    }
    SUBCASE("all-zero sub-groups are ignored") {
        auto w = gaussian(256 * 4, 10);
        std::vector<float> padded(256 * 4, 0.0f);
        padded.insert(padded.end(), w.begin(), w.end());
        const std::vector<std::span<const float>> v1{w};
        const std::vector<std::span<const float>> v2{padded};
        CHECK(build_codebooks_from_tensors(v1) == build_codebooks_from_tensors(v2));
        const std::vector<float> few(16 * 3, 1.0f);
        const std::vector<std::span<const float>> v3{few};
        CHECK(code_of([&] { build_codebooks_from_tensors(v3); }) == ErrorCode::invalid_argument);
    }
}
