// Interleaved GEMV/GEMM micro-kernels.
//
// Weights arrive MSB-toggled, so a shift-left by 4 (low nibbles) or a 0xF0
// mask (high nibbles) yields 16x the signed weight directly. The 1/16 is
// folded into the combined FP32 scale, which is an exact exponent change.
//
// chunk 4: one 32-bit lane per channel, activations broadcast per lane
//          (dot-product style), no reductions at all.
// chunk 8: GEMV uses two lanes per channel and one pairwise add per output at
//          the end; GEMM uses the 2x8 * 8x2 -> 2x2 int32 matrix multiply on
//          pairs of activation rows and weight channels.

#include <algorithm>
#include <array>
#include <string>

#include "parallel.hpp"
#include "qk/common.hpp"
#include "qk/fp16.hpp"
#include "qk/kernels.hpp"
#include "qk/simd.hpp"

namespace qk {

namespace {

namespace v = simd::native;

constexpr float kFastDequantScale = 1.0f / 16.0f;

void check_weights(const InterleavedWeights& w, GemmShape shape, const KernelConfig& config) {
    if (shape.m == 0 || shape.n == 0 || shape.k == 0 || shape.k % kQ4GroupSize != 0) {
        fail(ErrorCode::shape_mismatch, "GEMM shape needs positive extents and k % 32 == 0");
    }
    if (!(config.variant == w.variant)) {
        fail(ErrorCode::invalid_argument, "weights were repacked as " + std::string(variant_name(w.variant)) +
                                              " but the kernel is configured for " +
                                              std::string(variant_name(config.variant)));
    }
    if (w.channels != shape.n || w.k != shape.k) {
        fail(ErrorCode::shape_mismatch, "interleaved weights do not match the GEMM shape");
    }
    if (w.bytes.size() != interleaved_weight_bytes(w.variant, w.channels, w.k)) {
        fail(ErrorCode::truncated, "interleaved weight stream length does not match its shape");
    }
}

void check_probe(const KernelProbe& probe, GemmShape shape) {
    if (!probe.group_sums.empty() && probe.group_sums.size() != shape.m * shape.n * shape.groups()) {
        fail(ErrorCode::shape_mismatch, "group-sum probe must hold m*n*groups entries");
    }
}

// Weight scales of a strip as FP32 vectors, four channels per vector.
template <int N>
struct StripScales {
    std::array<v::F32x4, N / 4> s;
};

template <int N>
StripScales<N> load_strip_scales(const std::uint8_t* tile) {
    StripScales<N> r;
    for (int i = 0; i < N / 4; ++i) r.s[i] = v::load_f16x4(tile + 8 * i);
    return r;
}

// ---- GEMV, chunk 4 (4 channels, lanes == channels) -------------------------

void gemv_x4b4_strip(const InterleavedWeights& w, const BlockQ8_0* act, std::size_t strip, float* out,
                     std::int32_t* sums, std::size_t n_total, PerfCounters& pc) {
    const std::size_t groups = w.groups();
    v::F32x4 master = v::zero_f32();
    for (std::size_t g = 0; g < groups; ++g) {
        const std::uint8_t* tile = w.tile(strip, g);
        const std::uint8_t* data = tile + 8;
        const std::int8_t* a = act[g].qs.data();

        v::I32x4 acc = v::zero_i32();
        for (int c = 0; c < 4; ++c) {
            const v::I8x16 q = v::load(data + 16 * c);
            acc = v::dot4(acc, v::shl4(q), v::dup32(a + 4 * c));
            acc = v::dot4(acc, v::mask_hi(q), v::dup32(a + 16 + 4 * c));
        }

        const v::F32x4 ws = v::load_f16x4(tile);
        const float da = fp16_to_fp32_lut(act[g].d) * kFastDequantScale;
        master = v::mul_add(master, v::to_f32(acc), v::mul(ws, v::splat(da)));

        if (sums) {
            for (int j = 0; j < 4; ++j) {
                const std::size_t n = strip * 4 + j;
                if (n < n_total) sums[n * groups + g] = v::lane(acc, j);
            }
        }
        pc.int_mac_ops += 4 * kQ4GroupSize;
        pc.scale_convert_ops += 2;
        pc.load_ops += 4 + 8 + 2;
    }
    for (int j = 0; j < 4; ++j) {
        const std::size_t n = strip * 4 + j;
        if (n < n_total) out[n] = v::lane(master, j);
    }
}

// ---- GEMV, chunk 8 (two lanes per channel) ---------------------------------

template <int N>
void gemv_b8_strip(const InterleavedWeights& w, const BlockQ8_0* act, std::size_t strip, float* out,
                   std::int32_t* sums, std::size_t n_total, PerfCounters& pc) {
    constexpr int P = N / 2;  // channel pairs per strip
    const std::size_t groups = w.groups();
    std::array<v::F32x4, P> master;
    master.fill(v::zero_f32());

    for (std::size_t g = 0; g < groups; ++g) {
        const std::uint8_t* tile = w.tile(strip, g);
        const std::uint8_t* data = tile + 2 * N;
        const std::int8_t* a = act[g].qs.data();
        const v::I8x16 a_lo[2] = {v::dup64(a), v::dup64(a + 8)};
        const v::I8x16 a_hi[2] = {v::dup64(a + 16), v::dup64(a + 24)};

        const auto ws = load_strip_scales<N>(tile);
        const v::F32x4 da = v::splat(fp16_to_fp32_lut(act[g].d) * kFastDequantScale);

        for (int p = 0; p < P; ++p) {
            v::I32x4 acc = v::zero_i32();
            for (int c = 0; c < 2; ++c) {
                const v::I8x16 q = v::load(data + 16 * (c * P + p));
                acc = v::dot4(acc, v::shl4(q), a_lo[c]);
                acc = v::dot4(acc, v::mask_hi(q), a_hi[c]);
            }
            const v::F32x4 quad = ws.s[p / 2];
            const v::F32x4 pair_scale = (p % 2 == 0) ? v::dup_lo_pairs(quad) : v::dup_hi_pairs(quad);
            master[p] = v::mul_add(master[p], v::to_f32(acc), v::mul(pair_scale, da));

            if (sums) {
                for (int h = 0; h < 2; ++h) {
                    const std::size_t n = strip * N + 2 * p + h;
                    if (n < n_total) sums[n * groups + g] = v::lane(acc, 2 * h) + v::lane(acc, 2 * h + 1);
                }
            }
        }
        pc.int_mac_ops += static_cast<std::uint64_t>(N) * kQ4GroupSize;
        pc.scale_convert_ops += 2;
        pc.load_ops += static_cast<std::uint64_t>(N) + 4 + 2;
    }
    for (int p = 0; p < P; ++p) {
        for (int h = 0; h < 2; ++h) {
            const std::size_t n = strip * N + 2 * p + h;
            if (n < n_total) out[n] = v::lane(master[p], 2 * h) + v::lane(master[p], 2 * h + 1);
        }
    }
    pc.reduction_ops += std::min<std::size_t>(N, n_total - strip * N);
}

// ---- GEMM, chunk 4 (4 channels x MR rows, dot-product style) ---------------

template <int MR>
void gemm_x4b4_tile(const InterleavedWeights& w, const InterleavedActivations& act, std::size_t strip,
                    std::size_t row_tile, float* out, std::int32_t* sums, GemmShape shape, PerfCounters& pc) {
    const std::size_t groups = w.groups();
    std::array<v::F32x4, MR> master;
    master.fill(v::zero_f32());

    for (std::size_t g = 0; g < groups; ++g) {
        const std::uint8_t* wtile = w.tile(strip, g);
        const std::uint8_t* wdata = wtile + 8;
        const std::uint8_t* atile = act.tile(row_tile, g);
        const std::uint8_t* adata = atile + 2 * MR;

        std::array<v::I32x4, MR> acc;
        acc.fill(v::zero_i32());
        for (int c = 0; c < 4; ++c) {
            const v::I8x16 q = v::load(wdata + 16 * c);
            const v::I8x16 lo = v::shl4(q);
            const v::I8x16 hi = v::mask_hi(q);
            for (int r = 0; r < MR; ++r) {
                acc[r] = v::dot4(acc[r], lo, v::dup32(adata + 4 * (c * MR + r)));
                acc[r] = v::dot4(acc[r], hi, v::dup32(adata + 4 * ((c + 4) * MR + r)));
            }
        }

        const v::F32x4 ws = v::load_f16x4(wtile);
        const v::F32x4 as = v::mul(v::load_f16x4(atile), v::splat(kFastDequantScale));
        for (int r = 0; r < MR; ++r) {
            const v::F32x4 scale = v::mul(ws, v::splat(v::lane(as, r)));
            master[r] = v::mul_add(master[r], v::to_f32(acc[r]), scale);
        }

        if (sums) {
            for (int r = 0; r < MR; ++r) {
                const std::size_t m = row_tile * MR + r;
                if (m >= shape.m) break;
                for (int j = 0; j < 4; ++j) {
                    const std::size_t n = strip * 4 + j;
                    if (n < shape.n) sums[(m * shape.n + n) * groups + g] = v::lane(acc[r], j);
                }
            }
        }
        pc.int_mac_ops += static_cast<std::uint64_t>(MR) * 4 * kQ4GroupSize;
        pc.scale_convert_ops += 2;
        pc.load_ops += 4 + 8 * MR + 2;
    }
    for (int r = 0; r < MR; ++r) {
        const std::size_t m = row_tile * MR + r;
        if (m >= shape.m) break;
        for (int j = 0; j < 4; ++j) {
            const std::size_t n = strip * 4 + j;
            if (n < shape.n) out[m * shape.n + n] = v::lane(master[r], j);
        }
    }
}

// ---- GEMM, chunk 8 (2x2 int32 blocks from 2x8 * 8x2 products) --------------

template <int N, int MR>
void gemm_b8_tile(const InterleavedWeights& w, const InterleavedActivations& act, std::size_t strip,
                  std::size_t row_tile, float* out, std::int32_t* sums, GemmShape shape, PerfCounters& pc) {
    constexpr int P = N / 2;   // channel pairs
    constexpr int Q = MR / 2;  // row pairs
    const std::size_t groups = w.groups();
    std::array<std::array<v::F32x4, P>, Q> master;
    for (auto& row : master) row.fill(v::zero_f32());

    for (std::size_t g = 0; g < groups; ++g) {
        const std::uint8_t* wtile = w.tile(strip, g);
        const std::uint8_t* wdata = wtile + 2 * N;
        const std::uint8_t* atile = act.tile(row_tile, g);
        const std::uint8_t* adata = atile + 2 * MR;

        // Activation chunk c of rows (2q, 2q+1) is one contiguous 16-byte 2x8 operand.
        std::array<std::array<v::I8x16, 4>, Q> a;
        for (int q = 0; q < Q; ++q) {
            for (int c = 0; c < 4; ++c) a[q][c] = v::load(adata + 8 * (c * MR + 2 * q));
        }

        std::array<std::array<v::I32x4, P>, Q> acc;
        for (auto& row : acc) row.fill(v::zero_i32());
        for (int p = 0; p < P; ++p) {
            for (int c = 0; c < 2; ++c) {
                const v::I8x16 q8 = v::load(wdata + 16 * (c * P + p));
                const v::I8x16 lo = v::shl4(q8);
                const v::I8x16 hi = v::mask_hi(q8);
                for (int q = 0; q < Q; ++q) {
                    acc[q][p] = v::mmla(acc[q][p], a[q][c], lo);
                    acc[q][p] = v::mmla(acc[q][p], a[q][c + 2], hi);
                }
            }
        }

        const auto ws = load_strip_scales<N>(wtile);
        const v::F32x4 as = v::mul(v::load_f16x4(atile), v::splat(kFastDequantScale));
        for (int q = 0; q < Q; ++q) {
            const v::F32x4 rows = (q == 0) ? v::dup_lo_pairs(as) : v::dup_hi_pairs(as);
            for (int p = 0; p < P; ++p) {
                const v::F32x4 quad = ws.s[p / 2];
                const v::F32x4 cols = (p % 2 == 0) ? v::dup_lo_half(quad) : v::dup_hi_half(quad);
                master[q][p] = v::mul_add(master[q][p], v::to_f32(acc[q][p]), v::mul(cols, rows));
            }
        }

        if (sums) {
            for (int q = 0; q < Q; ++q) {
                for (int p = 0; p < P; ++p) {
                    for (int l = 0; l < 4; ++l) {
                        const std::size_t m = row_tile * MR + 2 * q + l / 2;
                        const std::size_t n = strip * N + 2 * p + l % 2;
                        if (m < shape.m && n < shape.n) sums[(m * shape.n + n) * groups + g] = v::lane(acc[q][p], l);
                    }
                }
            }
        }
        pc.int_mac_ops += static_cast<std::uint64_t>(MR) * N * kQ4GroupSize;
        pc.scale_convert_ops += 2;
        pc.load_ops += static_cast<std::uint64_t>(N) + 4 * Q + 2;
    }
    for (int q = 0; q < Q; ++q) {
        for (int p = 0; p < P; ++p) {
            for (int l = 0; l < 4; ++l) {
                const std::size_t m = row_tile * MR + 2 * q + l / 2;
                const std::size_t n = strip * N + 2 * p + l % 2;
                if (m < shape.m && n < shape.n) out[m * shape.n + n] = v::lane(master[q][p], l);
            }
        }
    }
}

using GemmTileFn = void (*)(const InterleavedWeights&, const InterleavedActivations&, std::size_t, std::size_t,
                            float*, std::int32_t*, GemmShape, PerfCounters&);

GemmTileFn select_gemm_tile(Variant variant, int mr) {
    if (variant == Variant::x4b4()) return mr == 2 ? gemm_x4b4_tile<2> : gemm_x4b4_tile<4>;
    if (variant == Variant::x4b8()) return mr == 2 ? gemm_b8_tile<4, 2> : gemm_b8_tile<4, 4>;
    return mr == 2 ? gemm_b8_tile<8, 2> : gemm_b8_tile<8, 4>;
}

}  // namespace

std::vector<float> gemv_opt(const InterleavedWeights& weights, std::span<const BlockQ8_0> activations,
                            GemmShape shape, const KernelConfig& config, KernelProbe probe) {
    if (shape.m != 1) fail(ErrorCode::shape_mismatch, "GEMV takes exactly one activation row");
    check_weights(weights, shape, config);
    check_probe(probe, shape);
    if (activations.size() != shape.groups()) {
        fail(ErrorCode::shape_mismatch, "activation row holds " + std::to_string(activations.size()) +
                                            " blocks, shape needs " + std::to_string(shape.groups()));
    }

    std::vector<float> out(shape.n);
    std::int32_t* sums = probe.group_sums.empty() ? nullptr : probe.group_sums.data();
    const Variant var = weights.variant;
    detail::parallel_ranges(weights.strips(), config.threads, probe.counters,
                            [&](std::size_t begin, std::size_t end, PerfCounters& pc) {
                                for (std::size_t s = begin; s < end; ++s) {
                                    if (var == Variant::x4b4()) {
                                        gemv_x4b4_strip(weights, activations.data(), s, out.data(), sums, shape.n, pc);
                                    } else if (var == Variant::x4b8()) {
                                        gemv_b8_strip<4>(weights, activations.data(), s, out.data(), sums, shape.n, pc);
                                    } else {
                                        gemv_b8_strip<8>(weights, activations.data(), s, out.data(), sums, shape.n, pc);
                                    }
                                }
                            });
    return out;
}

std::vector<float> gemm_opt(const InterleavedWeights& weights, const InterleavedActivations& activations,
                            GemmShape shape, const KernelConfig& config, KernelProbe probe) {
    check_weights(weights, shape, config);
    check_probe(probe, shape);
    if (config.mr != 2 && config.mr != 4) fail(ErrorCode::invalid_argument, "GEMM micro-tiles hold 2 or 4 rows");
    if (activations.rows_per_tile != config.mr || activations.chunk != weights.variant.chunk) {
        fail(ErrorCode::invalid_argument,
             "activations interleaved as MR=" + std::to_string(activations.rows_per_tile) + "/chunk " +
                 std::to_string(activations.chunk) + ", kernel expects MR=" + std::to_string(config.mr) +
                 "/chunk " + std::to_string(weights.variant.chunk));
    }
    if (activations.rows != shape.m || activations.k != shape.k ||
        activations.bytes.size() != activations.row_tiles() * activations.groups() * activations.tile_bytes()) {
        fail(ErrorCode::shape_mismatch, "interleaved activations do not match the GEMM shape");
    }

    std::vector<float> out(shape.m * shape.n);
    std::int32_t* sums = probe.group_sums.empty() ? nullptr : probe.group_sums.data();
    const GemmTileFn tile_fn = select_gemm_tile(weights.variant, config.mr);
    const std::size_t row_tiles = activations.row_tiles();
    detail::parallel_ranges(weights.strips(), config.threads, probe.counters,
                            [&](std::size_t begin, std::size_t end, PerfCounters& pc) {
                                for (std::size_t s = begin; s < end; ++s) {
                                    for (std::size_t t = 0; t < row_tiles; ++t) {
                                        tile_fn(weights, activations, s, t, out.data(), sums, shape, pc);
                                    }
                                }
                            });
    return out;
}

}  // namespace qk
