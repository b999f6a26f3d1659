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

// Byte of four 2-bit fields -> four index bytes (LSB-first).
constexpr std::array<std::uint32_t, 256> make_index_expansion() {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t b = 0; b < 256; ++b) {
        t[b] = (b & 3u) | (((b >> 2) & 3u) << 8) | (((b >> 4) & 3u) << 16) | (((b >> 6) & 3u) << 24);
    }
    return t;
}

constexpr auto kIndexExpansion = make_index_expansion();

v::I8x16 expand_indices(const std::uint8_t* packed) noexcept {
    const std::uint32_t lanes[4] = {kIndexExpansion[packed[0]], kIndexExpansion[packed[1]],
                                    kIndexExpansion[packed[2]], kIndexExpansion[packed[3]]};
    return v::load(lanes);
}

}  // namespace

std::vector<float> gemv_gcq(std::span<const GcqSuperblock> weights, const CodebookSet& codebooks,
                            std::span<const BlockQ8_0> activations, GemmShape shape, PerfCounters* counters,
                            int threads) {
    if (codebooks.empty()) fail(ErrorCode::missing_codebooks, "GCQ GEMV needs a codebook set");
    if (codebooks.table().size() > kMaxTableEntries) {
        fail(ErrorCode::codebook_too_large, "codebook table exceeds one 16-entry register");
    }
    if (codebooks.codebooks() > 4 || codebooks.centroids() > 4) {
        fail(ErrorCode::codebook_too_large, "GCQ2 addresses at most 4 codebooks of 4 centroids");
    }
    if (shape.m != 1) fail(ErrorCode::shape_mismatch, "GEMV takes exactly one activation row");
    if (shape.n == 0 || shape.k == 0 || shape.k % kSuperblockSize != 0) {
        fail(ErrorCode::shape_mismatch, "GCQ GEMV needs n > 0 and k % 256 == 0");
    }
    const std::size_t superblocks = shape.k / kSuperblockSize;
    if (weights.size() != shape.n * superblocks) {
        fail(ErrorCode::shape_mismatch, "weights hold " + std::to_string(weights.size()) +
                                            " superblocks, shape needs " + std::to_string(shape.n * superblocks));
    }
    if (activations.size() != shape.groups()) {
        fail(ErrorCode::shape_mismatch, "activation row holds " + std::to_string(activations.size()) +
                                            " blocks, shape needs " + std::to_string(shape.groups()));
    }

    const auto padded = codebooks.padded_table();
    const v::I8x16 table = v::load(padded.data());
    const auto centroids = static_cast<int>(codebooks.centroids());

    // Activation scales are shared by every output row.
    std::vector<float> act_scale(activations.size());
    for (std::size_t b = 0; b < activations.size(); ++b) act_scale[b] = fp16_to_fp32_lut(activations[b].d);

    std::vector<float> out(shape.n);
    detail::parallel_ranges(shape.n, threads, counters, [&](std::size_t begin, std::size_t end, PerfCounters& pc) {
        pc.scale_convert_ops += activations.size();
        for (std::size_t n = begin; n < end; ++n) {
            v::F32x4 master = v::zero_f32();
            for (std::size_t j = 0; j < superblocks; ++j) {
                const GcqSuperblock& sb = weights[n * superblocks + j];
                const float d = fp16_to_fp32_lut(sb.d);
                const BlockQ8_0* act = activations.data() + j * (kSuperblockSize / kQ4GroupSize);
                const float* as = act_scale.data() + j * (kSuperblockSize / kQ4GroupSize);

                // Four sub-groups per step so the per-sub-group sums land in one vector.
                for (std::size_t g = 0; g < kSubgroupsPerSuperblock; g += 4) {
                    std::array<v::I32x4, 4> acc;
                    std::array<float, 4> scale;
                    for (std::size_t u = 0; u < 4; ++u) {
                        const std::size_t sg = g + u;
                        const auto offset = static_cast<std::int8_t>(sb.codebook(sg) * centroids);
                        const v::I8x16 idx = v::sub(expand_indices(sb.elem_idx.data() + 4 * sg),
                                                    static_cast<std::int8_t>(-offset));
                        const v::I8x16 w = v::lookup16(table, idx);
                        const v::I8x16 a = v::load(act[sg / 2].qs.data() + 16 * (sg % 2));
                        acc[u] = v::dot4(v::zero_i32(), w, a);
                        scale[u] = d * static_cast<float>(sb.sub_scale(sg)) * as[sg / 2];
                    }
                    const v::I32x4 sums = v::hsum4(acc[0], acc[1], acc[2], acc[3]);
                    master = v::mul_add(master, v::to_f32(sums), v::make(scale[0], scale[1], scale[2], scale[3]));
                    pc.reduction_ops += 1;
                }
                pc.int_mac_ops += kSuperblockSize;
                pc.scale_convert_ops += 1;
                pc.load_ops += 1 + 2 * kSubgroupsPerSuperblock;
            }
            out[n] = (v::lane(master, 0) + v::lane(master, 1)) + (v::lane(master, 2) + v::lane(master, 3));
            pc.reduction_ops += 1;
        }
    });
    return out;
}

}  // namespace qk
