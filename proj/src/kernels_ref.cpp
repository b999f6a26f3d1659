// Baseline group-quantized dot products: each output column is processed on
// its own, so every group pays for nibble unpacking with a subtract-8, a
// cross-lane reduction of the vector partial sums, and two scalar FP16 scale
// conversions.

#include <string>

#include "parallel.hpp"
#include "qk/common.hpp"
#include "qk/fp16.hpp"
#include "qk/kernels.hpp"
#include "qk/simd.hpp"

namespace qk {

namespace {

namespace v = simd::native;

void check_ref_shape(std::span<const BlockQ4_0> weights, std::span<const BlockQ8_0> activations, GemmShape shape,
                     const KernelProbe& probe) {
    if (shape.m == 0 || shape.n == 0 || shape.k == 0 || shape.k % kQ4GroupSize != 0) {
        fail(ErrorCode::shape_mismatch, "GEMM shape needs positive extents and k % 32 == 0");
    }
    const std::size_t g = shape.groups();
    if (weights.size() != shape.n * g) {
        fail(ErrorCode::shape_mismatch, "weights hold " + std::to_string(weights.size()) + " blocks, shape needs " +
                                            std::to_string(shape.n * g));
    }
    if (activations.size() != shape.m * g) {
        fail(ErrorCode::shape_mismatch, "activations hold " + std::to_string(activations.size()) +
                                            " blocks, shape needs " + std::to_string(shape.m * g));
    }
    if (!probe.group_sums.empty() && probe.group_sums.size() != shape.m * shape.n * g) {
        fail(ErrorCode::shape_mismatch, "group-sum probe must hold m*n*groups entries");
    }
}

// One output column against one activation row.
float column_dot(const BlockQ4_0* w, const BlockQ8_0* a, std::size_t groups, std::int32_t* sums,
                 PerfCounters& pc) {
    float sumf = 0.0f;
    for (std::size_t g = 0; g < groups; ++g) {
        const v::I8x16 q = v::load(w[g].qs.data());
        const v::I8x16 lo = v::sub(v::low_nibbles(q), 8);
        const v::I8x16 hi = v::sub(v::high_nibbles(q), 8);
        const v::I8x16 a0 = v::load(a[g].qs.data());
        const v::I8x16 a1 = v::load(a[g].qs.data() + 16);
        const v::I32x4 acc = v::dot4(v::dot4(v::zero_i32(), lo, a0), hi, a1);
        const std::int32_t isum = v::hsum(acc);

        const float dw = fp16_to_fp32_lut(w[g].d);
        const float da = fp16_to_fp32_lut(a[g].d);
        sumf += static_cast<float>(isum) * (dw * da);

        if (sums) sums[g] = isum;
        pc.int_mac_ops += kQ4GroupSize;
        pc.scale_convert_ops += 2;
        pc.reduction_ops += 1;
        pc.load_ops += 5;  // weight vector, two activation vectors, two scales
    }
    return sumf;
}

}  // namespace

std::vector<float> gemm_ref(std::span<const BlockQ4_0> weights, std::span<const BlockQ8_0> activations,
                            GemmShape shape, KernelProbe probe, int threads) {
    check_ref_shape(weights, activations, shape, probe);
    const std::size_t groups = shape.groups();
    std::vector<float> out(shape.m * shape.n);

    detail::parallel_ranges(shape.n, threads, probe.counters, [&](std::size_t begin, std::size_t end,
                                                                  PerfCounters& pc) {
        for (std::size_t m = 0; m < shape.m; ++m) {
            for (std::size_t n = begin; n < end; ++n) {
                std::int32_t* sums =
                    probe.group_sums.empty() ? nullptr : probe.group_sums.data() + (m * shape.n + n) * groups;
                out[m * shape.n + n] =
                    column_dot(weights.data() + n * groups, activations.data() + m * groups, groups, sums, pc);
            }
        }
    });
    return out;
}

std::vector<float> gemv_ref(std::span<const BlockQ4_0> weights, std::span<const BlockQ8_0> activations,
                            GemmShape shape, KernelProbe probe, int threads) {
    if (shape.m != 1) fail(ErrorCode::shape_mismatch, "GEMV takes exactly one activation row");
    return gemm_ref(weights, activations, shape, probe, threads);
}

}  // namespace qk
