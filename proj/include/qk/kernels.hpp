#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qk/blockquant.hpp"
#include "qk/codebook.hpp"
#include "qk/dtype.hpp"
#include "qk/repack.hpp"

namespace qk {

/// out[M x N] = activations[M x K] * weights[N x K]^T
struct GemmShape {
    std::size_t m = 1;
    std::size_t n = 1;
    std::size_t k = 32;

    std::size_t groups() const noexcept { return k / kQ4GroupSize; }
    friend bool operator==(GemmShape, GemmShape) = default;
};

struct KernelConfig {
    Variant variant = Variant::x8b8();
    int mr = 2;       // activation rows per micro-tile (1 for GEMV)
    int threads = 1;  // partitions over output-channel strips
};

/// Operation counts of one kernel invocation. A vector FP16->FP32 conversion
/// of several scales counts once; so does a cross-lane reduction.
struct PerfCounters {
    std::uint64_t int_mac_ops = 0;
    std::uint64_t scale_convert_ops = 0;
    std::uint64_t reduction_ops = 0;
    std::uint64_t load_ops = 0;

    PerfCounters& operator+=(const PerfCounters& o) noexcept {
        int_mac_ops += o.int_mac_ops;
        scale_convert_ops += o.scale_convert_ops;
        reduction_ops += o.reduction_ops;
        load_ops += o.load_ops;
        return *this;
    }
    friend bool operator==(const PerfCounters&, const PerfCounters&) = default;
};

/// Optional instrumentation. When `group_sums` is non-empty it must hold
/// M*N*G entries and receives each per-group INT32 partial sum, indexed
/// [(m * N + n) * G + g]. Reference kernels store sum(w*a) over the
/// subtract-8 weights; optimized kernels store the raw sum over 16x-scaled
/// weights, so opt == 16 * ref.
struct KernelProbe {
    PerfCounters* counters = nullptr;
    std::span<std::int32_t> group_sums = {};
};

// Baseline pipeline: one weight column at a time, subtract-8 unpacking,
// per-group cross-lane reduction, scalar scale conversion.
std::vector<float> gemv_ref(std::span<const BlockQ4_0> weights, std::span<const BlockQ8_0> activations,
                            GemmShape shape, KernelProbe probe = {}, int threads = 1);
std::vector<float> gemm_ref(std::span<const BlockQ4_0> weights, std::span<const BlockQ8_0> activations,
                            GemmShape shape, KernelProbe probe = {}, int threads = 1);

// Interleaved kernels: lanes carry distinct output channels, FP16 scales of a
// strip convert in one vector step, nibbles decode via the MSB-toggle path.
std::vector<float> gemv_opt(const InterleavedWeights& weights, std::span<const BlockQ8_0> activations,
                            GemmShape shape, const KernelConfig& config, KernelProbe probe = {});
std::vector<float> gemm_opt(const InterleavedWeights& weights, const InterleavedActivations& activations,
                            GemmShape shape, const KernelConfig& config, KernelProbe probe = {});

/// Codebook GEMV: centroids fetched by a 16-entry register table lookup.
/// `activations` is one Q8_0 row (8 blocks per superblock); `shape.m` must be 1.
std::vector<float> gemv_gcq(std::span<const GcqSuperblock> weights, const CodebookSet& codebooks,
                            std::span<const BlockQ8_0> activations, GemmShape shape,
                            PerfCounters* counters = nullptr, int threads = 1);

/// Row-wise dynamic Q8_0 quantization of FP32 activations [rows x k].
std::vector<BlockQ8_0> dynamic_quantize_rows(std::span<const float> activations, std::size_t rows,
                                             std::size_t k);
/// Same, emitting the interleaved micro-tile layout directly.
InterleavedActivations dynamic_quantize_interleaved(std::span<const float> activations, std::size_t rows,
                                                    std::size_t k, int rows_per_tile, int chunk);

}  // namespace qk
