#pragma once

// Group-wise codebook quantization for 2-bit weights.
//
// Construction: every 16-element sub-group is scaled so its largest magnitude
// lands on 127, turned into a 32-bin histogram, and the histograms are
// clustered with k-means into C families. Pooling the scaled values of each
// family and running 1-D k-means gives that family's K int8 centroids.
//
// Encoding: a 256-weight superblock carries an FP16 super-scale and a 4-bit
// multiplier per sub-group; each sub-group picks the codebook with the lowest
// reconstruction MSE and stores 2-bit centroid indices.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qk/codebook.hpp"
#include "qk/kmeans.hpp"

namespace qk {

inline constexpr std::size_t kHistogramBins = 32;
inline constexpr float kCentroidLimit = 127.0f;

using GroupDistribution = std::array<double, kHistogramBins>;

struct ScaledGroup {
    float scale = 0.0f;  // amax / 127; 0 for an all-zero group
    std::array<float, kSubgroupSize> values{};
};

ScaledGroup scale_group(std::span<const float> values);

/// Histogram bin of a scaled value; bins split [-127, 127] into 32 equal widths.
std::size_t histogram_bin(float scaled);

/// Normalised histogram of one group (any length).
GroupDistribution build_distribution(std::span<const float> scaled);
/// One distribution per consecutive `group_size` values.
std::vector<GroupDistribution> build_distributions(std::span<const float> scaled_groups,
                                                   std::size_t group_size = kSubgroupSize);

/// k-means over distributions (Euclidean); labels in [0, clusters).
KMeansResult cluster_distributions(std::span<const GroupDistribution> distributions, std::size_t clusters,
                                   const KMeansOptions& options = {});

/// Per cluster, 1-D k-means on the pooled scaled values of its groups, then
/// round to int8, clamp to +-127, and sort.
CodebookSet build_codebooks(std::span<const float> scaled_groups, std::span<const std::uint32_t> assignments,
                            std::size_t codebooks, std::size_t centroids, const KMeansOptions& options = {});

struct CodebookChoice {
    std::uint8_t codebook = 0;
    std::array<std::uint8_t, kSubgroupSize> indices{};
    double mse = 0.0;
};

/// Nearest centroid per value in every codebook (ties to the lower index);
/// keeps the codebook with the lowest MSE (ties to the lower codebook).
CodebookChoice assign_codebook(std::span<const float> scaled, const CodebookSet& codebooks);

/// Nearest-centroid MSE of `scaled` against one codebook.
double codebook_mse(std::span<const float> scaled, std::span<const std::int8_t> codebook);

struct GcqEncodeOptions {
    /// One least-squares re-fit of each sub-scale, kept only if it lowers MSE.
    bool refine_scales = true;
};

GcqSuperblock encode_superblock(std::span<const float> values, const CodebookSet& codebooks,
                                const GcqEncodeOptions& options = {});
void decode_superblock(const GcqSuperblock& block, const CodebookSet& codebooks, std::span<float> out);
std::array<float, kSuperblockSize> decode_superblock(const GcqSuperblock& block, const CodebookSet& codebooks);

struct GcqErrorReport {
    double mse = 0.0;
    double max_abs_error = 0.0;
};

struct GcqTensor {
    std::vector<GcqSuperblock> blocks;
    GcqErrorReport report;
};

/// Row-major superblock encoding of a [rows x k] tensor; k % 256 == 0.
GcqTensor quantize_tensor_gcq(std::span<const float> values, std::size_t rows, std::size_t k,
                              const CodebookSet& codebooks, const GcqEncodeOptions& options = {});
std::vector<float> dequantize_gcq(std::span<const GcqSuperblock> blocks, const CodebookSet& codebooks);

struct CodebookBuildOptions {
    std::size_t codebooks = 4;
    std::size_t centroids = 4;
    KMeansOptions kmeans{};
    /// Construction uses at most this many sub-groups (deterministic stride).
    std::size_t max_subgroups = std::size_t{1} << 20;
};

/// Full construction pipeline over every 16-element sub-group of every tensor
/// (all-zero sub-groups carry no shape and are skipped).
CodebookSet build_codebooks_from_tensors(std::span<const std::span<const float>> tensors,
                                         const CodebookBuildOptions& options = {});

/// Sub-group indices the construction keeps out of `total` candidates.
std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t cap);

}  // namespace qk
