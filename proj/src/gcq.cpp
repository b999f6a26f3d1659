#include "qk/gcq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "qk/common.hpp"
#include "qk/fp16.hpp"

namespace qk {

namespace {

constexpr double kBinWidth = 254.0 / static_cast<double>(kHistogramBins);

void require_finite(std::span<const float> values) {
    for (float v : values) {
        if (!std::isfinite(v)) fail(ErrorCode::non_finite, "non-finite weight value");
    }
}

float amax_of(std::span<const float> values) {
    float m = 0.0f;
    for (float v : values) m = std::max(m, std::fabs(v));
    return m;
}

std::uint8_t nearest_centroid(float v, std::span<const std::int8_t> codebook) noexcept {
    std::uint8_t best = 0;
    float best_d = std::fabs(v - static_cast<float>(codebook[0]));
    for (std::size_t k = 1; k < codebook.size(); ++k) {
        const float d = std::fabs(v - static_cast<float>(codebook[k]));
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::uint8_t>(k);
        }
    }
    return best;
}

void check_encodable(const CodebookSet& codebooks) {
    if (codebooks.empty()) fail(ErrorCode::missing_codebooks, "GCQ2 encoding needs a codebook set");
    if (codebooks.codebooks() > 4 || codebooks.centroids() > 4) {
        fail(ErrorCode::codebook_too_large, "GCQ2 stores 2-bit codebook and centroid indices");
    }
}

struct SubgroupCode {
    std::uint8_t sub = 0;
    CodebookChoice choice;
    double sse = 0.0;  // in original units
};

double reconstruction_sse(std::span<const float> w, float d, std::uint8_t sub, const CodebookChoice& choice,
                          const CodebookSet& codebooks) {
    double sse = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const float hat = d * static_cast<float>(sub) *
                          static_cast<float>(codebooks.at(choice.codebook, choice.indices[i]));
        const double e = static_cast<double>(w[i]) - static_cast<double>(hat);
        sse += e * e;
    }
    return sse;
}

SubgroupCode code_subgroup(std::span<const float> w, float d, std::uint8_t sub, const CodebookSet& codebooks) {
    SubgroupCode code;
    code.sub = sub;
    const float e = d * static_cast<float>(sub);
    std::array<float, kSubgroupSize> scaled;
    for (std::size_t i = 0; i < kSubgroupSize; ++i) scaled[i] = w[i] / e;
    code.choice = assign_codebook(scaled, codebooks);
    code.sse = reconstruction_sse(w, d, sub, code.choice, codebooks);
    return code;
}

}  // namespace

ScaledGroup scale_group(std::span<const float> values) {
    if (values.size() != kSubgroupSize) {
        fail(ErrorCode::bad_length, "a scaled group holds 16 values, got " + std::to_string(values.size()));
    }
    require_finite(values);
    ScaledGroup g;
    const float amax = amax_of(values);
    if (amax == 0.0f) return g;
    g.scale = amax / kCentroidLimit;
    const double ratio = 127.0 / static_cast<double>(amax);
    for (std::size_t i = 0; i < kSubgroupSize; ++i) {
        g.values[i] = static_cast<float>(static_cast<double>(values[i]) * ratio);
    }
    return g;
}

std::size_t histogram_bin(float scaled) {
    if (!(std::fabs(scaled) <= kCentroidLimit)) {
        fail(ErrorCode::invalid_argument, "scaled value " + std::to_string(scaled) + " outside [-127, 127]");
    }
    const auto bin = static_cast<std::size_t>(std::floor((static_cast<double>(scaled) + 127.0) / kBinWidth));
    return std::min(bin, kHistogramBins - 1);
}

GroupDistribution build_distribution(std::span<const float> scaled) {
    if (scaled.empty()) fail(ErrorCode::bad_length, "cannot build the distribution of an empty group");
    GroupDistribution dist{};
    for (float v : scaled) dist[histogram_bin(v)] += 1.0;
    const double inv = 1.0 / static_cast<double>(scaled.size());
    for (double& p : dist) p *= inv;
    return dist;
}

std::vector<GroupDistribution> build_distributions(std::span<const float> scaled_groups, std::size_t group_size) {
    if (group_size == 0 || scaled_groups.size() % group_size != 0) {
        fail(ErrorCode::bad_length, "scaled values are not a whole number of groups");
    }
    std::vector<GroupDistribution> out;
    out.reserve(scaled_groups.size() / group_size);
    for (std::size_t off = 0; off < scaled_groups.size(); off += group_size) {
        out.push_back(build_distribution(scaled_groups.subspan(off, group_size)));
    }
    return out;
}

KMeansResult cluster_distributions(std::span<const GroupDistribution> distributions, std::size_t clusters,
                                   const KMeansOptions& options) {
    if (distributions.size() < clusters) {
        fail(ErrorCode::invalid_argument, "need at least " + std::to_string(clusters) + " distributions, got " +
                                              std::to_string(distributions.size()));
    }
    std::vector<double> flat;
    flat.reserve(distributions.size() * kHistogramBins);
    for (const auto& d : distributions) flat.insert(flat.end(), d.begin(), d.end());
    return kmeans(flat, kHistogramBins, clusters, options);
}

CodebookSet build_codebooks(std::span<const float> scaled_groups, std::span<const std::uint32_t> assignments,
                            std::size_t codebooks, std::size_t centroids, const KMeansOptions& options) {
    if (scaled_groups.size() != assignments.size() * kSubgroupSize) {
        fail(ErrorCode::bad_length, "one assignment per 16-value group is required");
    }
    if (codebooks == 0 || centroids == 0 || codebooks * centroids > kMaxTableEntries) {
        fail(ErrorCode::codebook_too_large, "C x K must be between 1 and 16");
    }
    std::vector<std::vector<double>> pooled(codebooks);
    for (std::size_t g = 0; g < assignments.size(); ++g) {
        if (assignments[g] >= codebooks) fail(ErrorCode::invalid_argument, "assignment out of range");
        auto& pool = pooled[assignments[g]];
        for (std::size_t i = 0; i < kSubgroupSize; ++i) pool.push_back(scaled_groups[g * kSubgroupSize + i]);
    }

    std::vector<std::int8_t> table;
    table.reserve(codebooks * centroids);
    for (std::size_t c = 0; c < codebooks; ++c) {
        if (pooled[c].empty()) fail(ErrorCode::empty_cluster, "cluster " + std::to_string(c) + " has no groups");
        if (pooled[c].size() < centroids) {
            fail(ErrorCode::duplicate_centroid, "cluster " + std::to_string(c) + " has fewer values than centroids");
        }
        const KMeansResult km = kmeans(pooled[c], 1, centroids, options);
        std::vector<std::int8_t> cb;
        for (double x : km.centroids) cb.push_back(static_cast<std::int8_t>(std::clamp(std::round(x), -127.0, 127.0)));
        std::sort(cb.begin(), cb.end());
        if (std::adjacent_find(cb.begin(), cb.end()) != cb.end()) {
            fail(ErrorCode::duplicate_centroid,
                 "codebook " + std::to_string(c) + " has duplicate centroids after rounding to int8");
        }
        table.insert(table.end(), cb.begin(), cb.end());
    }
    return CodebookSet(codebooks, centroids, std::move(table));
}

double codebook_mse(std::span<const float> scaled, std::span<const std::int8_t> codebook) {
    double sse = 0.0;
    for (float v : scaled) {
        const double e = static_cast<double>(v) - codebook[nearest_centroid(v, codebook)];
        sse += e * e;
    }
    return sse / static_cast<double>(scaled.size());
}

CodebookChoice assign_codebook(std::span<const float> scaled, const CodebookSet& codebooks) {
    if (scaled.size() != kSubgroupSize) fail(ErrorCode::bad_length, "codebook assignment takes 16 values");
    if (codebooks.empty()) fail(ErrorCode::missing_codebooks, "empty codebook set");
    CodebookChoice best;
    best.mse = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < codebooks.codebooks(); ++c) {
        const auto cb = codebooks.codebook(c);
        CodebookChoice cand;
        cand.codebook = static_cast<std::uint8_t>(c);
        double sse = 0.0;
        for (std::size_t i = 0; i < kSubgroupSize; ++i) {
            cand.indices[i] = nearest_centroid(scaled[i], cb);
            const double e = static_cast<double>(scaled[i]) - cb[cand.indices[i]];
            sse += e * e;
        }
        cand.mse = sse / static_cast<double>(kSubgroupSize);
        if (cand.mse < best.mse) best = cand;
    }
    return best;
}

GcqSuperblock encode_superblock(std::span<const float> values, const CodebookSet& codebooks,
                                const GcqEncodeOptions& options) {
    if (values.size() != kSuperblockSize) {
        fail(ErrorCode::bad_length, "a superblock holds 256 values, got " + std::to_string(values.size()));
    }
    require_finite(values);
    check_encodable(codebooks);

    std::array<float, kSubgroupsPerSuperblock> r{};
    float rmax = 0.0f;
    for (std::size_t g = 0; g < kSubgroupsPerSuperblock; ++g) {
        r[g] = amax_of(values.subspan(g * kSubgroupSize, kSubgroupSize)) / kCentroidLimit;
        rmax = std::max(rmax, r[g]);
    }

    GcqSuperblock sb;
    sb.d = fp32_to_fp16(rmax / 15.0f);
    float d = fp16_to_fp32(sb.d);
    if (std::isinf(d)) fail(ErrorCode::invalid_argument, "superblock scale exceeds the FP16 range");
    if (d == 0.0f) sb.d = 0;

    // Zero sub-groups keep sub-scale 0 with codebook 0 at its centroid nearest zero.
    const auto cb0 = codebooks.codebook(0);
    std::size_t zero_idx = 0;
    for (std::size_t k = 1; k < cb0.size(); ++k) {
        if (std::abs(cb0[k]) < std::abs(cb0[zero_idx])) zero_idx = k;
    }

    for (std::size_t g = 0; g < kSubgroupsPerSuperblock; ++g) {
        const auto w = values.subspan(g * kSubgroupSize, kSubgroupSize);
        if (r[g] == 0.0f || d == 0.0f) {
            sb.set_sub_scale(g, 0);
            sb.set_codebook(g, 0);
            for (std::size_t i = 0; i < kSubgroupSize; ++i) {
                sb.set_element(g * kSubgroupSize + i, static_cast<std::uint8_t>(zero_idx));
            }
            continue;
        }
        // A nonzero sub-group never rounds to sub-scale 0.
        const auto sub = static_cast<std::uint8_t>(std::clamp(std::round(r[g] / d), 1.0f, 15.0f));
        SubgroupCode code = code_subgroup(w, d, sub, codebooks);

        if (options.refine_scales) {
            double num = 0.0;
            double den = 0.0;
            for (std::size_t i = 0; i < kSubgroupSize; ++i) {
                const double c = codebooks.at(code.choice.codebook, code.choice.indices[i]);
                num += static_cast<double>(w[i]) * c;
                den += c * c;
            }
            if (den > 0.0) {
                // The least-squares scale usually falls between two sub-scales; try both neighbours.
                const double s = num / den / static_cast<double>(d);
                const SubgroupCode base = code;
                for (const double bound : {std::floor(s), std::ceil(s)}) {
                    const auto refined = static_cast<std::uint8_t>(std::clamp(bound, 1.0, 15.0));
                    if (refined == base.sub) continue;
                    SubgroupCode alt = code_subgroup(w, d, refined, codebooks);
                    if (alt.sse < code.sse) code = alt;
                }
            }
        }

        sb.set_sub_scale(g, code.sub);
        sb.set_codebook(g, code.choice.codebook);
        for (std::size_t i = 0; i < kSubgroupSize; ++i) sb.set_element(g * kSubgroupSize + i, code.choice.indices[i]);
    }
    return sb;
}

void decode_superblock(const GcqSuperblock& block, const CodebookSet& codebooks, std::span<float> out) {
    if (out.size() != kSuperblockSize) fail(ErrorCode::bad_length, "superblock output needs 256 values");
    if (codebooks.empty()) fail(ErrorCode::missing_codebooks, "decoding GCQ2 needs a codebook set");
    const float d = fp16_to_fp32(block.d);
    for (std::size_t g = 0; g < kSubgroupsPerSuperblock; ++g) {
        const std::size_t cb = block.codebook(g);
        const float e = d * static_cast<float>(block.sub_scale(g));
        for (std::size_t i = 0; i < kSubgroupSize; ++i) {
            const std::size_t idx = block.element(g * kSubgroupSize + i);
            if (cb >= codebooks.codebooks() || idx >= codebooks.centroids()) {
                fail(ErrorCode::invalid_argument, "superblock index outside the codebook set");
            }
            out[g * kSubgroupSize + i] = e * static_cast<float>(codebooks.at(cb, idx));
        }
    }
}

std::array<float, kSuperblockSize> decode_superblock(const GcqSuperblock& block, const CodebookSet& codebooks) {
    std::array<float, kSuperblockSize> out;
    decode_superblock(block, codebooks, out);
    return out;
}

GcqTensor quantize_tensor_gcq(std::span<const float> values, std::size_t rows, std::size_t k,
                              const CodebookSet& codebooks, const GcqEncodeOptions& options) {
    if (rows == 0 || k == 0 || k % kSuperblockSize != 0) {
        fail(ErrorCode::shape_mismatch, "GCQ2 needs a positive shape with k % 256 == 0");
    }
    if (values.size() != rows * k) fail(ErrorCode::shape_mismatch, "tensor data does not match rows x k");
    check_encodable(codebooks);

    GcqTensor t;
    const std::size_t count = values.size() / kSuperblockSize;
    t.blocks.reserve(count);
    double sse = 0.0;
    std::array<float, kSuperblockSize> hat;
    for (std::size_t b = 0; b < count; ++b) {
        const auto src = values.subspan(b * kSuperblockSize, kSuperblockSize);
        t.blocks.push_back(encode_superblock(src, codebooks, options));
        decode_superblock(t.blocks.back(), codebooks, hat);
        for (std::size_t i = 0; i < kSuperblockSize; ++i) {
            const double e = static_cast<double>(src[i]) - static_cast<double>(hat[i]);
            sse += e * e;
            t.report.max_abs_error = std::max(t.report.max_abs_error, std::fabs(e));
        }
    }
    t.report.mse = sse / static_cast<double>(values.size());
    return t;
}

std::vector<float> dequantize_gcq(std::span<const GcqSuperblock> blocks, const CodebookSet& codebooks) {
    std::vector<float> out(blocks.size() * kSuperblockSize);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        decode_superblock(blocks[b], codebooks, std::span<float>(out).subspan(b * kSuperblockSize, kSuperblockSize));
    }
    return out;
}

std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t cap) {
    const std::size_t n = std::min(total, cap);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        idx[i] = total <= cap ? i
                              : static_cast<std::size_t>(static_cast<unsigned __int128>(i) * total / cap);
    }
    return idx;
}

CodebookSet build_codebooks_from_tensors(std::span<const std::span<const float>> tensors,
                                         const CodebookBuildOptions& options) {
    struct Ref {
        std::size_t tensor;
        std::size_t offset;
    };
    std::vector<Ref> candidates;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        const auto values = tensors[t];
        if (values.size() % kSubgroupSize != 0) {
            fail(ErrorCode::shape_mismatch, "tensor " + std::to_string(t) + " is not a whole number of sub-groups");
        }
        require_finite(values);
        for (std::size_t off = 0; off < values.size(); off += kSubgroupSize) {
            if (amax_of(values.subspan(off, kSubgroupSize)) > 0.0f) candidates.push_back({t, off});
        }
    }
    if (candidates.size() < options.codebooks) {
        fail(ErrorCode::invalid_argument, "need at least " + std::to_string(options.codebooks) +
                                              " nonzero sub-groups, got " + std::to_string(candidates.size()));
    }

    const auto keep = subsample_indices(candidates.size(), options.max_subgroups);
    std::vector<float> scaled;
    scaled.reserve(keep.size() * kSubgroupSize);
    for (std::size_t i : keep) {
        const Ref ref = candidates[i];
        const ScaledGroup g = scale_group(tensors[ref.tensor].subspan(ref.offset, kSubgroupSize));
        scaled.insert(scaled.end(), g.values.begin(), g.values.end());
    }

    const auto dists = build_distributions(scaled);
    const KMeansResult clusters = cluster_distributions(dists, options.codebooks, options.kmeans);
    return build_codebooks(scaled, clusters.labels, options.codebooks, options.centroids, options.kmeans);
}

}  // namespace qk
