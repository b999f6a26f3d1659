#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace qk {

inline constexpr std::size_t kSuperblockSize = 256;
inline constexpr std::size_t kSubgroupSize = 16;
inline constexpr std::size_t kSubgroupsPerSuperblock = kSuperblockSize / kSubgroupSize;
inline constexpr std::size_t kMaxTableEntries = 16;  // one 128-bit register of int8

/// C codebooks of K signed 8-bit centroids, stored as one flat table
/// (codebook-major) small enough to live in a single vector register.
class CodebookSet {
public:
    CodebookSet() = default;

    /// Validates shape, range, and strict ascending order of each codebook.
    CodebookSet(std::size_t codebooks, std::size_t centroids, std::vector<std::int8_t> table);

    std::size_t codebooks() const noexcept { return codebooks_; }
    std::size_t centroids() const noexcept { return centroids_; }
    bool empty() const noexcept { return table_.empty(); }

    std::span<const std::int8_t> table() const noexcept { return table_; }
    std::span<const std::int8_t> codebook(std::size_t c) const noexcept {
        return std::span<const std::int8_t>(table_).subspan(c * centroids_, centroids_);
    }
    std::int8_t at(std::size_t c, std::size_t k) const noexcept { return table_[c * centroids_ + k]; }

    /// Table zero-extended to 16 entries for register lookup.
    std::array<std::int8_t, kMaxTableEntries> padded_table() const noexcept;

    friend bool operator==(const CodebookSet&, const CodebookSet&) = default;

private:
    std::size_t codebooks_ = 0;
    std::size_t centroids_ = 0;
    std::vector<std::int8_t> table_;
};

/// 256 weights in 78 bytes: FP16 super-scale, 16 four-bit sub-scales,
/// 16 two-bit codebook indices, 256 two-bit centroid indices. Packed
/// fields are LSB-first within each byte.
struct GcqSuperblock {
    std::uint16_t d = 0;
    std::array<std::uint8_t, 8> sub_scales{};
    std::array<std::uint8_t, 4> cb_idx{};
    std::array<std::uint8_t, 64> elem_idx{};

    std::uint8_t sub_scale(std::size_t g) const noexcept {
        return static_cast<std::uint8_t>((sub_scales[g / 2] >> (4 * (g % 2))) & 0x0f);
    }
    std::uint8_t codebook(std::size_t g) const noexcept {
        return static_cast<std::uint8_t>((cb_idx[g / 4] >> (2 * (g % 4))) & 0x03);
    }
    std::uint8_t element(std::size_t i) const noexcept {
        return static_cast<std::uint8_t>((elem_idx[i / 4] >> (2 * (i % 4))) & 0x03);
    }

    void set_sub_scale(std::size_t g, std::uint8_t v) noexcept;
    void set_codebook(std::size_t g, std::uint8_t v) noexcept;
    void set_element(std::size_t i, std::uint8_t v) noexcept;

    friend bool operator==(const GcqSuperblock&, const GcqSuperblock&) = default;
};

static_assert(sizeof(GcqSuperblock) == 78, "GCQ2 superblock must be 78 bytes");

std::vector<std::uint8_t> to_bytes(std::span<const GcqSuperblock> blocks);
std::vector<GcqSuperblock> gcq2_from_bytes(std::span<const std::uint8_t> bytes);

}  // namespace qk
