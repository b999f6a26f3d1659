#include "qk/codebook.hpp"

#include <cstring>
#include <string>

#include "qk/common.hpp"

namespace qk {

CodebookSet::CodebookSet(std::size_t codebooks, std::size_t centroids, std::vector<std::int8_t> table)
    : codebooks_(codebooks), centroids_(centroids), table_(std::move(table)) {
    if (codebooks_ == 0 || centroids_ == 0) {
        fail(ErrorCode::invalid_argument, "codebook set needs at least one codebook and one centroid");
    }
    if (codebooks_ * centroids_ > kMaxTableEntries) {
        fail(ErrorCode::codebook_too_large,
             std::to_string(codebooks_) + "x" + std::to_string(centroids_) +
                 " centroids do not fit a 16-entry table");
    }
    if (table_.size() != codebooks_ * centroids_) {
        fail(ErrorCode::size_mismatch, "codebook table has " + std::to_string(table_.size()) +
                                           " entries, expected " + std::to_string(codebooks_ * centroids_));
    }
    for (std::size_t c = 0; c < codebooks_; ++c) {
        for (std::size_t k = 0; k < centroids_; ++k) {
            const int v = at(c, k);
            if (v < -127) fail(ErrorCode::invalid_argument, "centroid -128 is outside [-127, 127]");
            if (k > 0 && at(c, k - 1) >= v) {
                fail(ErrorCode::duplicate_centroid,
                     "codebook " + std::to_string(c) + " is not strictly ascending");
            }
        }
    }
}

std::array<std::int8_t, kMaxTableEntries> CodebookSet::padded_table() const noexcept {
    std::array<std::int8_t, kMaxTableEntries> t{};
    for (std::size_t i = 0; i < table_.size(); ++i) t[i] = table_[i];
    return t;
}

void GcqSuperblock::set_sub_scale(std::size_t g, std::uint8_t v) noexcept {
    const unsigned shift = 4 * (g % 2);
    auto& b = sub_scales[g / 2];
    b = static_cast<std::uint8_t>((b & ~(0x0fu << shift)) | ((v & 0x0fu) << shift));
}

void GcqSuperblock::set_codebook(std::size_t g, std::uint8_t v) noexcept {
    const unsigned shift = 2 * (g % 4);
    auto& b = cb_idx[g / 4];
    b = static_cast<std::uint8_t>((b & ~(0x03u << shift)) | ((v & 0x03u) << shift));
}

void GcqSuperblock::set_element(std::size_t i, std::uint8_t v) noexcept {
    const unsigned shift = 2 * (i % 4);
    auto& b = elem_idx[i / 4];
    b = static_cast<std::uint8_t>((b & ~(0x03u << shift)) | ((v & 0x03u) << shift));
}

std::vector<std::uint8_t> to_bytes(std::span<const GcqSuperblock> blocks) {
    std::vector<std::uint8_t> out(blocks.size() * sizeof(GcqSuperblock));
    if (!blocks.empty()) std::memcpy(out.data(), blocks.data(), out.size());
    return out;
}

std::vector<GcqSuperblock> gcq2_from_bytes(std::span<const std::uint8_t> bytes) {
    if (bytes.size() % sizeof(GcqSuperblock) != 0) {
        fail(ErrorCode::bad_length, "GCQ2 payload of " + std::to_string(bytes.size()) +
                                        " bytes is not a whole number of superblocks");
    }
    std::vector<GcqSuperblock> out(bytes.size() / sizeof(GcqSuperblock));
    if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

}  // namespace qk
