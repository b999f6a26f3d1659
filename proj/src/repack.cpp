#include "qk/repack.hpp"

#include <cstring>
#include <string>

#include "qk/common.hpp"

namespace qk {

namespace {

void put_u16(std::uint8_t* p, std::uint16_t v) noexcept { std::memcpy(p, &v, 2); }
std::uint16_t get_u16(const std::uint8_t* p) noexcept {
    std::uint16_t v;
    std::memcpy(&v, p, 2);
    return v;
}

// Pad channel: zero scale, signed-zero nibbles.
BlockQ4_0 pad_block() noexcept {
    BlockQ4_0 b;
    b.qs.fill(0x88);
    return b;
}

}  // namespace

void toggle_msb(std::span<std::uint8_t> bytes) noexcept {
    for (auto& b : bytes) b = toggle_msb(b);
}

std::size_t interleaved_weight_bytes(Variant v, std::size_t channels, std::size_t k) noexcept {
    const auto n = static_cast<std::size_t>(v.channels);
    return (channels + n - 1) / n * (k / kQ4GroupSize) * v.tile_bytes();
}

InterleavedWeights repack_weights(std::span<const BlockQ4_0> blocks, std::size_t n_channels, Variant variant) {
    if (!variant.valid()) fail(ErrorCode::invalid_argument, "unsupported interleave variant");
    if (n_channels == 0 || blocks.empty()) fail(ErrorCode::invalid_argument, "empty weight matrix");
    if (blocks.size() % n_channels != 0) {
        fail(ErrorCode::shape_mismatch, std::to_string(blocks.size()) + " blocks do not split evenly over " +
                                            std::to_string(n_channels) + " channels");
    }

    InterleavedWeights w;
    w.variant = variant;
    w.channels = n_channels;
    const std::size_t groups = blocks.size() / n_channels;
    w.k = groups * kQ4GroupSize;
    w.bytes.resize(interleaved_weight_bytes(variant, n_channels, w.k));

    const auto n = static_cast<std::size_t>(variant.channels);
    const auto chunk = static_cast<std::size_t>(variant.chunk);
    const BlockQ4_0 pad = pad_block();

    for (std::size_t s = 0; s < w.strips(); ++s) {
        for (std::size_t g = 0; g < groups; ++g) {
            std::uint8_t* tile = w.bytes.data() + s * w.strip_bytes() + g * variant.tile_bytes();
            std::uint8_t* data = tile + 2 * n;
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t ch = s * n + j;
                const BlockQ4_0& b = ch < n_channels ? blocks[ch * groups + g] : pad;
                put_u16(tile + 2 * j, b.d);
                for (std::size_t c = 0; c < 16 / chunk; ++c) {
                    std::uint8_t* dst = data + (c * n + j) * chunk;
                    for (std::size_t t = 0; t < chunk; ++t) dst[t] = toggle_msb(b.qs[c * chunk + t]);
                }
            }
        }
    }
    return w;
}

InterleavedWeights interleaved_from_bytes(std::vector<std::uint8_t> bytes, Variant variant, std::size_t channels,
                                          std::size_t k) {
    if (!variant.valid()) fail(ErrorCode::invalid_argument, "unsupported interleave variant");
    if (channels == 0 || k == 0 || k % kQ4GroupSize != 0) {
        fail(ErrorCode::shape_mismatch, "interleaved weights need channels > 0 and k % 32 == 0");
    }
    const std::size_t expected = interleaved_weight_bytes(variant, channels, k);
    if (bytes.size() < expected) {
        fail(ErrorCode::truncated, "interleaved weight stream has " + std::to_string(bytes.size()) +
                                       " bytes, expected " + std::to_string(expected));
    }
    if (bytes.size() != expected) {
        fail(ErrorCode::size_mismatch, "interleaved weight stream has " + std::to_string(bytes.size()) +
                                           " bytes, expected " + std::to_string(expected));
    }
    InterleavedWeights w;
    w.variant = variant;
    w.channels = channels;
    w.k = k;
    w.bytes = std::move(bytes);
    return w;
}

std::vector<BlockQ4_0> unpack_weights(const InterleavedWeights& w) {
    if (w.bytes.size() != interleaved_weight_bytes(w.variant, w.channels, w.k)) {
        fail(ErrorCode::truncated, "interleaved weight stream length does not match its shape");
    }
    const std::size_t groups = w.groups();
    const auto n = static_cast<std::size_t>(w.variant.channels);
    const auto chunk = static_cast<std::size_t>(w.variant.chunk);

    std::vector<BlockQ4_0> out(w.channels * groups);
    for (std::size_t s = 0; s < w.strips(); ++s) {
        for (std::size_t g = 0; g < groups; ++g) {
            const std::uint8_t* tile = w.tile(s, g);
            const std::uint8_t* data = tile + 2 * n;
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t ch = s * n + j;
                if (ch >= w.channels) break;
                BlockQ4_0& b = out[ch * groups + g];
                b.d = get_u16(tile + 2 * j);
                for (std::size_t c = 0; c < 16 / chunk; ++c) {
                    const std::uint8_t* src = data + (c * n + j) * chunk;
                    for (std::size_t t = 0; t < chunk; ++t) b.qs[c * chunk + t] = toggle_msb(src[t]);
                }
            }
        }
    }
    return out;
}

InterleavedActivations repack_activations(std::span<const BlockQ8_0> blocks, std::size_t rows, int rows_per_tile,
                                          int chunk) {
    if (rows_per_tile != 2 && rows_per_tile != 4) {
        fail(ErrorCode::invalid_argument, "activation tiles hold 2 or 4 rows");
    }
    if (chunk != 4 && chunk != 8) fail(ErrorCode::invalid_argument, "activation chunk must be 4 or 8 bytes");
    if (rows == 0 || blocks.empty() || blocks.size() % rows != 0) {
        fail(ErrorCode::shape_mismatch, "activation rows must all have the same length");
    }

    InterleavedActivations a;
    a.rows_per_tile = rows_per_tile;
    a.chunk = chunk;
    a.rows = rows;
    const std::size_t groups = blocks.size() / rows;
    a.k = groups * kQ4GroupSize;
    a.bytes.resize(a.row_tiles() * groups * a.tile_bytes());

    const auto mr = static_cast<std::size_t>(rows_per_tile);
    const auto b = static_cast<std::size_t>(chunk);
    const BlockQ8_0 pad{};
    for (std::size_t t = 0; t < a.row_tiles(); ++t) {
        for (std::size_t g = 0; g < groups; ++g) {
            std::uint8_t* tile = a.bytes.data() + (t * groups + g) * a.tile_bytes();
            std::uint8_t* data = tile + 2 * mr;
            for (std::size_t r = 0; r < mr; ++r) {
                const std::size_t row = t * mr + r;
                const BlockQ8_0& blk = row < rows ? blocks[row * groups + g] : pad;
                put_u16(tile + 2 * r, blk.d);
                for (std::size_t c = 0; c < 32 / b; ++c) {
                    std::memcpy(data + (c * mr + r) * b, blk.qs.data() + c * b, b);
                }
            }
        }
    }
    return a;
}

std::vector<BlockQ8_0> unpack_activations(const InterleavedActivations& a) {
    const std::size_t groups = a.groups();
    if (a.bytes.size() != a.row_tiles() * groups * a.tile_bytes()) {
        fail(ErrorCode::truncated, "interleaved activation stream length does not match its shape");
    }
    const auto mr = static_cast<std::size_t>(a.rows_per_tile);
    const auto b = static_cast<std::size_t>(a.chunk);
    std::vector<BlockQ8_0> out(a.rows * groups);
    for (std::size_t t = 0; t < a.row_tiles(); ++t) {
        for (std::size_t g = 0; g < groups; ++g) {
            const std::uint8_t* tile = a.tile(t, g);
            const std::uint8_t* data = tile + 2 * mr;
            for (std::size_t r = 0; r < mr; ++r) {
                const std::size_t row = t * mr + r;
                if (row >= a.rows) break;
                BlockQ8_0& blk = out[row * groups + g];
                blk.d = get_u16(tile + 2 * r);
                for (std::size_t c = 0; c < 32 / b; ++c) {
                    std::memcpy(blk.qs.data() + c * b, data + (c * mr + r) * b, b);
                }
            }
        }
    }
    return out;
}

}  // namespace qk
