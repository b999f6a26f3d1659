#include <cstring>

#include "qk/common.hpp"
#include "qk/kernels.hpp"

namespace qk {

std::vector<BlockQ8_0> dynamic_quantize_rows(std::span<const float> activations, std::size_t rows, std::size_t k) {
    if (rows == 0 || k == 0 || k % kQ4GroupSize != 0 || activations.size() != rows * k) {
        fail(ErrorCode::shape_mismatch, "activations must be rows x k with k % 32 == 0");
    }
    return quantize_q8_0(activations);
}

InterleavedActivations dynamic_quantize_interleaved(std::span<const float> activations, std::size_t rows,
                                                    std::size_t k, int rows_per_tile, int chunk) {
    if (rows == 0 || k == 0 || k % kQ4GroupSize != 0 || activations.size() != rows * k) {
        fail(ErrorCode::shape_mismatch, "activations must be rows x k with k % 32 == 0");
    }
    if (rows_per_tile != 2 && rows_per_tile != 4) fail(ErrorCode::invalid_argument, "activation tiles hold 2 or 4 rows");
    if (chunk != 4 && chunk != 8) fail(ErrorCode::invalid_argument, "activation chunk must be 4 or 8 bytes");

    InterleavedActivations a;
    a.rows_per_tile = rows_per_tile;
    a.chunk = chunk;
    a.rows = rows;
    a.k = k;
    const std::size_t groups = a.groups();
    a.bytes.resize(a.row_tiles() * groups * a.tile_bytes());

    const auto mr = static_cast<std::size_t>(rows_per_tile);
    const auto b = static_cast<std::size_t>(chunk);
    for (std::size_t t = 0; t < a.row_tiles(); ++t) {
        for (std::size_t g = 0; g < groups; ++g) {
            std::uint8_t* tile = a.bytes.data() + (t * groups + g) * a.tile_bytes();
            std::uint8_t* data = tile + 2 * mr;
            for (std::size_t r = 0; r < mr; ++r) {
                const std::size_t row = t * mr + r;
                if (row >= rows) break;  // pad rows stay zero
                const BlockQ8_0 blk = quantize_block_q8_0(activations.subspan(row * k + g * kQ4GroupSize).first<32>());
                std::memcpy(tile + 2 * r, &blk.d, 2);
                for (std::size_t c = 0; c < 32 / b; ++c) std::memcpy(data + (c * mr + r) * b, blk.qs.data() + c * b, b);
            }
        }
    }
    return a;
}

}  // namespace qk
