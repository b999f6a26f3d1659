#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qk/codebook.hpp"
#include "qk/dtype.hpp"

namespace qk {

// Container layout (all integers little-endian):
//
//   header   16 B   "QTNZ" | u32 version | u32 tensor_count | u32 has_codebooks
//   codebook        u8 C | u8 K | C*K int8            (only if has_codebooks)
//   table           per tensor: u32 name_len | name | u32 dtype | u32 ndims |
//                   u64 dims[ndims] | u64 data_offset | u64 data_size
//   payloads        each at a 64-byte aligned absolute offset, zero padded
inline constexpr std::array<char, 4> kContainerMagic = {'Q', 'T', 'N', 'Z'};
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kPayloadAlignment = 64;
inline constexpr std::size_t kHeaderBytes = 16;

struct TensorMeta {
    std::string name;
    DType dtype = DType::fp32;
    std::vector<std::uint64_t> dims;
    std::uint64_t data_offset = 0;  // assigned by the writer
    std::uint64_t data_size = 0;

    std::uint64_t element_count() const noexcept;
    /// Product of all but the innermost extent.
    std::uint64_t rows() const noexcept;
    /// Innermost (input-channel) extent.
    std::uint64_t cols() const noexcept;

    friend bool operator==(const TensorMeta&, const TensorMeta&) = default;
};

struct Tensor {
    TensorMeta meta;
    std::vector<std::uint8_t> payload;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct Container {
    std::optional<CodebookSet> codebooks;
    std::vector<Tensor> tensors;

    const Tensor* find(std::string_view name) const noexcept;
    Tensor* find(std::string_view name) noexcept;

    friend bool operator==(const Container&, const Container&) = default;
};

/// Exact payload size for a tensor; throws if dims violate the dtype's group
/// alignment or are empty/zero.
std::uint64_t payload_size(DType dtype, std::span<const std::uint64_t> dims);

/// Builds a meta with data_size filled from the size formula.
TensorMeta make_meta(std::string name, DType dtype, std::vector<std::uint64_t> dims);

std::vector<std::uint8_t> write_container(std::span<const Tensor> tensors,
                                          const std::optional<CodebookSet>& codebooks);
inline std::vector<std::uint8_t> write_container(const Container& c) {
    return write_container(c.tensors, c.codebooks);
}

Container read_container(std::span<const std::uint8_t> bytes);

/// Wraps raw row-major little-endian float32 bytes as an FP32 tensor.
Tensor import_raw_f32(std::string name, std::span<const std::uint64_t> dims,
                      std::span<const std::uint8_t> raw);
Tensor import_raw_f32_file(std::string name, std::span<const std::uint64_t> dims,
                           const std::filesystem::path& path);

/// FP32 tensor from values (copied).
Tensor make_fp32_tensor(std::string name, std::vector<std::uint64_t> dims,
                        std::span<const float> values);
std::vector<float> tensor_as_f32(const Tensor& t);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Container load_container(const std::filesystem::path& path);
void save_container(const std::filesystem::path& path, const Container& c);

}  // namespace qk
