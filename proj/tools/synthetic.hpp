#pragma once

// Deterministic synthetic weights with planted distribution shapes.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace qk::synth {

enum class Shape { gaussian, laplacian, student_t, uniform, bimodal };
inline constexpr std::size_t kShapeCount = 5;

std::string_view shape_name(Shape s) noexcept;

/// `n` samples of one shape with unit-ish spread.
std::vector<float> samples(Shape shape, std::size_t n, std::uint64_t seed);

/// `count` 256-value superblocks; superblock b follows shape b % kShapeCount
/// and each 16-value sub-group carries a mild random magnitude.
std::vector<float> mixed_superblocks(std::size_t count, std::uint64_t seed);

/// Uniformly random values in [-1, 1).
std::vector<float> uniform_values(std::size_t n, std::uint64_t seed);

/// Symmetric 2-bit group quantizer over 16-value groups with levels
/// {-2, -1, 0, 1} * d, d = m / -2 for the max-magnitude element m.
/// Returns the aggregate reconstruction MSE.
double uniform2_mse(std::span<const float> values);

}  // namespace qk::synth
