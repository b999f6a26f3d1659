#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace qk {

struct KMeansOptions {
    std::uint64_t seed = 0;
    int max_iterations = 100;
    double relative_tolerance = 1e-6;
};

struct KMeansResult {
    std::vector<double> centroids;     // k x dim, row-major
    std::vector<std::uint32_t> labels;  // one per observation
    double inertia = 0.0;
    /// Inertia after each assignment step; non-increasing.
    std::vector<double> inertia_history;
    int iterations = 0;
};

/// Lloyd's k-means on `n = data.size() / dim` points with k-means++ seeding.
///
/// Deterministic for a fixed seed and independent of input order: points are
/// visited in lexicographic order internally, labels are reported for the
/// caller's order. An empty cluster is reseeded to the point farthest from
/// its current centroid. Stops after `max_iterations` or when the relative
/// inertia change drops below `relative_tolerance`.
KMeansResult kmeans(std::span<const double> data, std::size_t dim, std::size_t k,
                    const KMeansOptions& options = {});

/// Sum of squared distances of each point to its labelled centroid.
double kmeans_inertia(std::span<const double> data, std::size_t dim, std::span<const double> centroids,
                      std::span<const std::uint32_t> labels);

}  // namespace qk
