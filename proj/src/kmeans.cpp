#include "qk/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "qk/common.hpp"

namespace qk {

namespace {

double squared_distance(const double* a, const double* b, std::size_t dim) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        const double t = a[i] - b[i];
        s += t * t;
    }
    return s;
}

// Uniform in [0, 1) from the top 53 bits; mt19937_64 output is fully specified,
// unlike the standard distributions.
double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<double> seed_plus_plus(const std::vector<double>& pts, std::size_t n, std::size_t dim, std::size_t k,
                                   std::mt19937_64& rng) {
    std::vector<double> centers;
    centers.reserve(k * dim);
    const std::size_t first = static_cast<std::size_t>(rng() % n);
    centers.insert(centers.end(), pts.begin() + first * dim, pts.begin() + (first + 1) * dim);

    std::vector<double> nearest(n);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = squared_distance(&pts[i * dim], centers.data(), dim);

    for (std::size_t c = 1; c < k; ++c) {
        const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = unit_draw(rng) * total;
            double run = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                run += nearest[i];
                if (run > target && nearest[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        centers.insert(centers.end(), pts.begin() + pick * dim, pts.begin() + (pick + 1) * dim);
        const double* cnew = &centers[c * dim];
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(&pts[i * dim], cnew, dim));
        }
    }
    return centers;
}

}  // namespace

KMeansResult kmeans(std::span<const double> data, std::size_t dim, std::size_t k, const KMeansOptions& options) {
    if (dim == 0 || data.size() % dim != 0) fail(ErrorCode::invalid_argument, "k-means data is not n x dim");
    const std::size_t n = data.size() / dim;
    if (k == 0) fail(ErrorCode::invalid_argument, "k-means needs k >= 1");
    if (n < k) {
        fail(ErrorCode::invalid_argument,
             "k-means needs at least k points (" + std::to_string(n) + " < " + std::to_string(k) + ")");
    }

    // Canonical (lexicographic) visiting order makes the result independent of input order.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::lexicographical_compare(data.begin() + a * dim, data.begin() + (a + 1) * dim,
                                            data.begin() + b * dim, data.begin() + (b + 1) * dim);
    });
    std::vector<double> pts(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(data.begin() + order[i] * dim, dim, pts.begin() + i * dim);
    }

    std::mt19937_64 rng(options.seed);
    KMeansResult res;
    res.centroids = seed_plus_plus(pts, n, dim, k, rng);

    std::vector<std::uint32_t> labels(n, 0);
    std::vector<double> dist(n, 0.0);
    std::vector<std::size_t> counts(k);
    double previous = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < std::max(options.max_iterations, 1); ++iter) {
        // Assignment (ties to the lower centroid index).
        double inertia = 0.0;
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t best = 0;
            double best_d = squared_distance(&pts[i * dim], &res.centroids[0], dim);
            for (std::size_t c = 1; c < k; ++c) {
                const double d = squared_distance(&pts[i * dim], &res.centroids[c * dim], dim);
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<std::uint32_t>(c);
                }
            }
            labels[i] = best;
            dist[i] = best_d;
            inertia += best_d;
            ++counts[best];
        }

        // Reseed empty clusters at the point farthest from its centroid.
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[labels[i]] > 1 && (far == n || dist[i] > dist[far])) far = i;
            }
            if (far == n) break;
            std::copy_n(pts.begin() + far * dim, dim, res.centroids.begin() + c * dim);
            --counts[labels[far]];
            ++counts[c];
            inertia -= dist[far];
            labels[far] = static_cast<std::uint32_t>(c);
            dist[far] = 0.0;
        }

        res.inertia_history.push_back(inertia);
        res.inertia = inertia;
        res.iterations = iter + 1;
        const bool converged =
            inertia == 0.0 || (std::isfinite(previous) && (previous - inertia) <= options.relative_tolerance * previous);
        if (converged || iter + 1 >= options.max_iterations) break;
        previous = inertia;

        // Update step.
        std::vector<double> sums(k * dim, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double* s = &sums[labels[i] * dim];
            for (std::size_t j = 0; j < dim; ++j) s[j] += pts[i * dim + j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t j = 0; j < dim; ++j) {
                res.centroids[c * dim + j] = sums[c * dim + j] / static_cast<double>(counts[c]);
            }
        }
    }

    res.labels.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) res.labels[order[i]] = labels[i];
    return res;
}

double kmeans_inertia(std::span<const double> data, std::size_t dim, std::span<const double> centroids,
                      std::span<const std::uint32_t> labels) {
    double s = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        s += squared_distance(&data[i * dim], &centroids[labels[i] * dim], dim);
    }
    return s;
}

}  // namespace qk
