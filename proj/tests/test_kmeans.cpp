#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "qk/common.hpp"
#include "qk/kmeans.hpp"

using namespace qk;

namespace {

// Three 2-D blobs far apart.
std::vector<double> blobs(std::size_t per_blob, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 0.3);
    const double centers[3][2] = {{0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}};
    std::vector<double> pts;
    for (std::size_t i = 0; i < per_blob; ++i) {
        for (const auto& c : centers) {
            pts.push_back(c[0] + nd(rng));
            pts.push_back(c[1] + nd(rng));
        }
    }
    return pts;
}

std::vector<double> random_points(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n * dim);
    for (double& x : v) x = u(rng);
    return v;
}

}  // namespace

TEST_CASE("separated blobs are recovered") {
    const auto pts = blobs(50, 1);
    const auto r = kmeans(pts, 2, 3, {7});
    // Points were emitted round-robin over the three blobs.
    for (std::size_t i = 3; i < r.labels.size(); ++i) CHECK(r.labels[i] == r.labels[i % 3]);
    std::set<std::uint32_t> distinct(r.labels.begin(), r.labels.end());
    CHECK(distinct.size() == 3);
    CHECK(r.inertia < 150 * 2 * 0.3 * 0.3 * 1.5);
}

TEST_CASE("inertia is non-increasing and matches the reported labels") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t dim = 1 + seed % 4;
        const auto pts = random_points(300, dim, seed);
        const std::size_t k = 2 + seed % 6;
        const auto r = kmeans(pts, dim, k, {seed});
        REQUIRE(!r.inertia_history.empty());
        CHECK(r.iterations == static_cast<int>(r.inertia_history.size()));
        CHECK(r.iterations <= 100);
        for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
            REQUIRE(r.inertia_history[i] <= r.inertia_history[i - 1] * (1 + 1e-12));
        }
        CHECK(r.inertia == r.inertia_history.back());
        CHECK(kmeans_inertia(pts, dim, r.centroids, r.labels) == doctest::Approx(r.inertia).epsilon(1e-9));
        CHECK(r.centroids.size() == k * dim);
    }
}

TEST_CASE("same seed, same result") {
    const auto pts = random_points(500, 3, 4);
    const auto a = kmeans(pts, 3, 5, {99});
    const auto b = kmeans(pts, 3, 5, {99});
    CHECK(a.centroids == b.centroids);
    CHECK(a.labels == b.labels);
    CHECK(a.inertia_history == b.inertia_history);
}

TEST_CASE("input order does not change the clustering") {
    const std::size_t dim = 2;
    const std::size_t n = 400;
    const auto pts = random_points(n, dim, 5);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(6));
    std::vector<double> shuffled(n * dim);
    for (std::size_t i = 0; i < n; ++i) std::copy_n(pts.begin() + perm[i] * dim, dim, shuffled.begin() + i * dim);

    const auto a = kmeans(pts, dim, 6, {3});
    const auto b = kmeans(shuffled, dim, 6, {3});
    CHECK(std::fabs(a.inertia - b.inertia) <= 1e-9 * a.inertia);
    CHECK(a.centroids == b.centroids);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(b.labels[i] == a.labels[perm[i]]);
}

TEST_CASE("duplicate points force an empty cluster that gets reseeded") {
    // Only two distinct points, so seeding must place two centers on the same spot.
    const std::vector<double> pts = {1.0, 1.0, 1.0, 5.0};
    const auto r = kmeans(pts, 1, 3, {0});
    std::set<std::uint32_t> used(r.labels.begin(), r.labels.end());
    CHECK(used.size() == 3);
    CHECK(r.inertia == 0.0);
}

TEST_CASE("one centroid is the mean") {
    const std::vector<double> pts = {1.0, 2.0, 3.0, 10.0};
    const auto r = kmeans(pts, 1, 1);
    CHECK(r.centroids[0] == doctest::Approx(4.0));
    for (auto l : r.labels) CHECK(l == 0);
}

TEST_CASE("k-means argument errors") {
    const std::vector<double> pts = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(kmeans(pts, 1, 4), Error);
    CHECK_THROWS_AS(kmeans(pts, 1, 0), Error);
    CHECK_THROWS_AS(kmeans(pts, 2, 1), Error);
    CHECK_THROWS_AS(kmeans(pts, 0, 1), Error);
}

TEST_CASE("iteration cap is honoured") {
    const auto pts = random_points(2000, 2, 8);
    KMeansOptions o{1, 2, 0.0};
    const auto r = kmeans(pts, 2, 16, o);
    CHECK(r.iterations <= 2);
}
