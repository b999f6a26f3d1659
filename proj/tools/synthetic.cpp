#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "qk/fp16.hpp"

namespace qk::synth {

std::string_view shape_name(Shape s) noexcept {
    switch (s) {
        case Shape::gaussian: return "gaussian";
        case Shape::laplacian: return "laplacian";
        case Shape::student_t: return "student-t3";
        case Shape::uniform: return "uniform";
        case Shape::bimodal: return "bimodal";
    }
    return "?";
}

namespace {

float draw(Shape shape, std::mt19937_64& rng) {
    switch (shape) {
        case Shape::gaussian: return static_cast<float>(std::normal_distribution<double>(0.0, 1.0)(rng));
        case Shape::laplacian: {
            const double e = std::exponential_distribution<double>(1.0)(rng);
            return static_cast<float>((rng() & 1) ? e : -e);
        }
        case Shape::student_t: return static_cast<float>(std::student_t_distribution<double>(3.0)(rng));
        case Shape::uniform: return static_cast<float>(std::uniform_real_distribution<double>(-1.0, 1.0)(rng));
        case Shape::bimodal: {
            const double c = (rng() & 1) ? 1.0 : -1.0;
            return static_cast<float>(c + std::normal_distribution<double>(0.0, 0.25)(rng));
        }
    }
    return 0.0f;
}

}  // namespace

std::vector<float> samples(Shape shape, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<float> out(n);
    for (float& v : out) v = draw(shape, rng);
    return out;
}

std::vector<float> mixed_superblocks(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::lognormal_distribution<double> magnitude(0.0, 0.25);
    std::vector<float> out;
    out.reserve(count * 256);
    for (std::size_t b = 0; b < count; ++b) {
        const auto shape = static_cast<Shape>(b % kShapeCount);
        for (int g = 0; g < 16; ++g) {
            const auto m = static_cast<float>(0.02 * magnitude(rng));
            for (int i = 0; i < 16; ++i) out.push_back(m * draw(shape, rng));
        }
    }
    return out;
}

std::vector<float> uniform_values(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> out(n);
    for (float& v : out) v = u(rng);
    return out;
}

double uniform2_mse(std::span<const float> values) {
    double sse = 0.0;
    for (std::size_t off = 0; off < values.size(); off += 16) {
        const auto g = values.subspan(off, std::min<std::size_t>(16, values.size() - off));
        float m = 0.0f;
        for (float v : g) {
            if (std::fabs(v) > std::fabs(m)) m = v;
        }
        const float d = round_to_fp16(m / -2.0f);
        for (float v : g) {
            float hat = 0.0f;
            if (d != 0.0f) hat = d * (std::clamp(std::round(v / d) + 2.0f, 0.0f, 3.0f) - 2.0f);
            const double e = static_cast<double>(v) - hat;
            sse += e * e;
        }
    }
    return values.empty() ? 0.0 : sse / static_cast<double>(values.size());
}

}  // namespace qk::synth
