#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "qk/blockquant.hpp"
#include "qk/common.hpp"
#include "qk/gcq.hpp"
#include "qk/kernels.hpp"
#include "qk/repack.hpp"
#include "qk/simd.hpp"
#include "qk/tensorio.hpp"
#include "synthetic.hpp"

namespace qk::cli {

namespace {

class Reporter {
public:
    explicit Reporter(std::ostream& out) : out_(out) {}

    void check(const std::string& name, bool ok, const std::string& detail = {}) {
        out_ << (ok ? "PASS " : "FAIL ") << name;
        if (!detail.empty()) out_ << "  " << detail;
        out_ << '\n';
        all_ = all_ && ok;
    }
    bool all() const noexcept { return all_; }

private:
    std::ostream& out_;
    bool all_ = true;
};

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

double relative_error(std::span<const float> got, std::span<const float> want) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        num = std::max(num, std::fabs(static_cast<double>(got[i]) - want[i]));
        den = std::max(den, std::fabs(static_cast<double>(want[i])));
    }
    return den == 0.0 ? num : num / den;
}

void suite_decode(Reporter& r) {
    int ok = 0;
    for (int b = 0; b < 256; ++b) {
        const auto u = static_cast<std::uint8_t>(b);
        const auto fast = fast_decode_byte(toggle_msb(u));
        const auto ref = reference_decode_byte(u);
        if (fast.lo == 16 * ref.lo && fast.hi == 16 * ref.hi) ++ok;
    }
    r.check("decode.exhaustive", ok == 256, std::to_string(ok) + "/256");

    int simd_ok = 0;
    for (int base = 0; base < 256; base += 16) {
        std::uint8_t bytes[16];
        for (int i = 0; i < 16; ++i) bytes[i] = static_cast<std::uint8_t>(base + i);
        const auto v = simd::native::load(bytes);
        std::int8_t lo[16];
        std::int8_t hi[16];
        simd::native::store(lo, simd::native::shl4(v));
        simd::native::store(hi, simd::native::mask_hi(v));
        for (int i = 0; i < 16; ++i) {
            const auto want = fast_decode_byte(bytes[i]);
            if (lo[i] == want.lo && hi[i] == want.hi) ++simd_ok;
        }
    }
    r.check("decode.vector", simd_ok == 256, std::to_string(simd_ok) + "/256 lanes (" +
                                                 std::string(simd::native::kBackend) + ")");
}

void suite_roundtrip(Reporter& r, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    int repack_ok = 0;
    constexpr int kRepackCases = 60;
    const Variant variants[] = {Variant::x4b4(), Variant::x4b8(), Variant::x8b8()};
    for (int i = 0; i < kRepackCases; ++i) {
        const Variant v = variants[i % 3];
        const std::size_t n = 1 + rng() % 19;
        const std::size_t g = 1 + rng() % 6;
        const auto w = quantize_q4_0(synth::uniform_values(n * g * 32, rng()));
        if (unpack_weights(repack_weights(w, n, v)) == w) ++repack_ok;
    }
    r.check("roundtrip.repack", repack_ok == kRepackCases,
            std::to_string(repack_ok) + "/" + std::to_string(kRepackCases));

    int act_ok = 0;
    for (int i = 0; i < 24; ++i) {
        const int mr = i % 2 ? 4 : 2;
        const int chunk = i % 4 < 2 ? 4 : 8;
        const std::size_t rows = 1 + rng() % 9;
        const std::size_t g = 1 + rng() % 4;
        const auto a = quantize_q8_0(synth::uniform_values(rows * g * 32, rng()));
        if (unpack_activations(repack_activations(a, rows, mr, chunk)) == a) ++act_ok;
    }
    r.check("roundtrip.activations", act_ok == 24, std::to_string(act_ok) + "/24");

    Container c;
    const auto f = synth::uniform_values(4 * 256, rng());
    c.tensors.push_back(make_fp32_tensor("w.fp32", {4, 256}, f));
    {
        const auto q = quantize_q4_0(f);
        c.tensors.push_back({make_meta("w.q4", DType::q4_0, {4, 256}), to_bytes(std::span<const BlockQ4_0>(q))});
        const auto iw = repack_weights(q, 4, Variant::x4b8());
        c.tensors.push_back({make_meta("w.q4x4b8", DType::q4_0x4b8, {4, 256}), iw.bytes});
        const auto q8 = quantize_q8_0(f);
        c.tensors.push_back({make_meta("w.q8", DType::q8_0, {4, 256}), to_bytes(std::span<const BlockQ8_0>(q8))});
    }
    CodebookSet cbs(2, 4, {-90, -30, 30, 90, -110, -10, 10, 110});
    const auto gq = quantize_tensor_gcq(f, 4, 256, cbs);
    c.tensors.push_back(
        {make_meta("w.gcq2", DType::gcq2, {4, 256}), to_bytes(std::span<const GcqSuperblock>(gq.blocks))});
    c.codebooks = cbs;
    const auto bytes = write_container(c);
    Container back = read_container(bytes);
    bool same = back.codebooks == c.codebooks && back.tensors.size() == c.tensors.size();
    for (std::size_t i = 0; same && i < c.tensors.size(); ++i) {
        same = back.tensors[i].payload == c.tensors[i].payload && back.tensors[i].meta.name == c.tensors[i].meta.name &&
               back.tensors[i].meta.dtype == c.tensors[i].meta.dtype && back.tensors[i].meta.dims == c.tensors[i].meta.dims;
    }
    r.check("roundtrip.container", same, std::to_string(c.tensors.size()) + " tensors, " +
                                             std::to_string(bytes.size()) + " bytes");

    int trunc_ok = 0;
    constexpr int kTruncations = 32;
    for (int i = 0; i < kTruncations; ++i) {
        const std::size_t cut = rng() % bytes.size();
        try {
            read_container(std::span<const std::uint8_t>(bytes).first(cut));
        } catch (const Error&) {
            ++trunc_ok;
        }
    }
    r.check("roundtrip.truncation", trunc_ok == kTruncations,
            std::to_string(trunc_ok) + "/" + std::to_string(kTruncations) + " truncations rejected");
}

void suite_kernel_equiv(Reporter& r, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Variant variants[] = {Variant::x4b4(), Variant::x4b8(), Variant::x8b8()};
    double worst = 0.0;
    bool sums_ok = true;
    bool counters_ok = true;
    constexpr int kCases = 40;
    for (int i = 0; i < kCases; ++i) {
        const Variant v = variants[i % 3];
        const bool gemv = i % 4 == 0;
        const GemmShape shape{gemv ? 1 : 1 + rng() % 9, 1 + rng() % 40, 32 * (1 + rng() % 8)};
        const auto w = quantize_q4_0(synth::uniform_values(shape.n * shape.k, rng()));
        const auto xf = synth::uniform_values(shape.m * shape.k, rng());
        const auto x = dynamic_quantize_rows(xf, shape.m, shape.k);
        const std::size_t entries = shape.m * shape.n * shape.groups();

        std::vector<std::int32_t> ref_sums(entries);
        std::vector<std::int32_t> opt_sums(entries);
        PerfCounters rc;
        PerfCounters oc;
        const auto ref = gemm_ref(w, x, shape, {&rc, ref_sums});
        const auto iw = repack_weights(w, shape.n, v);
        const int mr = i % 2 ? 4 : 2;
        const KernelConfig cfg{v, mr, 1 + static_cast<int>(rng() % 3)};
        const auto opt = gemv ? gemv_opt(iw, x, shape, cfg, {&oc, opt_sums})
                              : gemm_opt(iw, repack_activations(x, shape.m, mr, v.chunk), shape, cfg, {&oc, opt_sums});
        worst = std::max(worst, relative_error(opt, ref));
        for (std::size_t e = 0; e < entries; ++e) sums_ok = sums_ok && opt_sums[e] == 16 * ref_sums[e];
        counters_ok = counters_ok && rc.reduction_ops == entries && oc.reduction_ops <= shape.m * shape.n &&
                      oc.int_mac_ops >= rc.int_mac_ops;
    }
    r.check("kernel-equiv.relative-error", worst <= 1e-5, "max rel error " + fmt(worst));
    r.check("kernel-equiv.group-sums", sums_ok, "opt == 16 * ref on every group");
    r.check("kernel-equiv.counters", counters_ok);

    double gcq_worst = 0.0;
    CodebookSet cbs(4, 4, {-96, -23, 24, 96, -105, -66, 66, 105, -106, -31, 9, 90, -99, -33, 32, 99});
    for (int i = 0; i < 10; ++i) {
        const GemmShape shape{1, 1 + rng() % 24, 256 * (1 + rng() % 3)};
        const auto wf = synth::uniform_values(shape.n * shape.k, rng());
        const auto blocks = quantize_tensor_gcq(wf, shape.n, shape.k, cbs).blocks;
        const auto x = dynamic_quantize_rows(synth::uniform_values(shape.k, rng()), 1, shape.k);
        const auto got = gemv_gcq(blocks, cbs, x, shape);
        const auto wd = dequantize_gcq(blocks, cbs);
        const auto xd = dequantize_q8_0(x);
        std::vector<float> want(shape.n);
        for (std::size_t n = 0; n < shape.n; ++n) {
            double s = 0.0;
            for (std::size_t k = 0; k < shape.k; ++k) s += static_cast<double>(wd[n * shape.k + k]) * xd[k];
            want[n] = static_cast<float>(s);
        }
        gcq_worst = std::max(gcq_worst, relative_error(got, want));
    }
    r.check("kernel-equiv.gcq", gcq_worst <= 1e-4, "max rel error " + fmt(gcq_worst));
}

void suite_gcq_mse(Reporter& r, std::uint64_t seed) {
    const auto train = synth::mixed_superblocks(2000, seed);
    const auto test = synth::mixed_superblocks(2000, seed + 1);
    const std::vector<std::span<const float>> views{train};
    CodebookBuildOptions opts;
    opts.kmeans.seed = seed;
    const CodebookSet cbs = build_codebooks_from_tensors(views, opts);
    const double gcq = quantize_tensor_gcq(test, test.size() / kSuperblockSize, kSuperblockSize, cbs).report.mse;
    const double uni = synth::uniform2_mse(test);
    const double gain = 1.0 - gcq / uni;
    r.check("gcq-mse.vs-uniform-2bit", gcq < uni, "gcq " + fmt(gcq) + " uniform " + fmt(uni) + " gain " + fmt(gain));

    std::mt19937_64 rng(seed);
    bool argmin_ok = true;
    for (int i = 0; i < 2000 && argmin_ok; ++i) {
        std::array<float, kSubgroupSize> v;
        for (float& x : v) x = std::uniform_real_distribution<float>(-127.0f, 127.0f)(rng);
        const CodebookChoice choice = assign_codebook(v, cbs);
        for (std::size_t c = 0; c < cbs.codebooks(); ++c) argmin_ok = argmin_ok && choice.mse <= codebook_mse(v, cbs.codebook(c));
    }
    r.check("gcq-mse.argmin", argmin_ok, "2000 random sub-groups");
}

}  // namespace

bool run_verify_suite(const std::string& suite, std::uint64_t seed, std::ostream& out) {
    Reporter r(out);
    if (suite == "decode") {
        suite_decode(r);
    } else if (suite == "roundtrip") {
        suite_roundtrip(r, seed);
    } else if (suite == "kernel-equiv") {
        suite_kernel_equiv(r, seed);
    } else if (suite == "gcq-mse") {
        suite_gcq_mse(r, seed);
    } else {
        r.check("suite." + suite, false, "unknown suite");
    }
    return r.all();
}

}  // namespace qk::cli
