#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

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

constexpr const char* kCountersHeader = "int_mac_ops,scale_convert_ops,reduction_ops,load_ops";
constexpr const char* kBenchHeader =
    "label,m,n,k,dtype,variant,impl,threads,repeat,median_ms,gops,int_mac_ops,scale_convert_ops,reduction_ops,"
    "load_ops";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::uint64_t> parse_extents(const std::string& text, const std::string& what) {
    std::vector<std::uint64_t> dims;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) throw UsageError("malformed " + what + " '" + text + "'");
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(cur, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != cur.size() || v == 0) throw UsageError("malformed " + what + " '" + text + "'");
        dims.push_back(v);
        cur.clear();
    };
    for (char c : text) {
        if (c == ',' || c == 'x' || c == 'X') {
            flush();
        } else {
            cur.push_back(c);
        }
    }
    flush();
    return dims;
}

struct TensorRef {
    std::string path;
    std::string tensor;
};

TensorRef parse_ref(const std::string& text) {
    const auto pos = text.rfind(':');
    if (pos == std::string::npos || pos == 0 || pos + 1 == text.size()) {
        throw UsageError("operand '" + text + "' must be container:tensor");
    }
    return {text.substr(0, pos), text.substr(pos + 1)};
}

const Tensor& require_tensor(const Container& c, const std::string& name) {
    const Tensor* t = c.find(name);
    if (!t) fail(ErrorCode::invalid_argument, "no tensor named '" + name + "'");
    return *t;
}

std::string dims_text(std::span<const std::uint64_t> dims) {
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "x" : "") + std::to_string(dims[i]);
    return s;
}

std::string bpw_text(std::uint64_t bytes, std::uint64_t elements) {
    std::ostringstream os;
    os << static_cast<double>(bytes) * 8.0 / static_cast<double>(elements);
    return os.str();
}

struct ErrorStats {
    double mse = 0.0;
    double max_abs = 0.0;
};

ErrorStats compare(std::span<const float> a, std::span<const float> b) {
    ErrorStats s;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double e = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s.mse += e * e;
        s.max_abs = std::max(s.max_abs, std::fabs(e));
    }
    if (!a.empty()) s.mse /= static_cast<double>(a.size());
    return s;
}

std::vector<BlockQ4_0> q4_blocks_of(const Tensor& t) {
    if (t.meta.dtype == DType::q4_0) return q4_0_from_bytes(t.payload);
    if (const auto v = variant_of(t.meta.dtype)) {
        return unpack_weights(interleaved_from_bytes(t.payload, *v, t.meta.rows(), t.meta.cols()));
    }
    fail(ErrorCode::invalid_argument, "tensor '" + t.meta.name + "' is " + std::string(dtype_name(t.meta.dtype)) +
                                          ", expected a Q4_0 family dtype");
}

std::vector<float> to_f32(const Tensor& t, const std::optional<CodebookSet>& codebooks) {
    switch (t.meta.dtype) {
        case DType::fp32:
        case DType::fp16: return tensor_as_f32(t);
        case DType::q8_0: return dequantize_q8_0(q8_0_from_bytes(t.payload));
        case DType::gcq2:
            if (!codebooks) fail(ErrorCode::missing_codebooks, "container has GCQ2 data but no codebooks");
            return dequantize_gcq(gcq2_from_bytes(t.payload), *codebooks);
        default: return dequantize_q4_0(q4_blocks_of(t));
    }
}

void print_counters(std::ostream& out, const PerfCounters& c) {
    out << kCountersHeader << '\n'
        << c.int_mac_ops << ',' << c.scale_convert_ops << ',' << c.reduction_ops << ',' << c.load_ops << '\n';
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const UsageError& e) {
        err << "qk: usage: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        err << "qk: error [" << to_string(e.code()) << "]: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "qk: error: " << e.what() << '\n';
        return 1;
    }
}

// ---- import ---------------------------------------------------------------

struct ImportArgs {
    std::string raw, dims, name, in, out;
};

int cmd_import(const ImportArgs& a, std::ostream& out) {
    const auto dims = parse_extents(a.dims, "dims");
    Container c;
    if (!a.in.empty()) c = load_container(a.in);
    if (c.find(a.name)) fail(ErrorCode::duplicate_name, "tensor '" + a.name + "' already exists");
    c.tensors.push_back(import_raw_f32_file(a.name, dims, a.raw));
    save_container(a.out, c);
    out << "imported " << a.name << " fp32 " << dims_text(dims) << '\n';
    return 0;
}

// ---- quantize -------------------------------------------------------------

struct QuantizeArgs {
    std::string in, tensor, dtype, codebooks, out;
};

int cmd_quantize(const QuantizeArgs& a, std::ostream& out) {
    const auto dtype = parse_dtype(a.dtype);
    if (!dtype || (*dtype != DType::q4_0 && *dtype != DType::q8_0 && *dtype != DType::gcq2)) {
        throw UsageError("--dtype must be q4_0, q8_0 or gcq2");
    }
    if (*dtype == DType::gcq2 && a.codebooks.empty()) throw UsageError("--dtype gcq2 requires --codebooks");

    Container c = load_container(a.in);
    Tensor& src = [&]() -> Tensor& {
        Tensor* t = c.find(a.tensor);
        if (!t) fail(ErrorCode::invalid_argument, "no tensor named '" + a.tensor + "'");
        return *t;
    }();
    if (src.meta.dtype != DType::fp32) {
        fail(ErrorCode::invalid_argument, "source tensor '" + a.tensor + "' must be fp32");
    }
    const auto values = tensor_as_f32(src);
    TensorMeta meta = make_meta(src.meta.name, *dtype, src.meta.dims);

    Tensor dst;
    std::vector<float> hat;
    if (*dtype == DType::q4_0) {
        const auto blocks = quantize_q4_0(values);
        dst.payload = to_bytes(std::span<const BlockQ4_0>(blocks));
        hat = dequantize_q4_0(blocks);
    } else if (*dtype == DType::q8_0) {
        const auto blocks = quantize_q8_0(values);
        dst.payload = to_bytes(std::span<const BlockQ8_0>(blocks));
        hat = dequantize_q8_0(blocks);
    } else {
        const Container cb = load_container(a.codebooks);
        if (!cb.codebooks) fail(ErrorCode::missing_codebooks, "'" + a.codebooks + "' holds no codebook section");
        if (c.codebooks && !(*c.codebooks == *cb.codebooks)) {
            const bool other_gcq = std::any_of(c.tensors.begin(), c.tensors.end(), [&](const Tensor& t) {
                return t.meta.dtype == DType::gcq2 && t.meta.name != a.tensor;
            });
            if (other_gcq) fail(ErrorCode::invalid_argument, "container already uses a different codebook set");
        }
        const GcqTensor q = quantize_tensor_gcq(values, meta.rows(), meta.cols(), *cb.codebooks);
        dst.payload = to_bytes(std::span<const GcqSuperblock>(q.blocks));
        hat = dequantize_gcq(q.blocks, *cb.codebooks);
        c.codebooks = cb.codebooks;
    }
    dst.meta = std::move(meta);
    const ErrorStats e = compare(values, hat);
    src = std::move(dst);
    save_container(a.out, c);

    out << "tensor=" << a.tensor << " dtype=" << dtype_name(*dtype)
        << " bpw=" << block_bits_per_weight(*dtype).value() << " mse=" << e.mse << " max_abs=" << e.max_abs << '\n';
    return 0;
}

// ---- repack ---------------------------------------------------------------

struct RepackArgs {
    std::string in, tensor, variant, out;
};

int cmd_repack(const RepackArgs& a, std::ostream& out) {
    const auto variant = parse_variant(a.variant);
    if (!variant) throw UsageError("--variant must be 4x4, 4x8 or 8x8");
    Container c = load_container(a.in);
    Tensor* t = c.find(a.tensor);
    if (!t) fail(ErrorCode::invalid_argument, "no tensor named '" + a.tensor + "'");
    if (t->meta.dtype != DType::q4_0) {
        fail(ErrorCode::invalid_argument, "repack needs a q4_0 tensor, '" + a.tensor + "' is " +
                                              std::string(dtype_name(t->meta.dtype)));
    }
    const auto channels = static_cast<std::size_t>(t->meta.rows());
    const InterleavedWeights w = repack_weights(q4_0_from_bytes(t->payload), channels, *variant);
    t->meta = make_meta(t->meta.name, variant->dtype(), t->meta.dims);
    t->payload = w.bytes;
    save_container(a.out, c);
    out << "tensor=" << a.tensor << " variant=" << variant_name(*variant) << " strips=" << w.strips()
        << " pad_channels=" << (w.padded_channels() - channels) << '\n';
    return 0;
}

// ---- build-codebooks ------------------------------------------------------

struct BuildArgs {
    std::string in, out;
    std::vector<std::string> tensors;
    std::size_t clusters = 4, centroids = 4, max_subgroups = std::size_t{1} << 20;
    std::optional<std::uint64_t> seed;
};

int cmd_build_codebooks(const BuildArgs& a, std::ostream& out) {
    const Container c = load_container(a.in);
    std::vector<std::vector<float>> data;
    for (const Tensor& t : c.tensors) {
        const bool wanted = a.tensors.empty()
                                ? (t.meta.dtype == DType::fp32 || t.meta.dtype == DType::fp16)
                                : std::find(a.tensors.begin(), a.tensors.end(), t.meta.name) != a.tensors.end();
        if (wanted) data.push_back(tensor_as_f32(t));
    }
    for (const auto& name : a.tensors) require_tensor(c, name);
    if (data.empty()) fail(ErrorCode::invalid_argument, "no fp32 tensors to build codebooks from");

    std::vector<std::span<const float>> views(data.begin(), data.end());
    CodebookBuildOptions opts;
    opts.codebooks = a.clusters;
    opts.centroids = a.centroids;
    opts.max_subgroups = a.max_subgroups;
    opts.kmeans.seed = a.seed.value_or(default_seed());
    Container result;
    result.codebooks = build_codebooks_from_tensors(views, opts);
    save_container(a.out, result);

    const CodebookSet& cbs = *result.codebooks;
    for (std::size_t i = 0; i < cbs.codebooks(); ++i) {
        out << "codebook " << i << ':';
        for (std::int8_t v : cbs.codebook(i)) out << ' ' << static_cast<int>(v);
        out << '\n';
    }
    return 0;
}

// ---- dequantize -----------------------------------------------------------

struct DequantArgs {
    std::string in, tensor, out;
};

int cmd_dequantize(const DequantArgs& a, std::ostream& out) {
    Container c = load_container(a.in);
    Tensor* t = c.find(a.tensor);
    if (!t) fail(ErrorCode::invalid_argument, "no tensor named '" + a.tensor + "'");
    const DType from = t->meta.dtype;
    *t = make_fp32_tensor(t->meta.name, t->meta.dims, to_f32(*t, c.codebooks));
    const bool any_gcq = std::any_of(c.tensors.begin(), c.tensors.end(),
                                     [](const Tensor& x) { return x.meta.dtype == DType::gcq2; });
    if (!any_gcq) c.codebooks.reset();
    save_container(a.out, c);
    out << "tensor=" << a.tensor << " from=" << dtype_name(from) << " to=fp32\n";
    return 0;
}

// ---- matmul ---------------------------------------------------------------

struct MatmulArgs {
    std::string weights, activations, impl = "opt", out, name = "out", variant = "8x8";
    bool counters = false;
    int threads = 1;
    int mr = 2;
};

struct Operand {
    Container container;
    const Tensor* tensor = nullptr;
};

Operand load_operand(const std::string& text) {
    const TensorRef ref = parse_ref(text);
    Operand op;
    op.container = load_container(ref.path);
    op.tensor = &require_tensor(op.container, ref.tensor);
    return op;
}

std::vector<float> gcq_rows(std::span<const GcqSuperblock> w, const CodebookSet& cbs, std::span<const float> acts,
                            GemmShape shape, PerfCounters* pc, int threads) {
    std::vector<float> result(shape.m * shape.n);
    const auto q = dynamic_quantize_rows(acts, shape.m, shape.k);
    for (std::size_t m = 0; m < shape.m; ++m) {
        const auto row = std::span<const BlockQ8_0>(q).subspan(m * shape.groups(), shape.groups());
        const auto y = gemv_gcq(w, cbs, row, {1, shape.n, shape.k}, pc, threads);
        std::copy(y.begin(), y.end(), result.begin() + static_cast<std::ptrdiff_t>(m * shape.n));
    }
    return result;
}

int cmd_matmul(const MatmulArgs& a, std::ostream& out) {
    if (a.impl != "ref" && a.impl != "opt") throw UsageError("--impl must be ref or opt");
    const auto variant_flag = parse_variant(a.variant);
    if (!variant_flag) throw UsageError("--variant must be 4x4, 4x8 or 8x8");
    if (a.mr != 2 && a.mr != 4) throw UsageError("--mr must be 2 or 4");
    if (a.threads < 1) throw UsageError("--threads must be >= 1");

    const Operand wop = load_operand(a.weights);
    const Operand aop = load_operand(a.activations);
    const Tensor& w = *wop.tensor;
    const Tensor& x = *aop.tensor;
    if (w.meta.dims.size() != 2 || x.meta.dims.size() != 2) {
        fail(ErrorCode::shape_mismatch, "matmul operands must be 2-D");
    }
    const GemmShape shape{x.meta.rows(), w.meta.rows(), w.meta.cols()};
    if (x.meta.cols() != shape.k) {
        fail(ErrorCode::shape_mismatch, "activations have K=" + std::to_string(x.meta.cols()) + ", weights have K=" +
                                            std::to_string(shape.k));
    }
    if (x.meta.dtype != DType::fp32 && x.meta.dtype != DType::fp16 && x.meta.dtype != DType::q8_0) {
        fail(ErrorCode::invalid_argument, "activations must be fp32, fp16 or q8_0");
    }
    const auto act_f32 = to_f32(x, aop.container.codebooks);
    const auto act_rows = x.meta.dtype == DType::q8_0 ? q8_0_from_bytes(x.payload)
                                                      : dynamic_quantize_rows(act_f32, shape.m, shape.k);

    PerfCounters pc;
    KernelProbe probe{&pc, {}};
    std::vector<float> y;
    if (w.meta.dtype == DType::gcq2) {
        if (!wop.container.codebooks) fail(ErrorCode::missing_codebooks, "weights container has no codebooks");
        y = gcq_rows(gcq2_from_bytes(w.payload), *wop.container.codebooks, act_f32, shape, &pc, a.threads);
    } else if (a.impl == "ref") {
        y = gemm_ref(q4_blocks_of(w), act_rows, shape, probe, a.threads);
    } else {
        const auto stored = variant_of(w.meta.dtype);
        const InterleavedWeights iw =
            stored ? interleaved_from_bytes(w.payload, *stored, shape.n, shape.k)
                   : repack_weights(q4_blocks_of(w), shape.n, *variant_flag);
        KernelConfig cfg{iw.variant, a.mr, a.threads};
        if (shape.m == 1) {
            y = gemv_opt(iw, act_rows, shape, cfg, probe);
        } else {
            const auto ia = repack_activations(act_rows, shape.m, a.mr, iw.variant.chunk);
            y = gemm_opt(iw, ia, shape, cfg, probe);
        }
    }

    Container result;
    result.tensors.push_back(make_fp32_tensor(a.name, {shape.m, shape.n}, y));
    save_container(a.out, result);
    if (a.counters) print_counters(out, pc);
    return 0;
}

// ---- verify ---------------------------------------------------------------

struct VerifyArgs {
    std::string suite;
    std::optional<std::uint64_t> seed;
};

// ---- bench ----------------------------------------------------------------

struct BenchArgs {
    std::string shape, preset, dtype = "q4_0", variant = "8x8", impl = "both";
    int threads = 1;
    int repeat = 5;
    int mr = 2;
    std::optional<std::uint64_t> seed;
};

std::string hardware_description() {
    std::string model;
    std::ifstream cpuinfo("/proc/cpuinfo");
    for (std::string line; std::getline(cpuinfo, line);) {
        if (line.rfind("model name", 0) == 0 || line.rfind("Model", 0) == 0) {
            const auto pos = line.find(':');
            if (pos != std::string::npos) model = line.substr(pos + 2);
            break;
        }
    }
    if (model.empty()) model = "unknown cpu";
    return model + "; simd=" + std::string(simd::native::kBackend) +
           "; hw_threads=" + std::to_string(std::thread::hardware_concurrency());
}

template <class Fn>
double median_ms(int repeat, Fn&& fn) {
    std::vector<double> t;
    for (int r = 0; r < repeat; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        t.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(t.begin(), t.end());
    const std::size_t n = t.size();
    return n % 2 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
}

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
    std::vector<std::uint64_t> dims;
    if (!a.preset.empty()) {
        if (!a.shape.empty()) throw UsageError("--preset and --shape are exclusive");
        if (a.preset == "decode") dims = {1, 4096, 4096};
        else if (a.preset == "prefill") dims = {128, 4096, 4096};
        else throw UsageError("--preset must be decode or prefill");
    } else {
        dims = parse_extents(a.shape.empty() ? "1x4096x4096" : a.shape, "shape");
    }
    if (dims.size() != 3) throw UsageError("--shape must be MxNxK");
    const GemmShape shape{dims[0], dims[1], dims[2]};
    if (a.repeat < 1) throw UsageError("--repeat must be >= 1");
    if (a.threads < 1) throw UsageError("--threads must be >= 1");
    if (a.mr != 2 && a.mr != 4) throw UsageError("--mr must be 2 or 4");
    if (a.impl != "ref" && a.impl != "opt" && a.impl != "both") throw UsageError("--impl must be ref, opt or both");
    const auto variant = parse_variant(a.variant);
    if (!variant) throw UsageError("--variant must be 4x4, 4x8 or 8x8");
    if (a.dtype != "q4_0" && a.dtype != "gcq2") throw UsageError("--dtype must be q4_0 or gcq2");
    const std::size_t group = a.dtype == "gcq2" ? kSuperblockSize : kQ4GroupSize;
    if (shape.k % group != 0) {
        fail(ErrorCode::shape_mismatch, "K must be a multiple of " + std::to_string(group) + " for " + a.dtype);
    }

    const std::string label = shape.m == 1 ? "decode-proxy" : shape.m == 128 ? "prefill-proxy" : "custom";
    const std::uint64_t seed = a.seed.value_or(default_seed());
    const auto wf = synth::uniform_values(shape.n * shape.k, seed);
    const auto xf = synth::uniform_values(shape.m * shape.k, seed + 1);
    err << "# hardware: " << hardware_description() << '\n';
    out << kBenchHeader << '\n';

    auto emit = [&](const std::string& impl, const std::string& var, double ms, const PerfCounters& pc) {
        const double gops = 2.0 * static_cast<double>(shape.m * shape.n * shape.k) / (ms * 1e6);
        out << label << ',' << shape.m << ',' << shape.n << ',' << shape.k << ',' << a.dtype << ',' << var << ','
            << impl << ',' << a.threads << ',' << a.repeat << ',' << ms << ',' << gops << ',' << pc.int_mac_ops << ','
            << pc.scale_convert_ops << ',' << pc.reduction_ops << ',' << pc.load_ops << '\n';
    };

    if (a.dtype == "gcq2") {
        std::vector<float> train(wf.begin(), wf.begin() + static_cast<std::ptrdiff_t>(std::min(wf.size(),
                                                                                             std::size_t{1} << 18)));
        const std::vector<std::span<const float>> views{train};
        CodebookBuildOptions opts;
        opts.kmeans.seed = seed;
        const CodebookSet cbs = build_codebooks_from_tensors(views, opts);
        const auto blocks = quantize_tensor_gcq(wf, shape.n, shape.k, cbs).blocks;
        PerfCounters pc;
        const double ms = median_ms(a.repeat, [&] {
            PerfCounters run;
            gcq_rows(blocks, cbs, xf, shape, &run, a.threads);
            pc = run;
        });
        emit("lut", "-", ms, pc);
        return 0;
    }

    const auto wq = quantize_q4_0(wf);
    if (a.impl != "opt") {
        PerfCounters pc;
        const double ms = median_ms(a.repeat, [&] {
            PerfCounters run;
            const auto q = dynamic_quantize_rows(xf, shape.m, shape.k);
            gemm_ref(wq, q, shape, {&run, {}}, a.threads);
            pc = run;
        });
        emit("ref", "-", ms, pc);
    }
    if (a.impl != "ref") {
        const InterleavedWeights iw = repack_weights(wq, shape.n, *variant);
        const KernelConfig cfg{*variant, a.mr, a.threads};
        PerfCounters pc;
        const double ms = median_ms(a.repeat, [&] {
            PerfCounters run;
            if (shape.m == 1) {
                gemv_opt(iw, dynamic_quantize_rows(xf, 1, shape.k), shape, cfg, {&run, {}});
            } else {
                const auto ia = dynamic_quantize_interleaved(xf, shape.m, shape.k, a.mr, variant->chunk);
                gemm_opt(iw, ia, shape, cfg, {&run, {}});
            }
            pc = run;
        });
        emit("opt", std::string(variant_name(*variant)), ms, pc);
    }
    return 0;
}

// ---- inspect --------------------------------------------------------------

struct InspectArgs {
    std::string in;
    bool json = false;
};

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
    const Container c = load_container(a.in);
    if (a.json) {
        nlohmann::json j;
        j["version"] = kContainerVersion;
        if (c.codebooks) {
            j["codebooks"] = {{"C", c.codebooks->codebooks()}, {"K", c.codebooks->centroids()}};
            auto& table = j["codebooks"]["table"] = nlohmann::json::array();
            for (std::size_t i = 0; i < c.codebooks->codebooks(); ++i) {
                std::vector<int> row;
                for (std::int8_t v : c.codebooks->codebook(i)) row.push_back(v);
                table.push_back(row);
            }
        } else {
            j["codebooks"] = nullptr;
        }
        j["tensors"] = nlohmann::json::array();
        for (const Tensor& t : c.tensors) {
            j["tensors"].push_back({{"name", t.meta.name},
                                    {"dtype", dtype_name(t.meta.dtype)},
                                    {"dims", t.meta.dims},
                                    {"data_offset", t.meta.data_offset},
                                    {"data_size", t.meta.data_size}});
        }
        out << j.dump(2) << '\n';
        return 0;
    }
    out << "version " << kContainerVersion << ", " << c.tensors.size() << " tensors\n";
    if (c.codebooks) {
        out << "codebooks C=" << c.codebooks->codebooks() << " K=" << c.codebooks->centroids() << '\n';
        for (std::size_t i = 0; i < c.codebooks->codebooks(); ++i) {
            out << "  [" << i << "]";
            for (std::int8_t v : c.codebooks->codebook(i)) out << ' ' << static_cast<int>(v);
            out << '\n';
        }
    }
    for (const Tensor& t : c.tensors) {
        out << t.meta.name << ' ' << dtype_name(t.meta.dtype) << ' ' << dims_text(t.meta.dims)
            << " offset=" << t.meta.data_offset << " size=" << t.meta.data_size
            << " bpw=" << bpw_text(t.meta.data_size, t.meta.element_count()) << '\n';
    }
    return 0;
}

}  // namespace

std::uint64_t default_seed() {
    if (const char* env = std::getenv("QK_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            return 0;
        }
    }
    return 0;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"qk: group-quantized tensor containers, kernels and codebook quantization"};
    app.name("qk");
    app.require_subcommand(1);

    ImportArgs imp;
    auto* s_import = app.add_subcommand("import", "Wrap raw little-endian float32 data as an fp32 tensor");
    s_import->add_option("--raw", imp.raw, "Raw float32 file")->required();
    s_import->add_option("--dims", imp.dims, "Extents, e.g. 64,256 or 64x256")->required();
    s_import->add_option("--name", imp.name, "Tensor name")->required();
    s_import->add_option("--in", imp.in, "Existing container to append to");
    s_import->add_option("--out", imp.out, "Output container")->required();

    QuantizeArgs qa;
    auto* s_quant = app.add_subcommand("quantize", "Quantize an fp32 tensor in place");
    s_quant->add_option("--in", qa.in)->required();
    s_quant->add_option("--tensor", qa.tensor)->required();
    s_quant->add_option("--dtype", qa.dtype, "q4_0, q8_0 or gcq2")->required();
    s_quant->add_option("--codebooks", qa.codebooks, "Container holding the codebook set (gcq2)");
    s_quant->add_option("--out", qa.out)->required();

    RepackArgs ra;
    auto* s_repack = app.add_subcommand("repack", "Interleave a q4_0 tensor for the optimized kernels");
    s_repack->add_option("--in", ra.in)->required();
    s_repack->add_option("--tensor", ra.tensor)->required();
    s_repack->add_option("--variant", ra.variant, "4x4, 4x8 or 8x8")->required();
    s_repack->add_option("--out", ra.out)->required();

    BuildArgs ba;
    auto* s_build = app.add_subcommand("build-codebooks", "Build a GCQ codebook set from fp32 tensors");
    s_build->add_option("--in", ba.in)->required();
    s_build->add_option("--tensor", ba.tensors, "Tensor to include (repeatable; default all fp32)");
    s_build->add_option("-C,--clusters", ba.clusters, "Number of codebooks")->capture_default_str();
    s_build->add_option("-K,--centroids", ba.centroids, "Centroids per codebook")->capture_default_str();
    s_build->add_option("--max-subgroups", ba.max_subgroups)->capture_default_str();
    s_build->add_option("--seed", ba.seed, "Default: QK_SEED or 0");
    s_build->add_option("--out", ba.out, "Output container (codebooks only)")->required();

    DequantArgs da;
    auto* s_deq = app.add_subcommand("dequantize", "Convert a quantized tensor back to fp32");
    s_deq->add_option("--in", da.in)->required();
    s_deq->add_option("--tensor", da.tensor)->required();
    s_deq->add_option("--out", da.out)->required();

    MatmulArgs ma;
    auto* s_mm = app.add_subcommand("matmul", "out[M x N] = activations[M x K] * weights[N x K]^T");
    s_mm->add_option("--weights", ma.weights, "container:tensor")->required();
    s_mm->add_option("--activations", ma.activations, "container:tensor")->required();
    s_mm->add_option("--impl", ma.impl, "ref or opt")->capture_default_str();
    s_mm->add_option("--variant", ma.variant, "Interleave used when opt weights are plain q4_0")
        ->capture_default_str();
    s_mm->add_option("--mr", ma.mr, "Activation rows per GEMM micro-tile (2 or 4)")->capture_default_str();
    s_mm->add_option("--threads", ma.threads)->capture_default_str();
    s_mm->add_option("--name", ma.name, "Result tensor name")->capture_default_str();
    s_mm->add_option("--out", ma.out)->required();
    s_mm->add_flag("--counters", ma.counters, "Print operation counters as CSV");
    s_mm->footer(std::string("Counters CSV columns: ") + kCountersHeader);

    VerifyArgs va;
    auto* s_verify = app.add_subcommand("verify", "Run a property suite");
    s_verify->add_option("--suite", va.suite)
        ->required()
        ->check(CLI::IsMember({"decode", "roundtrip", "kernel-equiv", "gcq-mse"}));
    s_verify->add_option("--seed", va.seed, "Default: QK_SEED or 0");

    BenchArgs be;
    auto* s_bench = app.add_subcommand("bench", "Time reference and optimized kernels");
    s_bench->add_option("--shape", be.shape, "MxNxK");
    s_bench->add_option("--preset", be.preset, "decode (1x4096x4096) or prefill (128x4096x4096)");
    s_bench->add_option("--dtype", be.dtype, "q4_0 or gcq2")->capture_default_str();
    s_bench->add_option("--variant", be.variant)->capture_default_str();
    s_bench->add_option("--impl", be.impl, "ref, opt or both")->capture_default_str();
    s_bench->add_option("--mr", be.mr)->capture_default_str();
    s_bench->add_option("--threads", be.threads)->capture_default_str();
    s_bench->add_option("--repeat", be.repeat)->capture_default_str();
    s_bench->add_option("--seed", be.seed, "Default: QK_SEED or 0");
    s_bench->footer(std::string("CSV columns: ") + kBenchHeader +
                    "\nmedian_ms is the median over --repeat runs; gops = 2*M*N*K / time.");

    InspectArgs ia;
    auto* s_inspect = app.add_subcommand("inspect", "Describe a container");
    s_inspect->add_option("--in", ia.in)->required();
    s_inspect->add_flag("--json", ia.json);

    std::vector<std::string> argv_store;
    argv_store.reserve(args.size() + 1);
    argv_store.emplace_back("qk");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : argv_store) argv.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    return guarded(err, [&]() -> int {
        if (s_import->parsed()) return cmd_import(imp, out);
        if (s_quant->parsed()) return cmd_quantize(qa, out);
        if (s_repack->parsed()) return cmd_repack(ra, out);
        if (s_build->parsed()) return cmd_build_codebooks(ba, out);
        if (s_deq->parsed()) return cmd_dequantize(da, out);
        if (s_mm->parsed()) return cmd_matmul(ma, out);
        if (s_verify->parsed()) return run_verify_suite(va.suite, va.seed.value_or(default_seed()), out) ? 0 : 1;
        if (s_bench->parsed()) return cmd_bench(be, out, err);
        if (s_inspect->parsed()) return cmd_inspect(ia, out);
        return 2;
    });
}

}  // namespace qk::cli
