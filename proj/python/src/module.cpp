#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <vector>

#include "qk/blockquant.hpp"
#include "qk/common.hpp"
#include "qk/gcq.hpp"
#include "qk/kernels.hpp"
#include "qk/repack.hpp"
#include "qk/tensorio.hpp"

namespace py = pybind11;
using namespace qk;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

std::span<const float> view(const F32Array& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }
std::span<const std::uint8_t> view(const U8Array& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

py::array_t<std::uint8_t> to_numpy(const std::vector<std::uint8_t>& bytes) {
    py::array_t<std::uint8_t> out(static_cast<py::ssize_t>(bytes.size()));
    if (!bytes.empty()) std::memcpy(out.mutable_data(), bytes.data(), bytes.size());
    return out;
}

py::array_t<float> to_numpy(const std::vector<float>& v, std::vector<py::ssize_t> shape) {
    py::array_t<float> out(shape);
    if (!v.empty()) std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(float));
    return out;
}

// Rows and K of a 1-D or 2-D float array.
std::pair<std::size_t, std::size_t> matrix_shape(const F32Array& a) {
    if (a.ndim() == 1) return {1, static_cast<std::size_t>(a.shape(0))};
    if (a.ndim() == 2) return {static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))};
    throw py::value_error("expected a 1-D or 2-D float array");
}

DType dtype_arg(const std::string& name) {
    const auto t = parse_dtype(name);
    if (!t) throw py::value_error("unknown dtype '" + name + "'");
    return *t;
}

Variant variant_arg(const std::string& name) {
    const auto v = parse_variant(name);
    if (!v) throw py::value_error("unknown variant '" + name + "' (expected 4x4, 4x8 or 8x8)");
    return *v;
}

py::dict counters_dict(const PerfCounters& c) {
    py::dict d;
    d["int_mac_ops"] = c.int_mac_ops;
    d["scale_convert_ops"] = c.scale_convert_ops;
    d["reduction_ops"] = c.reduction_ops;
    d["load_ops"] = c.load_ops;
    return d;
}

CodebookSet make_codebooks(std::size_t codebooks, std::size_t centroids,
                           const py::array_t<std::int8_t, py::array::c_style | py::array::forcecast>& table) {
    return {codebooks, centroids, std::vector<std::int8_t>(table.data(), table.data() + table.size())};
}

}  // namespace

PYBIND11_MODULE(_qkernels, m) {
    m.doc() = "Quantized block formats, interleaved Q4_0 kernels and group-wise codebook quantization";

    static PyObject* error = PyErr_NewException("qkernels.QkError", PyExc_ValueError, nullptr);
    m.attr("QkError") = py::handle(error);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            const std::string msg = "[" + std::string(to_string(e.code())) + "] " + e.what();
            PyErr_SetString(error, msg.c_str());
        }
    });

    m.def(
        "bits_per_weight", [](const std::string& dtype) { return block_bits_per_weight(dtype_arg(dtype)).value(); },
        py::arg("dtype"));

    m.def(
        "quantize",
        [](const F32Array& x, const std::string& dtype) {
            const DType t = dtype_arg(dtype);
            if (t == DType::q4_0) return to_numpy(to_bytes(std::span<const BlockQ4_0>(quantize_q4_0(view(x)))));
            if (t == DType::q8_0) return to_numpy(to_bytes(std::span<const BlockQ8_0>(quantize_q8_0(view(x)))));
            throw py::value_error("quantize supports q4_0 and q8_0; use quantize_gcq for gcq2");
        },
        py::arg("x"), py::arg("dtype") = "q4_0", "Quantize a float array (size a multiple of 32) to packed blocks.");

    m.def(
        "dequantize",
        [](const U8Array& data, const std::string& dtype) {
            const DType t = dtype_arg(dtype);
            std::vector<float> v;
            if (t == DType::q4_0) {
                v = dequantize_q4_0(q4_0_from_bytes(view(data)));
            } else if (t == DType::q8_0) {
                v = dequantize_q8_0(q8_0_from_bytes(view(data)));
            } else {
                throw py::value_error("dequantize supports q4_0 and q8_0; use dequantize_gcq for gcq2");
            }
            return to_numpy(v, {static_cast<py::ssize_t>(v.size())});
        },
        py::arg("data"), py::arg("dtype") = "q4_0");

    m.def(
        "repack",
        [](const U8Array& q4, std::size_t channels, const std::string& variant) {
            return to_numpy(repack_weights(q4_0_from_bytes(view(q4)), channels, variant_arg(variant)).bytes);
        },
        py::arg("q4"), py::arg("channels"), py::arg("variant") = "8x8",
        "Interleave Q4_0 weight rows into the channel-tiled layout.");

    m.def(
        "unpack",
        [](const U8Array& data, std::size_t channels, std::size_t k, const std::string& variant) {
            const auto w = interleaved_from_bytes(std::vector<std::uint8_t>(view(data).begin(), view(data).end()),
                                                  variant_arg(variant), channels, k);
            return to_numpy(to_bytes(std::span<const BlockQ4_0>(unpack_weights(w))));
        },
        py::arg("data"), py::arg("channels"), py::arg("k"), py::arg("variant") = "8x8");

    m.def(
        "matmul",
        [](const U8Array& q4, const F32Array& x, std::size_t n, const std::string& impl, const std::string& variant,
           int mr, int threads, bool counters) -> py::object {
            const auto [rows, k] = matrix_shape(x);
            const GemmShape shape{rows, n, k};
            const auto w = q4_0_from_bytes(view(q4));
            PerfCounters pc;
            std::vector<float> y;
            {
                py::gil_scoped_release release;
                if (impl == "ref") {
                    y = gemm_ref(w, dynamic_quantize_rows(view(x), rows, k), shape, {&pc}, threads);
                } else if (impl == "opt") {
                    const Variant v = variant_arg(variant);
                    const auto iw = repack_weights(w, n, v);
                    if (rows == 1) {
                        y = gemv_opt(iw, dynamic_quantize_rows(view(x), rows, k), shape, {v, 1, threads}, {&pc});
                    } else {
                        y = gemm_opt(iw, dynamic_quantize_interleaved(view(x), rows, k, mr, v.chunk), shape,
                                     {v, mr, threads}, {&pc});
                    }
                } else {
                    throw py::value_error("impl must be 'ref' or 'opt'");
                }
            }
            auto out = to_numpy(y, {static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(n)});
            if (!counters) return std::move(out);
            return py::make_tuple(out, counters_dict(pc));
        },
        py::arg("q4"), py::arg("x"), py::arg("n"), py::arg("impl") = "opt", py::arg("variant") = "8x8",
        py::arg("mr") = 2, py::arg("threads") = 1, py::arg("counters") = false,
        "y = x @ W^T for Q4_0 weights W (n rows of length k) and float activations x, quantized to Q8_0 on the fly.");

    py::class_<CodebookSet>(m, "CodebookSet")
        .def(py::init(&make_codebooks), py::arg("codebooks"), py::arg("centroids"), py::arg("table"))
        .def_property_readonly("codebooks", &CodebookSet::codebooks)
        .def_property_readonly("centroids", &CodebookSet::centroids)
        .def_property_readonly("table",
                               [](const CodebookSet& c) {
                                   py::array_t<std::int8_t> out(
                                       {static_cast<py::ssize_t>(c.codebooks()), static_cast<py::ssize_t>(c.centroids())});
                                   std::memcpy(out.mutable_data(), c.table().data(), c.table().size());
                                   return out;
                               })
        .def("__eq__", [](const CodebookSet& a, const CodebookSet& b) { return a == b; })
        .def("__repr__", [](const CodebookSet& c) {
            return "CodebookSet(codebooks=" + std::to_string(c.codebooks()) +
                   ", centroids=" + std::to_string(c.centroids()) + ")";
        });

    m.def(
        "build_codebooks",
        [](const std::vector<F32Array>& tensors, std::size_t codebooks, std::size_t centroids, std::uint64_t seed,
           std::size_t max_subgroups) {
            std::vector<std::span<const float>> views;
            for (const auto& t : tensors) views.push_back(view(t));
            CodebookBuildOptions o;
            o.codebooks = codebooks;
            o.centroids = centroids;
            o.kmeans.seed = seed;
            o.max_subgroups = max_subgroups;
            py::gil_scoped_release release;
            return build_codebooks_from_tensors(views, o);
        },
        py::arg("tensors"), py::arg("codebooks") = 4, py::arg("centroids") = 4, py::arg("seed") = 0,
        py::arg("max_subgroups") = std::size_t{1} << 20);

    m.def(
        "quantize_gcq",
        [](const F32Array& x, const CodebookSet& cbs, bool refine) {
            const auto [rows, k] = matrix_shape(x);
            const GcqTensor t = quantize_tensor_gcq(view(x), rows, k, cbs, {refine});
            return py::make_tuple(to_numpy(to_bytes(std::span<const GcqSuperblock>(t.blocks))), t.report.mse,
                                  t.report.max_abs_error);
        },
        py::arg("x"), py::arg("codebooks"), py::arg("refine") = true,
        "Returns (payload, mse, max_abs_error); rows must be a multiple of 256 long.");

    m.def(
        "dequantize_gcq",
        [](const U8Array& data, const CodebookSet& cbs) {
            const auto v = dequantize_gcq(gcq2_from_bytes(view(data)), cbs);
            return to_numpy(v, {static_cast<py::ssize_t>(v.size())});
        },
        py::arg("data"), py::arg("codebooks"));

    m.def(
        "gemv_gcq",
        [](const U8Array& data, const CodebookSet& cbs, const F32Array& x, std::size_t n, int threads) {
            const auto [rows, k] = matrix_shape(x);
            if (rows != 1) throw py::value_error("gemv_gcq takes a single activation row");
            const auto blocks = gcq2_from_bytes(view(data));
            const auto xq = dynamic_quantize_rows(view(x), 1, k);
            std::vector<float> y;
            {
                py::gil_scoped_release release;
                y = gemv_gcq(blocks, cbs, xq, {1, n, k}, nullptr, threads);
            }
            return to_numpy(y, {static_cast<py::ssize_t>(n)});
        },
        py::arg("data"), py::arg("codebooks"), py::arg("x"), py::arg("n"), py::arg("threads") = 1);

    m.def(
        "load_container",
        [](const std::string& path) {
            const Container c = load_container(path);
            py::dict tensors;
            for (const Tensor& t : c.tensors) {
                py::dict d;
                d["dtype"] = std::string(dtype_name(t.meta.dtype));
                d["dims"] = t.meta.dims;
                d["data"] = to_numpy(t.payload);
                tensors[py::str(t.meta.name)] = d;
            }
            py::object cbs = c.codebooks ? py::cast(*c.codebooks) : py::none();
            return py::make_tuple(tensors, cbs);
        },
        py::arg("path"), "Returns ({name: {dtype, dims, data}}, codebooks or None).");

    m.def(
        "save_container",
        [](const std::string& path, const py::dict& tensors, const std::optional<CodebookSet>& codebooks) {
            Container c;
            c.codebooks = codebooks;
            for (const auto& [key, value] : tensors) {
                const py::dict d = value.cast<py::dict>();
                const auto data = d["data"].cast<U8Array>();
                c.tensors.push_back({make_meta(key.cast<std::string>(), dtype_arg(d["dtype"].cast<std::string>()),
                                               d["dims"].cast<std::vector<std::uint64_t>>()),
                                     std::vector<std::uint8_t>(view(data).begin(), view(data).end())});
            }
            save_container(path, c);
        },
        py::arg("path"), py::arg("tensors"), py::arg("codebooks") = py::none());
}
