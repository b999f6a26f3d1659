#include "qk/tensorio.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <string>

#include "qk/blockquant.hpp"
#include "qk/common.hpp"
#include "qk/fp16.hpp"

namespace qk {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
    std::uint64_t r = 0;
    if (__builtin_mul_overflow(a, b, &r)) fail(ErrorCode::invalid_argument, "tensor size overflows 64 bits");
    return r;
}

std::uint64_t align_up(std::uint64_t x, std::uint64_t a) { return (x + a - 1) / a * a; }

class ByteWriter {
public:
    explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void pad_to(std::uint64_t offset) { out_.resize(offset, 0); }

private:
    std::vector<std::uint8_t>& out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    std::size_t pos() const noexcept { return pos_; }

    void need(std::size_t n, const std::string& what) const {
        if (in_.size() - pos_ < n) fail(ErrorCode::truncated, "stream truncated in " + what);
    }
    std::uint8_t u8(const std::string& what) {
        need(1, what);
        return in_[pos_++];
    }
    std::uint32_t u32(const std::string& what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{in_[pos_++]} << (8 * i);
        return v;
    }
    std::uint64_t u64(const std::string& what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{in_[pos_++]} << (8 * i);
        return v;
    }
    std::span<const std::uint8_t> take(std::size_t n, const std::string& what) {
        need(n, what);
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

std::size_t table_entry_bytes(const TensorMeta& m) { return 4 + m.name.size() + 4 + 4 + 8 * m.dims.size() + 16; }

}  // namespace

std::uint64_t TensorMeta::element_count() const noexcept {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

std::uint64_t TensorMeta::rows() const noexcept {
    std::uint64_t n = 1;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) n *= dims[i];
    return n;
}

std::uint64_t TensorMeta::cols() const noexcept { return dims.empty() ? 0 : dims.back(); }

const Tensor* Container::find(std::string_view name) const noexcept {
    for (const auto& t : tensors) {
        if (t.meta.name == name) return &t;
    }
    return nullptr;
}

Tensor* Container::find(std::string_view name) noexcept {
    for (auto& t : tensors) {
        if (t.meta.name == name) return &t;
    }
    return nullptr;
}

std::uint64_t payload_size(DType dtype, std::span<const std::uint64_t> dims) {
    if (static_cast<std::uint32_t>(dtype) >= kDTypeCount) {
        fail(ErrorCode::unknown_dtype, "unknown dtype " + std::to_string(static_cast<std::uint32_t>(dtype)));
    }
    if (dims.empty()) fail(ErrorCode::invalid_argument, "tensor needs at least one dimension");
    std::uint64_t rows = 1;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (dims[i] == 0) fail(ErrorCode::invalid_argument, "tensor extents must be positive");
        if (i + 1 < dims.size()) rows = checked_mul(rows, dims[i]);
    }
    const std::uint64_t k = dims.back();
    const std::uint64_t group = dtype_group_size(dtype);
    if (k % group != 0) {
        fail(ErrorCode::shape_mismatch, std::string(dtype_name(dtype)) + " needs an innermost extent divisible by " +
                                            std::to_string(group) + ", got " + std::to_string(k));
    }
    switch (dtype) {
        case DType::fp32: return checked_mul(checked_mul(rows, k), 4);
        case DType::fp16: return checked_mul(checked_mul(rows, k), 2);
        case DType::q4_0: return checked_mul(checked_mul(rows, k / group), sizeof(BlockQ4_0));
        case DType::q8_0: return checked_mul(checked_mul(rows, k / group), sizeof(BlockQ8_0));
        case DType::gcq2: return checked_mul(checked_mul(rows, k / group), sizeof(GcqSuperblock));
        case DType::q4_0x4b4:
        case DType::q4_0x4b8:
        case DType::q4_0x8b8: {
            const auto n = static_cast<std::uint64_t>(variant_of(dtype)->channels);
            const std::uint64_t padded = (rows + n - 1) / n * n;
            return checked_mul(checked_mul(padded, k / group), sizeof(BlockQ4_0));
        }
    }
    return 0;
}

TensorMeta make_meta(std::string name, DType dtype, std::vector<std::uint64_t> dims) {
    TensorMeta m;
    m.name = std::move(name);
    m.dtype = dtype;
    m.dims = std::move(dims);
    m.data_size = payload_size(m.dtype, m.dims);
    return m;
}

std::vector<std::uint8_t> write_container(std::span<const Tensor> tensors,
                                          const std::optional<CodebookSet>& codebooks) {
    std::set<std::string_view> names;
    bool has_gcq = false;
    std::uint64_t table_end = kHeaderBytes;
    if (codebooks) table_end += 2 + codebooks->table().size();

    for (const auto& t : tensors) {
        if (!names.insert(t.meta.name).second) {
            fail(ErrorCode::duplicate_name, "duplicate tensor name '" + t.meta.name + "'");
        }
        const std::uint64_t expected = payload_size(t.meta.dtype, t.meta.dims);
        if (t.meta.data_size != expected || t.payload.size() != expected) {
            fail(ErrorCode::size_mismatch, "tensor '" + t.meta.name + "' payload is " +
                                               std::to_string(t.payload.size()) + " bytes, expected " +
                                               std::to_string(expected));
        }
        has_gcq = has_gcq || t.meta.dtype == DType::gcq2;
        table_end += table_entry_bytes(t.meta);
    }
    if (has_gcq && !codebooks) fail(ErrorCode::missing_codebooks, "GCQ2 tensors require a codebook section");
    if (tensors.size() > std::numeric_limits<std::uint32_t>::max()) {
        fail(ErrorCode::invalid_argument, "too many tensors");
    }

    std::vector<std::uint64_t> offsets;
    std::uint64_t cursor = table_end;
    for (const auto& t : tensors) {
        cursor = align_up(cursor, kPayloadAlignment);
        offsets.push_back(cursor);
        cursor += t.payload.size();
    }

    std::vector<std::uint8_t> out;
    out.reserve(cursor);
    ByteWriter w(out);
    w.bytes(kContainerMagic.data(), kContainerMagic.size());
    w.u32(kContainerVersion);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    w.u32(codebooks ? 1u : 0u);
    if (codebooks) {
        w.u8(static_cast<std::uint8_t>(codebooks->codebooks()));
        w.u8(static_cast<std::uint8_t>(codebooks->centroids()));
        w.bytes(codebooks->table().data(), codebooks->table().size());
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& m = tensors[i].meta;
        w.u32(static_cast<std::uint32_t>(m.name.size()));
        w.bytes(m.name.data(), m.name.size());
        w.u32(static_cast<std::uint32_t>(m.dtype));
        w.u32(static_cast<std::uint32_t>(m.dims.size()));
        for (auto d : m.dims) w.u64(d);
        w.u64(offsets[i]);
        w.u64(m.data_size);
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        w.pad_to(offsets[i]);
        w.bytes(tensors[i].payload.data(), tensors[i].payload.size());
    }
    return out;
}

Container read_container(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    const auto magic = r.take(4, "header");
    if (!std::equal(magic.begin(), magic.end(), kContainerMagic.begin())) {
        fail(ErrorCode::bad_magic, "not a QTNZ container");
    }
    const std::uint32_t version = r.u32("header");
    if (version != kContainerVersion) {
        fail(ErrorCode::bad_version, "unsupported container version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32("header");
    const std::uint32_t has_codebooks = r.u32("header");
    if (has_codebooks > 1) fail(ErrorCode::invalid_argument, "codebook flag must be 0 or 1");

    Container c;
    if (has_codebooks) {
        const std::size_t cb = r.u8("codebook section");
        const std::size_t k = r.u8("codebook section");
        const auto raw = r.take(cb * k, "codebook section");
        std::vector<std::int8_t> table(raw.size());
        std::memcpy(table.data(), raw.data(), raw.size());
        c.codebooks = CodebookSet(cb, k, std::move(table));
    }

    std::set<std::string> names;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string where = "tensor table entry " + std::to_string(i);
        TensorMeta m;
        const auto name_len = r.u32(where);
        const auto name = r.take(name_len, where);
        m.name.assign(reinterpret_cast<const char*>(name.data()), name.size());
        if (!names.insert(m.name).second) fail(ErrorCode::duplicate_name, "duplicate tensor name '" + m.name + "'");
        const std::uint32_t dtype = r.u32(where);
        if (dtype >= kDTypeCount) {
            fail(ErrorCode::unknown_dtype, "tensor '" + m.name + "' has unknown dtype " + std::to_string(dtype));
        }
        m.dtype = static_cast<DType>(dtype);
        const std::uint32_t ndims = r.u32(where);
        if (ndims == 0 || ndims > 16) fail(ErrorCode::invalid_argument, "tensor '" + m.name + "' has bad rank");
        for (std::uint32_t d = 0; d < ndims; ++d) m.dims.push_back(r.u64(where));
        m.data_offset = r.u64(where);
        m.data_size = r.u64(where);
        c.tensors.push_back(Tensor{std::move(m), {}});
    }

    const std::size_t table_end = r.pos();
    for (auto& t : c.tensors) {
        auto& m = t.meta;
        if (m.data_offset % kPayloadAlignment != 0) {
            fail(ErrorCode::misaligned, "tensor '" + m.name + "' payload offset " + std::to_string(m.data_offset) +
                                            " is not 64-byte aligned");
        }
        if (m.data_offset < table_end) {
            fail(ErrorCode::invalid_argument, "tensor '" + m.name + "' payload overlaps the header");
        }
        const std::uint64_t expected = payload_size(m.dtype, m.dims);
        if (m.data_size != expected) {
            fail(ErrorCode::size_mismatch, "tensor '" + m.name + "' declares " + std::to_string(m.data_size) +
                                               " bytes, expected " + std::to_string(expected));
        }
        if (m.data_offset > bytes.size() || bytes.size() - m.data_offset < m.data_size) {
            fail(ErrorCode::truncated, "stream truncated in payload of tensor '" + m.name + "'");
        }
        if (m.dtype == DType::gcq2 && !c.codebooks) {
            fail(ErrorCode::missing_codebooks, "tensor '" + m.name + "' is GCQ2 but the container has no codebooks");
        }
        const auto src = bytes.subspan(m.data_offset, m.data_size);
        t.payload.assign(src.begin(), src.end());
    }
    return c;
}

Tensor import_raw_f32(std::string name, std::span<const std::uint64_t> dims, std::span<const std::uint8_t> raw) {
    auto meta = make_meta(std::move(name), DType::fp32, {dims.begin(), dims.end()});
    if (raw.size() != meta.data_size) {
        fail(ErrorCode::bad_length, "raw float file has " + std::to_string(raw.size()) + " bytes, dims need " +
                                        std::to_string(meta.data_size));
    }
    return Tensor{std::move(meta), {raw.begin(), raw.end()}};
}

Tensor import_raw_f32_file(std::string name, std::span<const std::uint64_t> dims, const std::filesystem::path& path) {
    const auto raw = read_file(path);
    return import_raw_f32(std::move(name), dims, raw);
}

Tensor make_fp32_tensor(std::string name, std::vector<std::uint64_t> dims, std::span<const float> values) {
    auto meta = make_meta(std::move(name), DType::fp32, std::move(dims));
    if (values.size() * 4 != meta.data_size) {
        fail(ErrorCode::bad_length, "value count does not match tensor dims");
    }
    std::vector<std::uint8_t> payload(meta.data_size);
    std::memcpy(payload.data(), values.data(), payload.size());
    return Tensor{std::move(meta), std::move(payload)};
}

std::vector<float> tensor_as_f32(const Tensor& t) {
    const auto n = t.meta.element_count();
    std::vector<float> out(n);
    if (t.meta.dtype == DType::fp32) {
        std::memcpy(out.data(), t.payload.data(), n * 4);
    } else if (t.meta.dtype == DType::fp16) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint16_t h;
            std::memcpy(&h, t.payload.data() + 2 * i, 2);
            out[i] = fp16_to_fp32(h);
        }
    } else {
        fail(ErrorCode::invalid_argument, "tensor '" + t.meta.name + "' is " + std::string(dtype_name(t.meta.dtype)) +
                                              ", expected a float tensor");
    }
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::io, "short write to " + path.string());
}

Container load_container(const std::filesystem::path& path) { return read_container(read_file(path)); }

void save_container(const std::filesystem::path& path, const Container& c) { write_file(path, write_container(c)); }

}  // namespace qk
