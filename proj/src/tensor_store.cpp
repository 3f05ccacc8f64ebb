#include "mergelab/tensor_store.hpp"

#include "mergelab/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace mergelab {

using json = nlohmann::json;

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (const auto d : shape) {
        if (d < 0) {
            throw MalformedHeader("negative shape dimension");
        }
        if (d != 0 && n > std::numeric_limits<std::int64_t>::max() / d) {
            throw MalformedHeader("shape element count overflows");
        }
        n *= d;
    }
    return n;
}

Tensor::Tensor(DType dtype, std::vector<std::int64_t> shape, std::vector<std::uint8_t> raw)
    : dtype_(dtype), shape_(std::move(shape)), raw_(std::move(raw)) {
    const auto expected = static_cast<std::size_t>(element_count(shape_)) * dtype_width(dtype_);
    if (raw_.size() != expected) {
        throw MalformedHeader("tensor byte length " + std::to_string(raw_.size()) +
                              " does not match shape x dtype width " + std::to_string(expected));
    }
}

Tensor Tensor::from_values(std::vector<std::int64_t> shape, const Eigen::ArrayXf& values, DType stored) {
    if (element_count(shape) != values.size()) {
        throw MalformedHeader("value count does not match shape");
    }
    return Tensor(stored, std::move(shape), encode_from_f32(values, stored));
}

Eigen::ArrayXf Tensor::values() const { return decode_to_f32(raw_.data(), raw_.size(), dtype_); }

std::string CompatReport::describe() const {
    if (compatible()) {
        return "compatible";
    }
    std::ostringstream ss;
    for (const auto& k : missing_in_a) {
        ss << "missing in a: " << k << "; ";
    }
    for (const auto& k : missing_in_b) {
        ss << "missing in b: " << k << "; ";
    }
    for (const auto& m : shape_mismatches) {
        ss << "shape mismatch: " << m.name << "; ";
    }
    for (const auto& m : dtype_mismatches) {
        ss << "dtype mismatch: " << m.name << "; ";
    }
    auto s = ss.str();
    if (s.size() >= 2) {
        s.resize(s.size() - 2);
    }
    return s;
}

namespace {

std::vector<std::int64_t> parse_shape(const json& j, const std::string& name) {
    if (!j.is_array()) {
        throw MalformedHeader("tensor '" + name + "': shape must be an array");
    }
    std::vector<std::int64_t> shape;
    for (const auto& d : j) {
        if (!d.is_number_unsigned() && !(d.is_number_integer() && d.get<std::int64_t>() >= 0)) {
            throw MalformedHeader("tensor '" + name + "': shape entries must be non-negative integers");
        }
        shape.push_back(d.get<std::int64_t>());
    }
    return shape;
}

} // namespace

TensorMap read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoFailure("cannot open checkpoint: " + path.string());
    }
    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0, std::ios::beg);

    std::uint8_t len_bytes[8];
    in.read(reinterpret_cast<char*>(len_bytes), 8);
    if (in.gcount() != 8) {
        throw MalformedHeader("file too short for header length prefix");
    }
    std::uint64_t header_len = 0;
    for (int i = 7; i >= 0; --i) {
        header_len = (header_len << 8) | len_bytes[i];
    }
    if (header_len == 0 || header_len > file_size - 8) {
        throw MalformedHeader("header length " + std::to_string(header_len) +
                              " inconsistent with file size " + std::to_string(file_size));
    }

    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (static_cast<std::uint64_t>(in.gcount()) != header_len) {
        throw MalformedHeader("truncated header");
    }

    json header = json::parse(header_text, nullptr, false);
    if (header.is_discarded() || !header.is_object()) {
        throw MalformedHeader("header is not a valid JSON object");
    }

    const std::uint64_t data_len = file_size - 8 - header_len;

    TensorMap map;
    std::vector<TensorMeta> metas;
    for (const auto& [key, value] : header.items()) {
        if (key == "__metadata__") {
            if (!value.is_object()) {
                throw MalformedHeader("__metadata__ must be an object");
            }
            for (const auto& [mk, mv] : value.items()) {
                if (!mv.is_string()) {
                    throw MalformedHeader("__metadata__ values must be strings");
                }
                map.metadata[mk] = mv.get<std::string>();
            }
            continue;
        }
        if (!value.is_object() || !value.contains("dtype") || !value.contains("shape") ||
            !value.contains("data_offsets")) {
            throw MalformedHeader("tensor '" + key + "': entry must declare dtype, shape, data_offsets");
        }
        TensorMeta meta;
        meta.name = key;
        const auto dname = value["dtype"].get<std::string>();
        const auto dt = dtype_from_name(dname);
        if (!dt) {
            throw UnsupportedDType("tensor '" + key + "': dtype '" + dname + "'");
        }
        meta.dtype = *dt;
        meta.shape = parse_shape(value["shape"], key);
        const auto& off = value["data_offsets"];
        if (!off.is_array() || off.size() != 2 || !off[0].is_number_unsigned() ||
            !off[1].is_number_unsigned()) {
            throw MalformedHeader("tensor '" + key + "': data_offsets must be [begin, end]");
        }
        meta.begin = off[0].get<std::uint64_t>();
        meta.end = off[1].get<std::uint64_t>();
        if (meta.end < meta.begin) {
            throw OffsetOverlap("tensor '" + key + "': end precedes begin");
        }
        const auto expected = static_cast<std::uint64_t>(element_count(meta.shape)) * dtype_width(meta.dtype);
        if (meta.end - meta.begin != expected) {
            throw MalformedHeader("tensor '" + key + "': byte range length " +
                                  std::to_string(meta.end - meta.begin) + " does not match shape (" +
                                  std::to_string(expected) + " expected)");
        }
        if (meta.end > data_len) {
            throw TruncatedData("tensor '" + key + "': declared range ends at " + std::to_string(meta.end) +
                                " but data section has " + std::to_string(data_len) + " bytes");
        }
        metas.push_back(std::move(meta));
    }

    // Ranges must tile the data section: sorted, no overlap, no gap.
    std::sort(metas.begin(), metas.end(),
              [](const TensorMeta& a, const TensorMeta& b) { return a.begin < b.begin; });
    std::uint64_t cursor = 0;
    for (const auto& m : metas) {
        if (m.begin < cursor) {
            throw OffsetOverlap("tensor '" + m.name + "': range overlaps previous tensor");
        }
        if (m.begin > cursor) {
            throw OffsetOverlap("gap in data section before tensor '" + m.name + "'");
        }
        cursor = m.end;
    }
    if (cursor != data_len) {
        throw OffsetOverlap("data section has " + std::to_string(data_len - cursor) +
                            " trailing bytes not covered by any tensor");
    }

    for (const auto& m : metas) {
        std::vector<std::uint8_t> raw(m.end - m.begin);
        in.seekg(static_cast<std::streamoff>(8 + header_len + m.begin), std::ios::beg);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (static_cast<std::uint64_t>(in.gcount()) != raw.size()) {
            throw TruncatedData("tensor '" + m.name + "': data ends early");
        }
        map.entries.emplace(m.name, Tensor(m.dtype, m.shape, std::move(raw)));
    }
    return map;
}

std::vector<std::uint8_t> serialize_checkpoint(const TensorMap& map, const WriteOptions& options) {
    json header = json::object();
    std::uint64_t cursor = 0;
    std::vector<const std::vector<std::uint8_t>*> payloads;
    std::vector<std::vector<std::uint8_t>> converted; // keeps force_f32 buffers alive
    converted.reserve(map.entries.size());

    for (const auto& [name, tensor] : map.entries) { // std::map: already name-sorted
        DType out_dtype = tensor.dtype();
        const std::vector<std::uint8_t>* bytes = &tensor.raw();
        if (options.dtype_policy == DtypePolicy::force_f32 && tensor.dtype() != DType::f32) {
            converted.push_back(encode_from_f32(tensor.values(), DType::f32));
            bytes = &converted.back();
            out_dtype = DType::f32;
        }
        if (options.strict_finite) {
            const Eigen::ArrayXf v = tensor.values();
            if (!v.isFinite().all()) {
                throw NonFiniteValue("tensor '" + name + "' holds NaN or Inf");
            }
        }
        json entry;
        entry["dtype"] = std::string(dtype_name(out_dtype));
        entry["shape"] = tensor.shape();
        entry["data_offsets"] = {cursor, cursor + bytes->size()};
        header[name] = std::move(entry);
        payloads.push_back(bytes);
        cursor += bytes->size();
    }
    if (!map.metadata.empty()) {
        header["__metadata__"] = map.metadata;
    }

    // nlohmann keeps object keys sorted and dump() emits no insignificant
    // whitespace, so equal maps serialize to equal bytes.
    const std::string header_text = header.dump();
    const std::uint64_t header_len = header_text.size();

    std::vector<std::uint8_t> out;
    out.reserve(8 + header_text.size() + cursor);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>((header_len >> (8 * i)) & 0xFF));
    }
    out.insert(out.end(), header_text.begin(), header_text.end());
    for (const auto* p : payloads) {
        out.insert(out.end(), p->begin(), p->end());
    }
    return out;
}

void write_checkpoint(const TensorMap& map, const std::filesystem::path& path, const WriteOptions& options) {
    const auto bytes = serialize_checkpoint(map, options);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoFailure("cannot open checkpoint for writing: " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoFailure("checkpoint write failed: " + path.string());
    }
}

std::string map_content_digest(const TensorMap& map) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [name, tensor] : map.entries) {
        mix(name.data(), name.size());
        const auto dname = dtype_name(tensor.dtype());
        mix(dname.data(), dname.size());
        for (const auto d : tensor.shape()) {
            mix(&d, sizeof(d));
        }
        mix(tensor.raw().data(), tensor.raw().size());
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return std::string(out);
}

CompatReport validate_compatibility(const TensorMap& a, const TensorMap& b) {
    CompatReport report;
    for (const auto& [name, ta] : a.entries) {
        const auto it = b.entries.find(name);
        if (it == b.entries.end()) {
            report.missing_in_b.insert(name);
            continue;
        }
        report.shared_keys.insert(name);
        if (ta.shape() != it->second.shape()) {
            report.shape_mismatches.push_back({name, ta.shape(), it->second.shape()});
        }
        if (ta.dtype() != it->second.dtype()) {
            report.dtype_mismatches.push_back({name, ta.dtype(), it->second.dtype()});
        }
    }
    for (const auto& [name, tb] : b.entries) {
        if (a.entries.count(name) == 0) {
            report.missing_in_a.insert(name);
        }
    }
    return report;
}

} // namespace mergelab
