#pragma once

#include "mergelab/dtype.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mergelab {

struct TensorMeta {
    std::string name;
    DType dtype = DType::f32;
    std::vector<std::int64_t> shape;
    std::uint64_t begin = 0; // offsets into the data section
    std::uint64_t end = 0;
};

std::int64_t element_count(const std::vector<std::int64_t>& shape);

// A named tensor's payload: stored dtype + raw bytes, decoded to f32 on
// demand. Merged tensors are constructed from f32 values directly.
class Tensor {
  public:
    Tensor() = default;
    Tensor(DType dtype, std::vector<std::int64_t> shape, std::vector<std::uint8_t> raw);
    static Tensor from_values(std::vector<std::int64_t> shape, const Eigen::ArrayXf& values,
                              DType stored = DType::f32);

    DType dtype() const { return dtype_; }
    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t size() const { return element_count(shape_); }
    const std::vector<std::uint8_t>& raw() const { return raw_; }

    Eigen::ArrayXf values() const; // f32 working representation

  private:
    DType dtype_ = DType::f32;
    std::vector<std::int64_t> shape_;
    std::vector<std::uint8_t> raw_;
};

struct TensorMap {
    std::map<std::string, Tensor> entries; // name-sorted by construction
    std::map<std::string, std::string> metadata;

    bool has(const std::string& name) const { return entries.count(name) > 0; }
    const Tensor& at(const std::string& name) const { return entries.at(name); }
    void put(const std::string& name, Tensor t) { entries.insert_or_assign(name, std::move(t)); }
};

struct ShapeMismatch {
    std::string name;
    std::vector<std::int64_t> shape_a;
    std::vector<std::int64_t> shape_b;
};

struct DtypeMismatch {
    std::string name;
    DType dtype_a;
    DType dtype_b;
};

struct CompatReport {
    std::set<std::string> shared_keys;
    std::set<std::string> missing_in_a;
    std::set<std::string> missing_in_b;
    std::vector<ShapeMismatch> shape_mismatches;
    std::vector<DtypeMismatch> dtype_mismatches;

    bool compatible() const {
        return missing_in_a.empty() && missing_in_b.empty() && shape_mismatches.empty() &&
               dtype_mismatches.empty();
    }
    std::string describe() const;
};

enum class DtypePolicy { preserve, force_f32 };

struct WriteOptions {
    DtypePolicy dtype_policy = DtypePolicy::preserve;
    bool strict_finite = false; // reject NaN/Inf payloads
};

// File layout: u64-LE header length N, then N bytes of JSON mapping
// tensor name -> {dtype, shape, data_offsets:[begin,end]} plus an optional
// "__metadata__" string map, then the data section. Offsets are relative
// to the data section start and must tile it exactly.
TensorMap read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const TensorMap& map, const std::filesystem::path& path,
                      const WriteOptions& options = {});

// Canonical serialized bytes of the map (what write_checkpoint puts on disk).
std::vector<std::uint8_t> serialize_checkpoint(const TensorMap& map, const WriteOptions& options = {});

CompatReport validate_compatibility(const TensorMap& a, const TensorMap& b);

// Digest over tensor names, dtypes, shapes, and raw payloads; metadata is
// excluded, so it identifies the parameters themselves. Identity merges
// reproduce their input's content digest even though provenance metadata
// changes the file bytes.
std::string map_content_digest(const TensorMap& map);

} // namespace mergelab
