#pragma once

#include "textgraph/batching.hpp"
#include "textgraph/common.hpp"
#include "textgraph/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace textgraph::io {

/// Binary container layout (all integers little-endian):
///   8 bytes  magic "TXTGRAPH"
///   u32      format version
///   u64      header length in bytes
///   header   UTF-8 JSON: {"kind", "meta", "arrays": [{"name", "dtype",
///            "shape", "offset", "bytes"}]}
///   payload  array bytes back to back; offsets are relative to the payload
inline constexpr std::string_view kMagic = "TXTGRAPH";
inline constexpr std::uint32_t kFormatVersion = 1;

enum class DType { f32, f64, i32, i64, u64 };
const char* dtype_name(DType t);
DType parse_dtype(const std::string& name);
std::size_t dtype_size(DType t);

struct Array {
    std::string name;
    DType dtype = DType::f64;
    Shape shape;
    std::vector<std::uint8_t> bytes;
};

class Container {
public:
    std::string kind;
    nlohmann::json meta = nlohmann::json::object();

    /// Stored in the build's native precision.
    void put_real(const std::string& name, const Shape& shape, std::span<const real> values);
    void put_i64(const std::string& name, std::span<const std::int64_t> values);
    void put_u64(const std::string& name, std::span<const std::uint64_t> values);
    void put_i32(const std::string& name, std::span<const int> values);

    bool has(const std::string& name) const;
    const Array& array(const std::string& name) const;
    /// Converts f32 or f64 arrays to `real`.
    std::vector<real> get_real(const std::string& name) const;
    std::vector<std::int64_t> get_i64(const std::string& name) const;
    std::vector<std::uint64_t> get_u64(const std::string& name) const;
    std::vector<int> get_i32(const std::string& name) const;
    const std::vector<Array>& arrays() const { return arrays_; }

    std::string to_bytes() const;
    static Container from_bytes(std::string_view bytes);
    void save(const std::string& path) const;
    static Container load(const std::string& path);

private:
    void put(Array a);
    std::vector<Array> arrays_;
};

/// Serialized list of compact batches (kind "compact_batches").
void save_batches(const std::string& path, const std::vector<batching::CompactBatch>& batches,
                  const nlohmann::json& meta = nlohmann::json::object());
std::vector<batching::CompactBatch> load_batches(const std::string& path, nlohmann::json* meta = nullptr);
Container batches_to_container(const std::vector<batching::CompactBatch>& batches);
std::vector<batching::CompactBatch> batches_from_container(const Container& c);

}  // namespace textgraph::io
