#include "textgraph/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace textgraph::io {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

template <class T>
std::vector<std::uint8_t> to_bytes_of(std::span<const T> values) {
    std::vector<std::uint8_t> out(values.size() * sizeof(T));
    if (!values.empty()) std::memcpy(out.data(), values.data(), out.size());
    return out;
}

template <class T>
std::vector<T> from_bytes_of(const Array& a) {
    std::vector<T> out(a.bytes.size() / sizeof(T));
    if (!out.empty()) std::memcpy(out.data(), a.bytes.data(), out.size() * sizeof(T));
    return out;
}

index_t shape_product(const Shape& s) {
    index_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

template <class T>
void put_scalar(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <class T>
T read_scalar(std::string_view bytes, std::size_t& pos) {
    if (pos + sizeof(T) > bytes.size()) throw FormatError("container: truncated");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace

const char* dtype_name(DType t) {
    switch (t) {
        case DType::f32: return "f32";
        case DType::f64: return "f64";
        case DType::i32: return "i32";
        case DType::i64: return "i64";
        case DType::u64: return "u64";
    }
    return "?";
}

DType parse_dtype(const std::string& name) {
    if (name == "f32") return DType::f32;
    if (name == "f64") return DType::f64;
    if (name == "i32") return DType::i32;
    if (name == "i64") return DType::i64;
    if (name == "u64") return DType::u64;
    throw FormatError("container: unknown dtype '" + name + "'");
}

std::size_t dtype_size(DType t) { return t == DType::f32 || t == DType::i32 ? 4 : 8; }

void Container::put(Array a) {
    if (has(a.name)) throw ArgumentError("container: duplicate array '" + a.name + "'");
    arrays_.push_back(std::move(a));
}

void Container::put_real(const std::string& name, const Shape& shape, std::span<const real> values) {
    if (shape_product(shape) != static_cast<index_t>(values.size())) {
        throw ShapeError("container: array '" + name + "' shape " + shape_str(shape) + " holds " +
                         std::to_string(values.size()) + " values");
    }
    put({name, sizeof(real) == 4 ? DType::f32 : DType::f64, shape, to_bytes_of(values)});
}

void Container::put_i64(const std::string& name, std::span<const std::int64_t> values) {
    put({name, DType::i64, {static_cast<index_t>(values.size())}, to_bytes_of(values)});
}

void Container::put_u64(const std::string& name, std::span<const std::uint64_t> values) {
    put({name, DType::u64, {static_cast<index_t>(values.size())}, to_bytes_of(values)});
}

void Container::put_i32(const std::string& name, std::span<const int> values) {
    put({name, DType::i32, {static_cast<index_t>(values.size())}, to_bytes_of(values)});
}

bool Container::has(const std::string& name) const {
    for (const auto& a : arrays_) {
        if (a.name == name) return true;
    }
    return false;
}

const Array& Container::array(const std::string& name) const {
    for (const auto& a : arrays_) {
        if (a.name == name) return a;
    }
    throw FormatError("container: no array named '" + name + "'");
}

std::vector<real> Container::get_real(const std::string& name) const {
    const auto& a = array(name);
    if (a.dtype == DType::f64) {
        auto v = from_bytes_of<double>(a);
        return {v.begin(), v.end()};
    }
    if (a.dtype == DType::f32) {
        auto v = from_bytes_of<float>(a);
        return {v.begin(), v.end()};
    }
    throw FormatError("container: array '" + name + "' is " + dtype_name(a.dtype) + ", expected a float type");
}

std::vector<std::int64_t> Container::get_i64(const std::string& name) const {
    const auto& a = array(name);
    if (a.dtype != DType::i64) throw FormatError("container: array '" + name + "' is not i64");
    return from_bytes_of<std::int64_t>(a);
}

std::vector<std::uint64_t> Container::get_u64(const std::string& name) const {
    const auto& a = array(name);
    if (a.dtype != DType::u64) throw FormatError("container: array '" + name + "' is not u64");
    return from_bytes_of<std::uint64_t>(a);
}

std::vector<int> Container::get_i32(const std::string& name) const {
    const auto& a = array(name);
    if (a.dtype != DType::i32) throw FormatError("container: array '" + name + "' is not i32");
    return from_bytes_of<int>(a);
}

std::string Container::to_bytes() const {
    nlohmann::json header{{"kind", kind}, {"meta", meta}};
    auto list = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& a : arrays_) {
        list.push_back({{"name", a.name},
                        {"dtype", dtype_name(a.dtype)},
                        {"shape", a.shape},
                        {"offset", offset},
                        {"bytes", a.bytes.size()}});
        offset += a.bytes.size();
    }
    header["arrays"] = list;
    const auto text = header.dump();
    std::string out(kMagic);
    put_scalar<std::uint32_t>(out, kFormatVersion);
    put_scalar<std::uint64_t>(out, text.size());
    out += text;
    for (const auto& a : arrays_) out.append(reinterpret_cast<const char*>(a.bytes.data()), a.bytes.size());
    return out;
}

Container Container::from_bytes(std::string_view bytes) {
    if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
        throw FormatError("container: bad magic");
    }
    std::size_t pos = kMagic.size();
    const auto version = read_scalar<std::uint32_t>(bytes, pos);
    if (version != kFormatVersion) throw FormatError("container: unsupported version " + std::to_string(version));
    const auto header_len = read_scalar<std::uint64_t>(bytes, pos);
    if (pos + header_len > bytes.size()) throw FormatError("container: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(pos, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("container: header is not JSON: ") + e.what());
    }
    pos += header_len;
    const auto payload = bytes.substr(pos);
    Container c;
    try {
        c.kind = header.at("kind").get<std::string>();
        c.meta = header.value("meta", nlohmann::json::object());
        for (const auto& entry : header.at("arrays")) {
            Array a;
            a.name = entry.at("name").get<std::string>();
            a.dtype = parse_dtype(entry.at("dtype").get<std::string>());
            a.shape = entry.at("shape").get<Shape>();
            const auto off = entry.at("offset").get<std::uint64_t>();
            const auto len = entry.at("bytes").get<std::uint64_t>();
            if (off + len > payload.size()) throw FormatError("container: array '" + a.name + "' out of bounds");
            if (static_cast<std::uint64_t>(shape_product(a.shape)) * dtype_size(a.dtype) != len) {
                throw FormatError("container: array '" + a.name + "' size does not match its shape");
            }
            a.bytes.assign(payload.begin() + static_cast<std::ptrdiff_t>(off),
                           payload.begin() + static_cast<std::ptrdiff_t>(off + len));
            c.put(std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("container: malformed header: ") + e.what());
    }
    return c;
}

void Container::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    const auto bytes = to_bytes();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("failed writing " + path);
}

Container Container::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_bytes(ss.str());
}

Container batches_to_container(const std::vector<batching::CompactBatch>& batches) {
    Container c;
    c.kind = "compact_batches";
    c.meta["n_batches"] = batches.size();
    for (std::size_t i = 0; i < batches.size(); ++i) {
        const auto& b = batches[i];
        const auto p = "b" + std::to_string(i) + ".";
        c.put_i64(p + "char_ids", b.char_ids);
        c.put_i64(p + "chars_per_doc", b.chars_per_doc);
        c.put_i64(p + "char_token_index", b.char_token_index);
        c.put_i64(p + "tokens_per_doc", b.tokens_per_doc);
        c.put_i64(p + "token_char_counts", b.token_char_counts);
        c.put_i64(p + "token_pos_in_doc", b.token_pos_in_doc);
        c.put_i64(p + "token_pos_in_batch", b.token_pos_in_batch);
        c.put_i64(p + "token_doc_id", b.token_doc_id);
        c.put_i64(p + "doc_lower_bounds", b.doc_lower_bounds);
        c.put_real(p + "subsample_p", {b.n_tokens()}, b.subsample_p);
        c.put_real(p + "polarity", {b.n_tokens()}, b.polarity);
        c.put_real(p + "subjectivity", {b.n_tokens()}, b.subjectivity);
        c.put_real(p + "embeddings", {b.n_tokens(), b.embedding_dim}, b.embeddings);
        c.put_i32(p + "labels", b.labels);
        c.put_i64(p + "doc_ids", b.doc_ids);
        c.put_u64(p + "doc_keys", b.doc_keys);
    }
    return c;
}

std::vector<batching::CompactBatch> batches_from_container(const Container& c) {
    if (c.kind != "compact_batches") throw FormatError("container kind '" + c.kind + "' is not compact_batches");
    const auto n = c.meta.at("n_batches").get<std::size_t>();
    std::vector<batching::CompactBatch> out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = "b" + std::to_string(i) + ".";
        batching::CompactBatch b;
        b.char_ids = c.get_i64(p + "char_ids");
        b.chars_per_doc = c.get_i64(p + "chars_per_doc");
        b.char_token_index = c.get_i64(p + "char_token_index");
        b.tokens_per_doc = c.get_i64(p + "tokens_per_doc");
        b.token_char_counts = c.get_i64(p + "token_char_counts");
        b.token_pos_in_doc = c.get_i64(p + "token_pos_in_doc");
        b.token_pos_in_batch = c.get_i64(p + "token_pos_in_batch");
        b.token_doc_id = c.get_i64(p + "token_doc_id");
        b.doc_lower_bounds = c.get_i64(p + "doc_lower_bounds");
        b.subsample_p = c.get_real(p + "subsample_p");
        b.polarity = c.get_real(p + "polarity");
        b.subjectivity = c.get_real(p + "subjectivity");
        const auto& emb = c.array(p + "embeddings");
        b.embedding_dim = emb.shape.size() == 2 ? static_cast<int>(emb.shape[1]) : 0;
        b.embeddings = c.get_real(p + "embeddings");
        b.labels = c.get_i32(p + "labels");
        b.doc_ids = c.get_i64(p + "doc_ids");
        b.doc_keys = c.get_u64(p + "doc_keys");
        batching::check_invariants(b);
        out.push_back(std::move(b));
    }
    return out;
}

void save_batches(const std::string& path, const std::vector<batching::CompactBatch>& batches,
                  const nlohmann::json& meta) {
    auto c = batches_to_container(batches);
    c.meta["user"] = meta;
    c.save(path);
}

std::vector<batching::CompactBatch> load_batches(const std::string& path, nlohmann::json* meta) {
    auto c = Container::load(path);
    if (meta) *meta = c.meta.value("user", nlohmann::json::object());
    return batches_from_container(c);
}

}  // namespace textgraph::io
