#pragma once

#include <bit>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dwidn/core/error.hpp"
#include "dwidn/core/tensor.hpp"

// On-disk layout:
//   line 1   "DWIDN-CONTAINER 1"
//   line 2   "<manifest bytes> <manifest fnv1a-64 hex>"
//   manifest compact JSON (keys sorted)
//   payload  tensors back to back, little-endian, complex as re/im pairs
// The manifest records each tensor's dtype, shape and payload offset, plus an
// FNV-1a hash per 1 KiB payload block so corruption can be located.

namespace dwidn::io {

using json = nlohmann::json;

inline constexpr std::string_view kContainerMagic = "DWIDN-CONTAINER 1";
inline constexpr std::size_t kHashBlock = 1024;

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull)
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4)
        s[std::size_t(i)] = digits[v & 15];
    return s;
}

template <class T>
struct DTypeOf;
template <>
struct DTypeOf<float> {
    static constexpr std::string_view name = "f32";
    using scalar = float;
    static constexpr std::size_t components = 1;
};
template <>
struct DTypeOf<double> {
    static constexpr std::string_view name = "f64";
    using scalar = double;
    static constexpr std::size_t components = 1;
};
template <>
struct DTypeOf<std::complex<float>> {
    static constexpr std::string_view name = "c64";
    using scalar = float;
    static constexpr std::size_t components = 2;
};
template <>
struct DTypeOf<std::complex<double>> {
    static constexpr std::string_view name = "c128";
    using scalar = double;
    static constexpr std::size_t components = 2;
};
template <>
struct DTypeOf<std::uint8_t> {
    static constexpr std::string_view name = "u8";
    using scalar = std::uint8_t;
    static constexpr std::size_t components = 1;
};

inline std::size_t dtype_size(std::string_view dtype)
{
    if (dtype == "f32")
        return 4;
    if (dtype == "f64" || dtype == "c64")
        return 8;
    if (dtype == "c128")
        return 16;
    if (dtype == "u8")
        return 1;
    throw IoError("unknown dtype '" + std::string(dtype) + "'");
}

namespace detail {

template <class S>
void put_scalar(std::string& out, S v)
{
    char buf[sizeof(S)];
    std::memcpy(buf, &v, sizeof(S));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(buf, buf + sizeof(S));
    out.append(buf, sizeof(S));
}

template <class S>
S get_scalar(const char* p)
{
    char buf[sizeof(S)];
    std::memcpy(buf, p, sizeof(S));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(buf, buf + sizeof(S));
    S v;
    std::memcpy(&v, buf, sizeof(S));
    return v;
}

} // namespace detail

/// Named tensors plus JSON metadata. `role` says what the file holds
/// ("raw_acquisition", "dwi_case", "model", ...).
class Container {
public:
    std::string role;
    json provenance = json::object();
    json attributes = json::object();

    template <class T>
    void put(const std::string& name, const Tensor<T>& t)
    {
        using D = DTypeOf<T>;
        if (contains(name))
            throw Error("container already holds a tensor named '" + name + "'");
        Entry e{name, std::string(D::name), t.shape(), {}};
        e.bytes.reserve(t.size() * sizeof(T));
        for (const T& v : t.values()) {
            if constexpr (D::components == 2) {
                detail::put_scalar(e.bytes, v.real());
                detail::put_scalar(e.bytes, v.imag());
            } else {
                detail::put_scalar(e.bytes, v);
            }
        }
        entries_.push_back(std::move(e));
    }

    template <class T>
    Tensor<T> get(const std::string& name) const
    {
        using D = DTypeOf<T>;
        const Entry& e = entry(name);
        if (e.dtype != D::name)
            throw IoError("dtype mismatch: tensor '" + name + "' is stored as " + e.dtype + ", expected " +
                          std::string(D::name));
        Tensor<T> t(e.shape);
        const std::size_t step = sizeof(typename D::scalar);
        const char* p = e.bytes.data();
        for (auto& v : t.values()) {
            if constexpr (D::components == 2) {
                v = T(detail::get_scalar<typename D::scalar>(p), detail::get_scalar<typename D::scalar>(p + step));
                p += 2 * step;
            } else {
                v = detail::get_scalar<T>(p);
                p += step;
            }
        }
        return t;
    }

    bool contains(const std::string& name) const
    {
        for (const auto& e : entries_)
            if (e.name == name)
                return true;
        return false;
    }

    std::vector<std::string> names() const
    {
        std::vector<std::string> out;
        for (const auto& e : entries_)
            out.push_back(e.name);
        return out;
    }

    const std::string& dtype(const std::string& name) const { return entry(name).dtype; }
    const Shape& shape(const std::string& name) const { return entry(name).shape; }

    std::string serialize() const
    {
        std::string payload;
        json tensors = json::array();
        for (const auto& e : entries_) {
            tensors.push_back({{"name", e.name},
                               {"dtype", e.dtype},
                               {"shape", e.shape},
                               {"offset", payload.size()},
                               {"bytes", e.bytes.size()}});
            payload += e.bytes;
        }
        json hashes = json::array();
        for (std::size_t off = 0; off < payload.size(); off += kHashBlock)
            hashes.push_back(hex64(fnv1a64(std::string_view(payload).substr(off, kHashBlock))));
        const json manifest{{"role", role},
                            {"byte_order", "little"},
                            {"provenance", provenance},
                            {"attributes", attributes},
                            {"tensors", tensors},
                            {"payload_bytes", payload.size()},
                            {"block_size", kHashBlock},
                            {"block_hashes", hashes}};
        const std::string m = manifest.dump();
        std::string out(kContainerMagic);
        out += "\n" + std::to_string(m.size()) + " " + hex64(fnv1a64(m)) + "\n";
        out += m;
        out += payload;
        return out;
    }

    /// `source` names the file in error messages.
    static Container parse(std::string_view bytes, const std::string& source = "<memory>")
    {
        auto fail = [&](const std::string& what) { return IoError(source + ": " + what); };
        const std::size_t l1 = bytes.find('\n');
        if (l1 == std::string_view::npos || bytes.substr(0, l1) != kContainerMagic)
            return throw fail("not a dwidn container (bad magic line)"), Container{};
        const std::size_t l2 = bytes.find('\n', l1 + 1);
        if (l2 == std::string_view::npos)
            throw fail("truncated header");
        std::istringstream header(std::string(bytes.substr(l1 + 1, l2 - l1 - 1)));
        std::size_t manifest_len = 0;
        std::string manifest_hash;
        if (!(header >> manifest_len >> manifest_hash))
            throw fail("malformed header line");
        const std::size_t m0 = l2 + 1;
        if (bytes.size() < m0 + manifest_len)
            throw fail("truncated manifest: need " + std::to_string(manifest_len) + " bytes at offset " +
                       std::to_string(m0) + ", file has " + std::to_string(bytes.size()));
        const std::string_view m = bytes.substr(m0, manifest_len);
        if (hex64(fnv1a64(m)) != manifest_hash)
            throw fail("manifest hash mismatch (manifest occupies bytes " + std::to_string(m0) + ".." +
                       std::to_string(m0 + manifest_len - 1) + ")");
        json manifest;
        try {
            manifest = json::parse(m);
        } catch (const json::exception& e) {
            throw fail(std::string("manifest is not valid JSON: ") + e.what());
        }
        Container c;
        try {
            if (manifest.at("byte_order") != "little")
                throw fail("unsupported byte order");
            c.role = manifest.at("role").get<std::string>();
            c.provenance = manifest.at("provenance");
            c.attributes = manifest.at("attributes");
            const std::size_t p0 = m0 + manifest_len;
            const std::size_t payload_len = manifest.at("payload_bytes").get<std::size_t>();
            if (bytes.size() - p0 < payload_len)
                throw fail("truncated payload: expected " + std::to_string(payload_len) + " bytes at offset " +
                           std::to_string(p0) + ", found " + std::to_string(bytes.size() - p0));
            if (bytes.size() - p0 > payload_len)
                throw fail("trailing bytes after payload at offset " + std::to_string(p0 + payload_len));
            const std::string_view payload = bytes.substr(p0, payload_len);
            const std::size_t block = manifest.at("block_size").get<std::size_t>();
            const auto& hashes = manifest.at("block_hashes");
            if (block == 0 || hashes.size() != (payload_len + block - 1) / block)
                throw fail("block hash table does not match the payload size");
            for (std::size_t k = 0; k < hashes.size(); ++k) {
                const std::size_t off = k * block;
                if (hex64(fnv1a64(payload.substr(off, block))) != hashes[k].get<std::string>()) {
                    const std::size_t end = std::min(off + block, payload_len);
                    throw fail("payload corrupted in block " + std::to_string(k) + " (file offset " +
                               std::to_string(p0 + off) + ".." + std::to_string(p0 + end - 1) + ")");
                }
            }
            for (const auto& t : manifest.at("tensors")) {
                Entry e{t.at("name").get<std::string>(), t.at("dtype").get<std::string>(),
                        t.at("shape").get<Shape>(), {}};
                const std::size_t off = t.at("offset").get<std::size_t>(), len = t.at("bytes").get<std::size_t>();
                if (len != shape_volume(e.shape) * dtype_size(e.dtype))
                    throw fail("tensor '" + e.name + "' has " + std::to_string(len) + " bytes but shape " +
                               shape_string(e.shape) + " of " + e.dtype + " needs " +
                               std::to_string(shape_volume(e.shape) * dtype_size(e.dtype)));
                if (off > payload_len || len > payload_len - off)
                    throw fail("tensor '" + e.name + "' extends past the payload");
                e.bytes = std::string(payload.substr(off, len));
                c.entries_.push_back(std::move(e));
            }
        } catch (const json::exception& e) {
            throw fail(std::string("malformed manifest: ") + e.what());
        }
        return c;
    }

private:
    struct Entry {
        std::string name, dtype;
        Shape shape;
        std::string bytes;
    };
    std::vector<Entry> entries_;

    const Entry& entry(const std::string& name) const
    {
        for (const auto& e : entries_)
            if (e.name == name)
                return e;
        throw IoError("container has no tensor named '" + name + "'");
    }
};

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes through a temporary sibling and renames, so a crash never leaves a
/// half-written file under the final name.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), std::streamsize(bytes.size()));
        if (!out)
            throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline void write_container(const std::filesystem::path& path, const Container& c)
{
    write_file_atomic(path, c.serialize());
}

/// Throws IoError when `expected_role` is non-empty and differs.
inline Container read_container(const std::filesystem::path& path, std::string_view expected_role = {})
{
    Container c = Container::parse(read_file(path), path.string());
    if (!expected_role.empty() && c.role != expected_role)
        throw IoError(path.string() + ": holds a '" + c.role + "', expected a '" + std::string(expected_role) + "'");
    return c;
}

} // namespace dwidn::io
