#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "t2ue/core/rng.hpp"
#include "t2ue/nn/layers.hpp"

// Checkpoint container: magic, length-prefixed JSON header, then one raw
// little-endian float32 block per parameter in declaration order.

namespace t2ue {

inline constexpr char kCkptMagic[8] = {'T', '2', 'U', 'E', 'C', 'K', 'P', '1'};

namespace detail {

inline void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void write_f32_block(std::ostream& os, const std::vector<float>& v) {
    static_assert(sizeof(float) == 4);
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
    } else {
        for (float f : v) {
            uint32_t u;
            std::memcpy(&u, &f, 4);
            unsigned char b[4] = {static_cast<unsigned char>(u & 0xff), static_cast<unsigned char>((u >> 8) & 0xff),
                                  static_cast<unsigned char>((u >> 16) & 0xff),
                                  static_cast<unsigned char>((u >> 24) & 0xff)};
            os.write(reinterpret_cast<const char*>(b), 4);
        }
    }
}

inline void read_f32_block(std::istream& is, std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::little) {
        is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
    } else {
        for (auto& f : v) {
            unsigned char b[4];
            is.read(reinterpret_cast<char*>(b), 4);
            uint32_t u = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
            std::memcpy(&f, &u, 4);
        }
    }
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::string& path, nlohmann::json header, const std::vector<Param<S>*>& params) {
    nlohmann::json plist = nlohmann::json::array();
    for (const auto* p : params) plist.push_back({{"name", p->name}, {"shape", p->value.shape}});
    header["params"] = plist;
    header["format_version"] = 1;
    std::string hdr = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    os.write(kCkptMagic, 8);
    detail::write_u64(os, hdr.size());
    os.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    std::vector<float> buf;
    for (const auto* p : params) {
        buf.resize(static_cast<size_t>(p->value.size()));
        for (int64_t i = 0; i < p->value.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(p->value[i]);
        detail::write_f32_block(os, buf);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

struct LoadedCheckpoint {
    nlohmann::json header;
    std::vector<std::string> order;
    std::unordered_map<std::string, std::pair<std::vector<int>, std::vector<float>>> blocks;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCkptMagic, 8) != 0) throw std::runtime_error("checkpoint: bad magic: " + path);
    uint64_t hlen = detail::read_u64(is);
    std::string hdr(hlen, '\0');
    is.read(hdr.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw std::runtime_error("checkpoint: truncated header: " + path);

    LoadedCheckpoint out;
    out.header = nlohmann::json::parse(hdr);
    for (const auto& p : out.header.at("params")) {
        std::string name = p.at("name").get<std::string>();
        std::vector<int> shape = p.at("shape").get<std::vector<int>>();
        int64_t n = 1;
        for (int d : shape) n *= d;
        std::vector<float> block(static_cast<size_t>(n));
        detail::read_f32_block(is, block);
        if (!is) throw std::runtime_error("checkpoint: truncated block " + name + ": " + path);
        out.order.push_back(name);
        out.blocks.emplace(name, std::make_pair(std::move(shape), std::move(block)));
    }
    return out;
}

/// Copy loaded blocks into a model's parameters; names and shapes must match.
template <typename S>
void restore_params(const LoadedCheckpoint& ck, const std::vector<Param<S>*>& params) {
    if (params.size() != ck.order.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        auto* p = params[i];
        auto it = ck.blocks.find(p->name);
        if (it == ck.blocks.end()) throw std::runtime_error("checkpoint: missing block " + p->name);
        if (it->second.first != p->value.shape) throw std::runtime_error("checkpoint: shape mismatch for " + p->name);
        const auto& block = it->second.second;
        for (int64_t j = 0; j < p->value.size(); ++j) p->value[j] = static_cast<S>(block[static_cast<size_t>(j)]);
    }
}

inline uint64_t file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for hashing: " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (is) {
        is.read(buf, sizeof(buf));
        std::streamsize n = is.gcount();
        if (n > 0) h = fnv1a(buf, static_cast<size_t>(n), h);
    }
    return h;
}

inline std::string hash_hex(uint64_t h) {
    static const char* hexd = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = hexd[h & 0xf];
        h >>= 4;
    }
    return s;
}

}  // namespace t2ue
