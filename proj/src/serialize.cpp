#include "lvm/serialize.hpp"

#include <cstring>
#include <fstream>

#include "lvm/errors.hpp"

namespace lvm::serialize {

namespace {

void put_u32(std::ostream& out, uint32_t v) {
    const uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                          static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in, const std::string& path) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) {
        throw CorruptCheckpointError("truncated checkpoint: " + path);
    }
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, const float* data, size_t n) {
    // Host is little-endian on every supported target; keep the write explicit
    // so the on-disk format stays pinned regardless.
    for (size_t i = 0; i < n; ++i) {
        uint32_t bits;
        std::memcpy(&bits, &data[i], 4);
        put_u32(out, bits);
    }
}

} // namespace

void write_checkpoint(const std::string& path, const char magic[4], const CheckpointFile& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open checkpoint for writing: " + path);
    }
    out.write(magic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<uint32_t>(ckpt.config_text.size()));
    out.write(ckpt.config_text.data(), static_cast<std::streamsize>(ckpt.config_text.size()));
    put_u32(out, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        put_u32(out, static_cast<uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_u32(out, static_cast<uint32_t>(t.shape.size()));
        size_t n = 1;
        for (int d : t.shape) {
            put_u32(out, static_cast<uint32_t>(d));
            n *= static_cast<size_t>(d);
        }
        if (n != t.data.size()) {
            throw DimensionError("checkpoint tensor '" + t.name + "': shape/data mismatch");
        }
        put_f32(out, t.data.data(), n);
    }
    if (!out) {
        throw IoError("short write: " + path);
    }
}

CheckpointFile read_checkpoint(const std::string& path, const char magic[4]) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint: " + path);
    }
    char got[4];
    in.read(got, 4);
    if (in.gcount() != 4 || std::memcmp(got, magic, 4) != 0) {
        throw CorruptCheckpointError("bad checkpoint magic in " + path);
    }
    const uint32_t version = get_u32(in, path);
    if (version != kCheckpointVersion) {
        throw CorruptCheckpointError("unsupported checkpoint version " + std::to_string(version) +
                                     " in " + path);
    }
    CheckpointFile ckpt;
    const uint32_t text_len = get_u32(in, path);
    ckpt.config_text.resize(text_len);
    in.read(ckpt.config_text.data(), text_len);
    if (in.gcount() != static_cast<std::streamsize>(text_len)) {
        throw CorruptCheckpointError("truncated checkpoint: " + path);
    }
    const uint32_t count = get_u32(in, path);
    for (uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        const uint32_t name_len = get_u32(in, path);
        if (name_len > 4096) {
            throw CorruptCheckpointError("implausible tensor name length in " + path);
        }
        t.name.resize(name_len);
        in.read(t.name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len)) {
            throw CorruptCheckpointError("truncated checkpoint: " + path);
        }
        const uint32_t ndim = get_u32(in, path);
        if (ndim > 8) {
            throw CorruptCheckpointError("implausible tensor rank in " + path);
        }
        size_t n = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            const uint32_t dim = get_u32(in, path);
            if (dim == 0 || dim > (1u << 28)) {
                throw CorruptCheckpointError("implausible tensor extent in " + path);
            }
            t.shape.push_back(static_cast<int>(dim));
            n *= dim;
        }
        t.data.resize(n);
        for (size_t j = 0; j < n; ++j) {
            const uint32_t bits = get_u32(in, path);
            std::memcpy(&t.data[j], &bits, 4);
        }
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    size_t pos = 0;
    int lineno = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) {
            end = text.size();
        }
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const size_t hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        size_t a = line.find_first_not_of(" \t");
        if (a == std::string::npos) {
            continue;
        }
        size_t b = line.find_last_not_of(" \t");
        line = line.substr(a, b - a + 1);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config line " + std::to_string(lineno) + ": expected key=value, got '" +
                             line + "'");
        }
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto strip = [](std::string& s) {
            const size_t x = s.find_first_not_of(" \t");
            if (x == std::string::npos) {
                s.clear();
                return;
            }
            const size_t y = s.find_last_not_of(" \t");
            s = s.substr(x, y - x + 1);
        };
        strip(key);
        strip(value);
        if (key.empty()) {
            throw ParseError("config line " + std::to_string(lineno) + ": empty key");
        }
        out.emplace_back(key, value);
    }
    return out;
}

std::string kv_line(const std::string& key, const std::string& value) {
    return key + "=" + value + "\n";
}

} // namespace lvm::serialize
