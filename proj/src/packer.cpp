#include "lvm/packer.hpp"

#include <cstring>
#include <fstream>

#include "lvm/errors.hpp"
#include "lvm/rng.hpp"

namespace lvm::pack {

namespace {

void put_u32(std::ostream& out, uint32_t v) {
    const uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                          static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in, const std::string& path, const char* what) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) {
        throw LengthError(std::string("truncated ") + what + " file: " + path);
    }
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_u16(std::ostream& out, uint16_t v) {
    const uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

} // namespace

TokenStream sentence_to_tokens(const forge::VisualSentence& s, const vq::Tokenizer& tok) {
    const VocabularyLayout vocab{tok.cfg.codebook_size};
    TokenStream out;
    out.reserve(2 + s.images.size() * static_cast<size_t>(tok.cfg.tokens_per_image()));
    out.push_back(static_cast<uint16_t>(vocab.bos()));
    for (const auto& img : s.images) {
        const vq::TokenGrid grid = vq::encode(tok, img);
        out.insert(out.end(), grid.indices.begin(), grid.indices.end());
    }
    out.push_back(static_cast<uint16_t>(vocab.eos()));
    return out;
}

std::vector<TokenStream> pack_windows(const std::vector<TokenStream>& streams, int window_len,
                                      uint64_t seed) {
    if (window_len < 3) {
        throw ConfigError("pack_windows: window length must be >= 3, got " +
                          std::to_string(window_len));
    }
    std::vector<size_t> order(streams.size());
    for (size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    Rng rng = Rng::substream(seed, "packer/shuffle");
    rng.shuffle(order);

    std::vector<TokenStream> windows;
    TokenStream cur;
    cur.reserve(static_cast<size_t>(window_len));
    for (size_t oi : order) {
        for (uint16_t id : streams[oi]) {
            cur.push_back(id);
            if (static_cast<int>(cur.size()) == window_len) {
                windows.push_back(std::move(cur));
                cur = TokenStream();
                cur.reserve(static_cast<size_t>(window_len));
            }
        }
    }
    // final partial window dropped
    return windows;
}

void write_shard(const std::string& path, const Shard& shard) {
    const VocabularyLayout vocab{shard.codebook_size};
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open shard for writing: " + path);
    }
    out.write("LVMS", 4);
    put_u32(out, kShardVersion);
    put_u32(out, static_cast<uint32_t>(shard.codebook_size));
    put_u32(out, static_cast<uint32_t>(shard.window_len));
    put_u32(out, static_cast<uint32_t>(shard.windows.size()));
    for (const auto& w : shard.windows) {
        if (static_cast<int>(w.size()) != shard.window_len) {
            throw DimensionError("write_shard: window length " + std::to_string(w.size()) +
                                 " != L = " + std::to_string(shard.window_len));
        }
        for (uint16_t id : w) {
            if (id >= vocab.vocab_size()) {
                throw InvalidTokenError("write_shard: token id " + std::to_string(id) +
                                        " >= vocab size " + std::to_string(vocab.vocab_size()));
            }
            put_u16(out, id);
        }
    }
    if (!out) {
        throw IoError("short write: " + path);
    }
}

Shard read_shard(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open shard: " + path);
    }
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "LVMS", 4) != 0) {
        throw CorruptShardError("bad shard magic in " + path);
    }
    const uint32_t version = get_u32(in, path, "shard");
    if (version != kShardVersion) {
        throw CorruptShardError("unsupported shard version " + std::to_string(version) + " in " +
                                path);
    }
    Shard shard;
    shard.codebook_size = static_cast<int>(get_u32(in, path, "shard"));
    shard.window_len = static_cast<int>(get_u32(in, path, "shard"));
    const uint32_t count = get_u32(in, path, "shard");
    if (shard.codebook_size < 2 || shard.codebook_size > 65534 || shard.window_len < 3) {
        throw CorruptShardError("implausible shard header in " + path);
    }
    const VocabularyLayout vocab{shard.codebook_size};
    std::vector<uint8_t> buf(static_cast<size_t>(shard.window_len) * 2);
    for (uint32_t w = 0; w < count; ++w) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
            throw LengthError("truncated shard file: " + path);
        }
        TokenStream win(static_cast<size_t>(shard.window_len));
        for (int i = 0; i < shard.window_len; ++i) {
            const uint16_t id = static_cast<uint16_t>(buf[static_cast<size_t>(i) * 2]) |
                                (static_cast<uint16_t>(buf[static_cast<size_t>(i) * 2 + 1]) << 8);
            if (id >= vocab.vocab_size()) {
                throw InvalidTokenError("shard " + path + ": token id " + std::to_string(id) +
                                        " >= vocab size " + std::to_string(vocab.vocab_size()));
            }
            win[static_cast<size_t>(i)] = id;
        }
        shard.windows.push_back(std::move(win));
    }
    // trailing garbage counts as corruption
    char extra;
    if (in.read(&extra, 1); in.gcount() != 0) {
        throw LengthError("shard has trailing bytes: " + path);
    }
    return shard;
}

void write_streams(const std::string& path, const StreamsFile& sf) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open streams file for writing: " + path);
    }
    out.write("LVMT", 4);
    put_u32(out, kStreamsVersion);
    put_u32(out, static_cast<uint32_t>(sf.codebook_size));
    put_u32(out, static_cast<uint32_t>(sf.streams.size()));
    const VocabularyLayout vocab{sf.codebook_size};
    for (const auto& s : sf.streams) {
        put_u32(out, static_cast<uint32_t>(s.size()));
        for (uint16_t id : s) {
            if (id >= vocab.vocab_size()) {
                throw InvalidTokenError("write_streams: token id out of range");
            }
            put_u16(out, id);
        }
    }
    if (!out) {
        throw IoError("short write: " + path);
    }
}

StreamsFile read_streams(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open streams file: " + path);
    }
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "LVMT", 4) != 0) {
        throw CorruptShardError("bad streams magic in " + path);
    }
    const uint32_t version = get_u32(in, path, "streams");
    if (version != kStreamsVersion) {
        throw CorruptShardError("unsupported streams version in " + path);
    }
    StreamsFile sf;
    sf.codebook_size = static_cast<int>(get_u32(in, path, "streams"));
    const uint32_t count = get_u32(in, path, "streams");
    const VocabularyLayout vocab{sf.codebook_size};
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t len = get_u32(in, path, "streams");
        TokenStream s(len);
        std::vector<uint8_t> buf(static_cast<size_t>(len) * 2);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
            throw LengthError("truncated streams file: " + path);
        }
        for (uint32_t j = 0; j < len; ++j) {
            const uint16_t id = static_cast<uint16_t>(buf[static_cast<size_t>(j) * 2]) |
                                (static_cast<uint16_t>(buf[static_cast<size_t>(j) * 2 + 1]) << 8);
            if (id >= vocab.vocab_size()) {
                throw InvalidTokenError("streams " + path + ": token id out of range");
            }
            s[j] = id;
        }
        sf.streams.push_back(std::move(s));
    }
    return sf;
}

std::string to_string(StatsCategory c) {
    switch (c) {
        case StatsCategory::single_images: return "single_images";
        case StatsCategory::images_with_annotations: return "images_with_annotations";
        case StatsCategory::videos: return "videos";
        case StatsCategory::videos_with_annotations: return "videos_with_annotations";
        case StatsCategory::synthetic_views: return "synthetic_views";
    }
    return "?";
}

StatsCategory stats_category_of(forge::SentenceKind kind) {
    using forge::SentenceKind;
    switch (kind) {
        case SentenceKind::single: return StatsCategory::single_images;
        case SentenceKind::category:
        case SentenceKind::pair:
        case SentenceKind::multi_annot: return StatsCategory::images_with_annotations;
        case SentenceKind::video: return StatsCategory::videos;
        case SentenceKind::video_annot_interleaved:
        case SentenceKind::video_annot_grouped: return StatsCategory::videos_with_annotations;
        case SentenceKind::multiview: return StatsCategory::synthetic_views;
    }
    throw FormatError("unknown sentence kind in stats");
}

CorpusStats corpus_stats(const std::vector<std::string>& manifest_paths, int tokens_per_image) {
    if (tokens_per_image <= 0) {
        throw ConfigError("corpus_stats: tokens_per_image must be positive");
    }
    CorpusStats stats;
    stats.rows.resize(kNumStatsCategories);
    for (int i = 0; i < kNumStatsCategories; ++i) {
        stats.rows[static_cast<size_t>(i)].category = static_cast<StatsCategory>(i);
    }
    for (const auto& path : manifest_paths) {
        for (const auto& entry : forge::parse_manifest(path)) {
            const int64_t tokens =
                2 + static_cast<int64_t>(entry.paths.size()) * tokens_per_image;
            auto& row = stats.rows[static_cast<size_t>(stats_category_of(entry.kind))];
            row.sentences += 1;
            row.tokens += tokens;
            stats.total_sentences += 1;
            stats.total_tokens += tokens;
        }
    }
    for (auto& row : stats.rows) {
        row.percent = stats.total_tokens == 0
                          ? 0.0
                          : 100.0 * static_cast<double>(row.tokens) /
                                static_cast<double>(stats.total_tokens);
    }
    return stats;
}

std::string format_stats_csv(const CorpusStats& stats) {
    std::string out = "category,sentences,tokens,percent\n";
    char buf[128];
    for (const auto& row : stats.rows) {
        std::snprintf(buf, sizeof buf, "%s,%lld,%lld,%.4f\n", to_string(row.category).c_str(),
                      static_cast<long long>(row.sentences), static_cast<long long>(row.tokens),
                      row.percent);
        out += buf;
    }
    double pct_sum = 0.0;
    for (const auto& row : stats.rows) {
        pct_sum += row.percent;
    }
    std::snprintf(buf, sizeof buf, "total,%lld,%lld,%.4f\n",
                  static_cast<long long>(stats.total_sentences),
                  static_cast<long long>(stats.total_tokens), pct_sum);
    out += buf;
    return out;
}

} // namespace lvm::pack
