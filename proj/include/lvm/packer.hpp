#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lvm/forge.hpp"
#include "lvm/vq.hpp"

namespace lvm::pack {

// Token ids: image tokens occupy [0, K); BOS and EOS are appended after the
// codebook range.
struct VocabularyLayout {
    int codebook_size = 256;

    int bos() const { return codebook_size; }
    int eos() const { return codebook_size + 1; }
    int vocab_size() const { return codebook_size + 2; }
};

using TokenStream = std::vector<uint16_t>;

// [BOS] + scan-line token grids in sentence order + [EOS]
TokenStream sentence_to_tokens(const forge::VisualSentence& s, const vq::Tokenizer& tok);

// Seeded shuffle of the sentence streams, concatenation, then consecutive
// L-token windows; the final partial window is dropped.
std::vector<TokenStream> pack_windows(const std::vector<TokenStream>& streams, int window_len,
                                      uint64_t seed);

// --- shard file: magic "LVMS", version, K, L, count, u16-le ids -------------

constexpr uint32_t kShardVersion = 1;

struct Shard {
    int codebook_size = 0;
    int window_len = 0;
    std::vector<TokenStream> windows;
};

void write_shard(const std::string& path, const Shard& shard);
Shard read_shard(const std::string& path);

// --- token stream file: magic "LVMT" (intermediate tokenize output) ----------

constexpr uint32_t kStreamsVersion = 1;

struct StreamsFile {
    int codebook_size = 0;
    std::vector<TokenStream> streams;
};

void write_streams(const std::string& path, const StreamsFile& sf);
StreamsFile read_streams(const std::string& path);

// --- corpus statistics -------------------------------------------------------

// Report categories mirror the training-distribution figure: single images,
// images+annotations, videos, videos+annotations, synthetic views.
enum class StatsCategory {
    single_images = 0,
    images_with_annotations,
    videos,
    videos_with_annotations,
    synthetic_views,
};
constexpr int kNumStatsCategories = 5;

std::string to_string(StatsCategory c);
StatsCategory stats_category_of(forge::SentenceKind kind);

struct CorpusStatsRow {
    StatsCategory category;
    int64_t sentences = 0;
    int64_t tokens = 0;
    double percent = 0.0;
};

struct CorpusStats {
    std::vector<CorpusStatsRow> rows; // all five categories, fixed order
    int64_t total_sentences = 0;
    int64_t total_tokens = 0;
};

// Token counts follow the sentence layout: 2 + n_images * tokens_per_image.
CorpusStats corpus_stats(const std::vector<std::string>& manifest_paths, int tokens_per_image);

std::string format_stats_csv(const CorpusStats& stats);

} // namespace lvm::pack
