#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lvm::serialize {

// Checkpoint container: 4-byte magic, u32 version, length-prefixed UTF-8
// config text, then named little-endian float32 tensors with shape headers.
// Used with magic "LVMW" for model and tokenizer checkpoints.

constexpr uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

struct CheckpointFile {
    std::string config_text;
    std::vector<NamedTensor> tensors;
};

void write_checkpoint(const std::string& path, const char magic[4], const CheckpointFile& ckpt);
CheckpointFile read_checkpoint(const std::string& path, const char magic[4]);

// key=value text (one pair per line, '#' comments). Order-preserving.
std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text);
std::string kv_line(const std::string& key, const std::string& value);

} // namespace lvm::serialize
