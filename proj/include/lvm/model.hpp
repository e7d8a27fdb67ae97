#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lvm/optim.hpp"
#include "lvm/packer.hpp"
#include "lvm/tensor.hpp"

namespace lvm::lm {

struct ModelConfig {
    std::string name = "custom";
    int hidden_dim = 64;
    int mlp_dim = 176;
    int n_heads = 4;
    int n_layers = 2;
    int vocab_size = 258;
    int context_len = 1024;
    double rope_base = 10000.0;

    // Architecture constants, pinned by config echo tests: pre-norm RMS
    // normalization, SiLU-gated MLP, no biases, untied input/output
    // embeddings, 1/sqrt(head_dim) attention scaling, no dropout.
    static constexpr bool kPreNormRms = true;
    static constexpr bool kSiluGatedMlp = true;
    static constexpr bool kUseBiases = false;
    static constexpr bool kTiedEmbeddings = false;

    int head_dim() const { return hidden_dim / n_heads; }
    void validate() const;
    std::string to_text() const;
    static ModelConfig from_text(const std::string& text);
};

// Named configurations: LVM-300M/600M/1B/3B at paper scale, desk-micro/
// desk-small/desk-med at desk scale.
ModelConfig config_preset(const std::string& name);
std::vector<std::string> preset_names();

struct LayerWeights {
    Tensor attn_norm, wq, wk, wv, wo;
    Tensor mlp_norm, w_gate, w_up, w_down;
};

struct Model {
    ModelConfig cfg;
    Tensor tok_emb; // [V, h]
    std::vector<LayerWeights> layers;
    Tensor final_norm; // [h]
    Tensor out_proj;   // [h, V]

    void visit_params(const std::function<void(const std::string&, Tensor&)>& fn);
    void visit_params(const std::function<void(const std::string&, const Tensor&)>& fn) const;
    int64_t param_count() const;
};

Model make_model(const ModelConfig& cfg, uint64_t seed);

constexpr float kRmsEps = 1e-5f;

// Full causal forward: logits for every position, [T, V]. Position t depends
// only on tokens <= t. Supply a tape during training only.
Tensor forward(const Model& m, const std::vector<int>& tokens, Tape* tape);

// --- training ----------------------------------------------------------------

struct TrainConfig {
    int steps = 100;
    int batch_windows = 1;
    uint64_t seed = 0;
};

struct LossPoint {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
};

struct TrainerState {
    std::vector<AdamStateT<float>> adam; // aligned with visit_params order
    int step = 0;
    std::array<uint64_t, 4> order_rng_state{};
};

TrainerState make_trainer_state(const Model& m);

struct TrainResult {
    std::vector<LossPoint> curve;
    bool aborted = false;
    std::string abort_reason;
};

// Next-token cross-entropy over seeded single-epoch shuffles of the windows
// (reshuffled per epoch, no repeats within an epoch).
TrainResult train(Model& m, const std::vector<pack::TokenStream>& windows,
                  const OptimizerConfig& opt, const TrainConfig& tc, TrainerState& state);

// Mean cross-entropy of one window batch under the current weights (no update).
double batch_loss(const Model& m, const std::vector<pack::TokenStream>& batch);

std::string format_loss_csv(const std::vector<LossPoint>& curve);

// --- sampling / evaluation -----------------------------------------------------

struct SamplerConfig {
    double temperature = 0.0; // 0 => argmax decoding
    std::optional<int> top_k;
    uint64_t seed = 0;
    // Restrict sampling to ids < vocab_limit (used by visual prompting to
    // keep generated grids decodable).
    std::optional<int> vocab_limit;
};

// Incremental decoding state: per-layer key/value caches.
struct DecodeState {
    explicit DecodeState(const ModelConfig& cfg);
    int pos = 0;
    std::vector<std::vector<float>> k_cache; // per layer, [L * h]
    std::vector<std::vector<float>> v_cache;
};

// Feeds one token at the next position; returns the logits row [V] predicting
// the following token. Bit-identical to the matching row of forward().
std::vector<float> decode_step(const Model& m, DecodeState& st, int token);

std::vector<int> generate(const Model& m, const std::vector<int>& prefix, int n,
                          const SamplerConfig& sampler);

struct NllResult {
    double mean_nll = 0.0;
    double perplexity = 0.0;
    std::vector<double> per_token;
};

// Mean NLL of target given prefix; perplexity = exp(mean NLL). The mean uses
// pairwise summation so identical per-token values average exactly.
NllResult sequence_nll(const Model& m, const std::vector<int>& prefix,
                       const std::vector<int>& target);

// --- checkpoints ----------------------------------------------------------------

// "LVMW" container with config echo, weights, optimizer state, RNG state and
// step counter, plus a fixed probe window and its logits for self-verification.
void save_checkpoint(const std::string& path, const Model& m, const TrainerState& state);

struct LoadedCheckpoint {
    Model model;
    TrainerState trainer;
};
// Verifies the stored probe logits against a fresh forward (1e-6).
LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace lvm::lm
