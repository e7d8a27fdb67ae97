#pragma once

#include <span>
#include <string>
#include <vector>

#include "lvm/image.hpp"
#include "lvm/optim.hpp"
#include "lvm/tensor.hpp"

namespace lvm::vq {

struct TokenizerConfig {
    int image_size = 32;      // paper parity: 256
    int downsample_f = 4;     // paper parity: 16
    int codebook_size = 256;  // paper parity: 8192
    int codeword_dim = 16;
    double commitment_beta = 0.25;
    double ema_decay = 0.99;
    int base_channels = 32;

    int grid_size() const { return image_size / downsample_f; }
    int tokens_per_image() const { return grid_size() * grid_size(); }
    void validate() const;
    std::string to_text() const;
    static TokenizerConfig from_text(const std::string& text);
};

struct Codebook {
    int K = 0;
    int D = 0;
    std::vector<float> vectors;    // K x D
    std::vector<float> ema_counts; // K
    std::vector<float> ema_sums;   // K x D
};

struct TokenGrid {
    int h = 0;
    int w = 0;
    std::vector<uint16_t> indices;
};

// Nearest codeword by squared Euclidean distance; ties break to the lowest
// index. Returns the index and a view of the winning codeword row.
std::pair<int, std::span<const float>> quantize(std::span<const float> latent, const Codebook& cb);

struct Tokenizer {
    TokenizerConfig cfg;
    // conv parameters in execution order, named for checkpoints/optimizer
    std::vector<std::pair<std::string, Tensor>> params;
    Codebook codebook;
    bool codebook_ready = false;
    // Codebook maintenance (EMA + dead-code revival) runs while true;
    // train_tokenizer freezes it for the final quarter of a run so the encoder
    // and decoder converge onto fixed cells.
    bool codebook_frozen = false;

    Tensor& param(const std::string& name);
};

Tokenizer make_tokenizer(const TokenizerConfig& cfg, uint64_t seed);

// [3,H,W] float in [0,1]
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t);

// Encoder latents [D, g, g]; supply a tape during training only.
Tensor encode_latents(const Tokenizer& tok, const Tensor& img_chw, Tape* tape);
Tensor decode_latents(const Tokenizer& tok, const Tensor& lat_chw, Tape* tape);

TokenGrid encode(const Tokenizer& tok, const Image& img);
Image decode(const Tokenizer& tok, const TokenGrid& grid);

struct TokenizerOptState {
    std::vector<AdamStateT<float>> states;
};
TokenizerOptState make_opt_state(const Tokenizer& tok);

// Seeds the codebook with encoder latents sampled from the given images.
void init_codebook(Tokenizer& tok, const std::vector<Image>& images, uint64_t seed);

// EMA codebook statistics update from one batch of nearest-codeword
// assignments; latent_rows is row-major [n_assignments, D].
void ema_update(Codebook& cb, const std::vector<int>& assignments,
                const std::vector<float>& latent_rows, double decay);

struct VqLosses {
    double reconstruction = 0.0;
    double commitment = 0.0; // beta-weighted
    double total = 0.0;
};

// One optimization step over a batch: straight-through reconstruction +
// commitment backward, AdamW on the conv weights, EMA codebook update.
VqLosses tokenizer_train_step(Tokenizer& tok, const std::vector<Image>& batch,
                              TokenizerOptState& opt_state, const OptimizerConfig& opt, int step,
                              double lr);

// Forward losses only (no parameter or codebook update), for tests.
VqLosses tokenizer_eval_losses(const Tokenizer& tok, const std::vector<Image>& batch);

struct TokenizerTrainResult {
    std::vector<double> loss_curve; // total loss per step
};

// freeze_frac: trailing fraction of the run with the codebook held fixed so
// encoder and decoder converge onto final cells.
TokenizerTrainResult train_tokenizer(Tokenizer& tok, const std::vector<Image>& images, int steps,
                                     int batch_size, const OptimizerConfig& opt, uint64_t seed,
                                     double freeze_frac = 0.25);

double reconstruction_mse(const Tokenizer& tok, const std::vector<Image>& images);
// Fraction of codewords assigned at least once over the images.
double codebook_usage(const Tokenizer& tok, const std::vector<Image>& images);

void save_tokenizer(const Tokenizer& tok, const std::string& path);
Tokenizer load_tokenizer(const std::string& path);

} // namespace lvm::vq
