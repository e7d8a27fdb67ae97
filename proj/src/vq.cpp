#include "lvm/vq.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <cmath>
#include <set>

#include "lvm/ops.hpp"
#include "lvm/rng.hpp"
#include "lvm/serialize.hpp"

namespace lvm::vq {

namespace {

int stages_for(int f) {
    int n = 0;
    int v = f;
    while (v > 1) {
        if (v % 2 != 0) {
            return -1;
        }
        v /= 2;
        ++n;
    }
    return n;
}

Tensor conv_init(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape), true);
    const double fan_in = static_cast<double>(t.shape[1]) * t.shape[2] * t.shape[3];
    const double std = std::sqrt(1.0 / fan_in);
    for (int64_t i = 0; i < t.numel(); ++i) {
        t.ptr()[i] = static_cast<float>(rng.next_normal() * std);
    }
    return t;
}

} // namespace

void TokenizerConfig::validate() const {
    if (image_size <= 0 || downsample_f <= 1) {
        throw ConfigError("tokenizer: image_size and downsample factor must be positive");
    }
    if (image_size % downsample_f != 0) {
        throw ConfigError("tokenizer: image_size " + std::to_string(image_size) +
                          " not divisible by f=" + std::to_string(downsample_f));
    }
    if (stages_for(downsample_f) < 1) {
        throw ConfigError("tokenizer: downsample factor must be a power of two >= 2");
    }
    if (codebook_size < 2 || codebook_size > 65534) {
        throw ConfigError("tokenizer: codebook size must be in [2, 65534]");
    }
    if (codeword_dim < 1 || base_channels < 1) {
        throw ConfigError("tokenizer: codeword_dim and base_channels must be positive");
    }
}

std::string TokenizerConfig::to_text() const {
    using serialize::kv_line;
    std::string t;
    t += kv_line("image_size", std::to_string(image_size));
    t += kv_line("downsample_f", std::to_string(downsample_f));
    t += kv_line("codebook_size", std::to_string(codebook_size));
    t += kv_line("codeword_dim", std::to_string(codeword_dim));
    t += kv_line("commitment_beta", std::to_string(commitment_beta));
    t += kv_line("ema_decay", std::to_string(ema_decay));
    t += kv_line("base_channels", std::to_string(base_channels));
    return t;
}

TokenizerConfig TokenizerConfig::from_text(const std::string& text) {
    TokenizerConfig cfg;
    for (const auto& [k, v] : serialize::parse_kv_text(text)) {
        if (k == "image_size") {
            cfg.image_size = std::stoi(v);
        } else if (k == "downsample_f") {
            cfg.downsample_f = std::stoi(v);
        } else if (k == "codebook_size") {
            cfg.codebook_size = std::stoi(v);
        } else if (k == "codeword_dim") {
            cfg.codeword_dim = std::stoi(v);
        } else if (k == "commitment_beta") {
            cfg.commitment_beta = std::stod(v);
        } else if (k == "ema_decay") {
            cfg.ema_decay = std::stod(v);
        } else if (k == "base_channels") {
            cfg.base_channels = std::stoi(v);
        } else if (k == "codebook_ready") {
            // consumed by load_tokenizer
        } else {
            throw ConfigError("tokenizer config: unknown key '" + k + "'");
        }
    }
    cfg.validate();
    return cfg;
}

std::pair<int, std::span<const float>> quantize(std::span<const float> latent, const Codebook& cb) {
    if (static_cast<int>(latent.size()) != cb.D) {
        throw DimensionError("quantize: latent dim " + std::to_string(latent.size()) +
                             " != codeword dim " + std::to_string(cb.D));
    }
    int best = 0;
    double best_d = 0.0;
    for (int i = 0; i < cb.K; ++i) {
        const float* row = cb.vectors.data() + static_cast<size_t>(i) * cb.D;
        double d = 0.0;
        for (int j = 0; j < cb.D; ++j) {
            const double diff = static_cast<double>(latent[j]) - static_cast<double>(row[j]);
            d += diff * diff;
        }
        if (i == 0 || d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return {best, std::span<const float>(cb.vectors.data() + static_cast<size_t>(best) * cb.D,
                                         static_cast<size_t>(cb.D))};
}

Tensor& Tokenizer::param(const std::string& name) {
    for (auto& [n, t] : params) {
        if (n == name) {
            return t;
        }
    }
    throw ConfigError("tokenizer has no parameter '" + name + "'");
}

Tokenizer make_tokenizer(const TokenizerConfig& cfg, uint64_t seed) {
    cfg.validate();
    Tokenizer tok;
    tok.cfg = cfg;
    Rng rng = Rng::substream(seed, "tokenizer/init");
    const int n = stages_for(cfg.downsample_f);
    const int C = cfg.base_channels;
    const int top = C << (n - 1);

    int in_ch = 3;
    for (int i = 0; i < n; ++i) {
        const int out_ch = C << i;
        tok.params.emplace_back("enc.stage" + std::to_string(i) + ".w",
                                conv_init({out_ch, in_ch, 3, 3}, rng));
        in_ch = out_ch;
    }
    // 1x1 encoder trunk holds the encoder receptive field to 7x7: a latent
    // depends only on its own cell plus a thin fringe, so token assignments
    // survive the decode/re-encode round trip. The decoder trunk stays 3x3
    // and paints cells with full neighbor context.
    tok.params.emplace_back("enc.trunk.w", conv_init({top, top, 1, 1}, rng));
    tok.params.emplace_back("enc.head.w", conv_init({cfg.codeword_dim, top, 1, 1}, rng));

    tok.params.emplace_back("dec.head.w", conv_init({top, cfg.codeword_dim, 1, 1}, rng));
    tok.params.emplace_back("dec.trunk.w", conv_init({top, top, 3, 3}, rng));
    int cur = top;
    for (int i = 0; i < n; ++i) {
        const int next = std::max(C, cur / 2);
        tok.params.emplace_back("dec.up" + std::to_string(i) + ".w",
                                conv_init({next, cur, 3, 3}, rng));
        cur = next;
    }
    tok.params.emplace_back("dec.out.w", conv_init({3, cur, 3, 3}, rng));

    tok.codebook.K = cfg.codebook_size;
    tok.codebook.D = cfg.codeword_dim;
    tok.codebook.vectors.assign(static_cast<size_t>(cfg.codebook_size) * cfg.codeword_dim, 0.0f);
    tok.codebook.ema_counts.assign(static_cast<size_t>(cfg.codebook_size), 1.0f);
    tok.codebook.ema_sums = tok.codebook.vectors;
    return tok;
}

Tensor image_to_tensor(const Image& img) {
    Tensor t({3, img.height, img.width});
    const size_t hw = static_cast<size_t>(img.height) * img.width;
    for (size_t i = 0; i < hw; ++i) {
        for (int c = 0; c < 3; ++c) {
            t.ptr()[static_cast<size_t>(c) * hw + i] = static_cast<float>(img.rgb[i * 3 + c]) / 255.0f;
        }
    }
    return t;
}

Image tensor_to_image(const Tensor& t) {
    if (t.shape.size() != 3 || t.shape[0] != 3) {
        throw DimensionError("tensor_to_image: want [3,H,W], got " + shape_str(t.shape));
    }
    Image img(t.shape[2], t.shape[1]);
    const size_t hw = static_cast<size_t>(t.shape[1]) * t.shape[2];
    for (size_t i = 0; i < hw; ++i) {
        for (int c = 0; c < 3; ++c) {
            float v = t.ptr()[static_cast<size_t>(c) * hw + i];
            v = std::clamp(v, 0.0f, 1.0f);
            img.rgb[i * 3 + c] = static_cast<uint8_t>(std::lround(v * 255.0f));
        }
    }
    return img;
}

Tensor encode_latents(const Tokenizer& tok, const Tensor& img_chw, Tape* tape) {
    Tokenizer& t = const_cast<Tokenizer&>(tok);
    const int n = stages_for(tok.cfg.downsample_f);
    Tensor x = img_chw;
    for (int i = 0; i < n; ++i) {
        x = ops::conv2d(tape, x, t.param("enc.stage" + std::to_string(i) + ".w"), 2);
        x = ops::silu(tape, x);
    }
    x = ops::conv2d(tape, x, t.param("enc.trunk.w"), 1);
    x = ops::silu(tape, x);
    return ops::conv2d(tape, x, t.param("enc.head.w"), 1);
}

Tensor decode_latents(const Tokenizer& tok, const Tensor& lat_chw, Tape* tape) {
    Tokenizer& t = const_cast<Tokenizer&>(tok);
    const int n = stages_for(tok.cfg.downsample_f);
    Tensor x = ops::conv2d(tape, lat_chw, t.param("dec.head.w"), 1);
    x = ops::silu(tape, x);
    x = ops::conv2d(tape, x, t.param("dec.trunk.w"), 1);
    x = ops::silu(tape, x);
    for (int i = 0; i < n; ++i) {
        x = ops::upsample2x(tape, x);
        x = ops::conv2d(tape, x, t.param("dec.up" + std::to_string(i) + ".w"), 1);
        x = ops::silu(tape, x);
    }
    return ops::conv2d(tape, x, t.param("dec.out.w"), 1);
}

TokenGrid encode(const Tokenizer& tok, const Image& img) {
    if (img.width != tok.cfg.image_size || img.height != tok.cfg.image_size) {
        throw DimensionError("encode: image " + std::to_string(img.width) + "x" +
                             std::to_string(img.height) + " does not match tokenizer size " +
                             std::to_string(tok.cfg.image_size));
    }
    if (!tok.codebook_ready) {
        throw TrainingError("encode: codebook has not been initialized");
    }
    const Tensor lat = encode_latents(tok, image_to_tensor(img), nullptr);
    const int g = tok.cfg.grid_size();
    const int D = tok.cfg.codeword_dim;
    TokenGrid grid;
    grid.h = g;
    grid.w = g;
    grid.indices.resize(static_cast<size_t>(g) * g);
    std::vector<float> cell(static_cast<size_t>(D));
    const size_t hw = static_cast<size_t>(g) * g;
    for (size_t i = 0; i < hw; ++i) {
        for (int d = 0; d < D; ++d) {
            cell[static_cast<size_t>(d)] = lat.ptr()[static_cast<size_t>(d) * hw + i];
        }
        grid.indices[i] = static_cast<uint16_t>(quantize(cell, tok.codebook).first);
    }
    return grid;
}

Image decode(const Tokenizer& tok, const TokenGrid& grid) {
    const int g = tok.cfg.grid_size();
    if (grid.h != g || grid.w != g) {
        throw DimensionError("decode: grid " + std::to_string(grid.h) + "x" +
                             std::to_string(grid.w) + " does not match tokenizer grid " +
                             std::to_string(g));
    }
    const int D = tok.cfg.codeword_dim;
    const size_t hw = static_cast<size_t>(g) * g;
    Tensor lat({D, g, g});
    for (size_t i = 0; i < hw; ++i) {
        const uint16_t idx = grid.indices[i];
        if (idx >= tok.codebook.K) {
            throw InvalidTokenError("decode: token index " + std::to_string(idx) +
                                    " >= codebook size " + std::to_string(tok.codebook.K));
        }
        const float* row = tok.codebook.vectors.data() + static_cast<size_t>(idx) * D;
        for (int d = 0; d < D; ++d) {
            lat.ptr()[static_cast<size_t>(d) * hw + i] = row[d];
        }
    }
    return tensor_to_image(decode_latents(tok, lat, nullptr));
}

TokenizerOptState make_opt_state(const Tokenizer& tok) {
    TokenizerOptState st;
    st.states.resize(tok.params.size());
    for (size_t i = 0; i < tok.params.size(); ++i) {
        st.states[i].init(static_cast<size_t>(tok.params[i].second.numel()));
    }
    return st;
}

// Greedy k-center seeding: the first codeword is the first latent row, each
// further codeword the row farthest from every codeword so far. No two codes
// start as near-duplicates, which keeps re-encoding assignments stable.
void init_codebook(Tokenizer& tok, const std::vector<Image>& images, uint64_t seed) {
    if (images.empty()) {
        throw InsufficientDataError("init_codebook: no images supplied");
    }
    (void)seed; // selection is fully determined by the image set
    const int D = tok.cfg.codeword_dim;
    const size_t take = std::min<size_t>(images.size(), 64);
    std::vector<float> rows;
    for (size_t i = 0; i < take; ++i) {
        const Tensor lat = encode_latents(tok, image_to_tensor(images[i]), nullptr);
        const size_t hw = static_cast<size_t>(tok.cfg.grid_size()) * tok.cfg.grid_size();
        for (size_t p = 0; p < hw; ++p) {
            for (int d = 0; d < D; ++d) {
                rows.push_back(lat.ptr()[static_cast<size_t>(d) * hw + p]);
            }
        }
    }
    const size_t n_rows = rows.size() / static_cast<size_t>(D);
    std::vector<float> best_d(n_rows, std::numeric_limits<float>::max());
    size_t pick = 0;
    for (int k = 0; k < tok.codebook.K; ++k) {
        const float* chosen = rows.data() + pick * static_cast<size_t>(D);
        for (int d = 0; d < D; ++d) {
            tok.codebook.vectors[static_cast<size_t>(k) * D + d] = chosen[d];
        }
        size_t next = 0;
        float far = -1.0f;
        for (size_t r = 0; r < n_rows; ++r) {
            const float* z = rows.data() + r * static_cast<size_t>(D);
            float d2 = 0.0f;
            for (int d = 0; d < D; ++d) {
                const float diff = z[d] - chosen[d];
                d2 += diff * diff;
            }
            if (d2 < best_d[r]) {
                best_d[r] = d2;
            }
            if (best_d[r] > far) {
                far = best_d[r];
                next = r;
            }
        }
        pick = next;
    }
    tok.codebook.ema_counts.assign(static_cast<size_t>(tok.codebook.K), 1.0f);
    tok.codebook.ema_sums = tok.codebook.vectors;
    tok.codebook_ready = true;
}

namespace {

struct BatchForward {
    Tensor loss; // scalar, beta-weighted total
    double rec = 0.0;
    double commit = 0.0;
    std::vector<int> assignments;       // codeword index per latent cell
    std::vector<float> latent_rows;     // per-cell latents, row-major [cells, D]
};

BatchForward forward_batch(const Tokenizer& tok, const std::vector<Image>& batch, Tape* tape) {
    if (batch.empty()) {
        throw InsufficientDataError("tokenizer batch is empty");
    }
    for (const auto& img : batch) {
        if (img.width != tok.cfg.image_size || img.height != tok.cfg.image_size) {
            throw DimensionError("tokenizer batch image size mismatch");
        }
    }
    const int g = tok.cfg.grid_size();
    const int D = tok.cfg.codeword_dim;
    const size_t hw = static_cast<size_t>(g) * g;

    BatchForward out;
    Tensor rec_sum, commit_sum;
    for (const auto& img : batch) {
        Tensor x = image_to_tensor(img);
        Tensor z = encode_latents(tok, x, tape);
        Tensor zf = ops::chw_to_hwc(tape, z); // [hw, D]

        Tensor q({static_cast<int>(hw), D});
        for (size_t p = 0; p < hw; ++p) {
            std::span<const float> row(zf.ptr() + p * static_cast<size_t>(D),
                                       static_cast<size_t>(D));
            auto [idx, word] = quantize(row, tok.codebook);
            out.assignments.push_back(idx);
            for (int d = 0; d < D; ++d) {
                q.ptr()[p * static_cast<size_t>(D) + d] = word[static_cast<size_t>(d)];
                out.latent_rows.push_back(row[static_cast<size_t>(d)]);
            }
        }

        // straight-through: forward value q, gradient routed to the encoder
        Tensor st = ops::add(tape, zf, ops::detach(ops::sub(tape, q, zf)));
        Tensor lat = ops::hwc_to_chw(tape, st, g, g);
        Tensor recon = decode_latents(tok, lat, tape);
        Tensor rec_loss = ops::mean_sqerr(tape, recon, x);
        Tensor commit_loss = ops::mean_sqerr(tape, zf, q);
        rec_sum = rec_sum.defined() ? ops::add(tape, rec_sum, rec_loss) : rec_loss;
        commit_sum = commit_sum.defined() ? ops::add(tape, commit_sum, commit_loss) : commit_loss;
    }
    const float inv_b = 1.0f / static_cast<float>(batch.size());
    Tensor rec_mean = ops::scale(tape, rec_sum, inv_b);
    Tensor commit_mean = ops::scale(tape, commit_sum, inv_b);
    out.rec = rec_mean.ptr()[0];
    out.commit = tok.cfg.commitment_beta * static_cast<double>(commit_mean.ptr()[0]);
    out.loss = ops::add(tape, rec_mean,
                        ops::scale(tape, commit_mean, static_cast<float>(tok.cfg.commitment_beta)));
    if (!std::isfinite(static_cast<double>(out.loss.ptr()[0]))) {
        throw TrainingError("tokenizer loss is not finite");
    }
    return out;
}

} // namespace

VqLosses tokenizer_eval_losses(const Tokenizer& tok, const std::vector<Image>& batch) {
    BatchForward fw = forward_batch(tok, batch, nullptr);
    return {fw.rec, fw.commit, fw.rec + fw.commit};
}

void ema_update(Codebook& cb, const std::vector<int>& assignments,
                const std::vector<float>& latent_rows, double decay) {
    const int K = cb.K;
    const int D = cb.D;
    if (latent_rows.size() != assignments.size() * static_cast<size_t>(D)) {
        throw DimensionError("ema_update: latent rows do not match assignments");
    }
    const float g = static_cast<float>(decay);
    std::vector<float> counts(static_cast<size_t>(K), 0.0f);
    std::vector<float> sums(static_cast<size_t>(K) * D, 0.0f);
    for (size_t p = 0; p < assignments.size(); ++p) {
        const int idx = assignments[p];
        if (idx < 0 || idx >= K) {
            throw InvalidTokenError("ema_update: assignment index out of range");
        }
        counts[static_cast<size_t>(idx)] += 1.0f;
        for (int d = 0; d < D; ++d) {
            sums[static_cast<size_t>(idx) * D + d] += latent_rows[p * static_cast<size_t>(D) + d];
        }
    }
    for (int k = 0; k < K; ++k) {
        cb.ema_counts[static_cast<size_t>(k)] =
            g * cb.ema_counts[static_cast<size_t>(k)] + (1.0f - g) * counts[static_cast<size_t>(k)];
        for (int d = 0; d < D; ++d) {
            const size_t i = static_cast<size_t>(k) * D + d;
            cb.ema_sums[i] = g * cb.ema_sums[i] + (1.0f - g) * sums[i];
        }
        const float c = cb.ema_counts[static_cast<size_t>(k)];
        if (c > 1e-8f) {
            for (int d = 0; d < D; ++d) {
                cb.vectors[static_cast<size_t>(k) * D + d] =
                    cb.ema_sums[static_cast<size_t>(k) * D + d] / c;
            }
        }
    }
}

VqLosses tokenizer_train_step(Tokenizer& tok, const std::vector<Image>& batch,
                              TokenizerOptState& opt_state, const OptimizerConfig& opt, int step,
                              double lr) {
    if (!tok.codebook_ready) {
        throw TrainingError("tokenizer_train_step: codebook has not been initialized");
    }
    Tape tape;
    for (auto& [name, p] : tok.params) {
        p.zero_grad();
    }
    BatchForward fw = forward_batch(tok, batch, &tape);
    tape.backward(fw.loss);
    for (size_t i = 0; i < tok.params.size(); ++i) {
        auto& [name, p] = tok.params[i];
        adamw_step(p.ptr(), p.gptr(), static_cast<size_t>(p.numel()), opt_state.states[i], opt,
                   step, lr, name);
    }

    if (!tok.codebook_frozen) {
        ema_update(tok.codebook, fw.assignments, fw.latent_rows, tok.cfg.ema_decay);
    }

    // Dead-codeword revival: codewords whose EMA usage decays well below the
    // uniform share are reseeded onto the batch latents with the largest
    // quantization error (farthest-point placement avoids near-duplicates).
    // Deterministic: ordering ties break on the lower row index.
    if (!tok.codebook_frozen) {
        Codebook& cb = tok.codebook;
        const int D = cb.D;
        float total = 0.0f;
        for (float c : cb.ema_counts) {
            total += c;
        }
        const float dead = 0.1f * total / static_cast<float>(cb.K);
        std::vector<char> is_dead(static_cast<size_t>(cb.K), 0);
        for (int k = 0; k < cb.K; ++k) {
            if (cb.ema_counts[static_cast<size_t>(k)] < dead) {
                is_dead[static_cast<size_t>(k)] = 1;
            }
        }
        // Twin merge: a pair of codes far closer than the typical spacing is
        // one cluster with a parasite; the weaker member gets teleported.
        // Without this, starved near-duplicates keep catching re-encoded
        // latents and token round trips flip between the twins.
        {
            std::vector<float> nn2(static_cast<size_t>(cb.K),
                                   std::numeric_limits<float>::max());
            for (int a = 0; a < cb.K; ++a) {
                for (int b = a + 1; b < cb.K; ++b) {
                    float d2 = 0.0f;
                    const float* va = cb.vectors.data() + static_cast<size_t>(a) * D;
                    const float* vb = cb.vectors.data() + static_cast<size_t>(b) * D;
                    for (int d = 0; d < D; ++d) {
                        const float diff = va[d] - vb[d];
                        d2 += diff * diff;
                    }
                    nn2[static_cast<size_t>(a)] = std::min(nn2[static_cast<size_t>(a)], d2);
                    nn2[static_cast<size_t>(b)] = std::min(nn2[static_cast<size_t>(b)], d2);
                }
            }
            std::vector<float> sorted = nn2;
            std::nth_element(sorted.begin(), sorted.begin() + cb.K / 2, sorted.end());
            const float median_nn2 = sorted[static_cast<size_t>(cb.K / 2)];
            const float twin2 = 0.25f * median_nn2; // (0.5 x median spacing)^2
            for (int a = 0; a < cb.K; ++a) {
                for (int b = a + 1; b < cb.K; ++b) {
                    if (is_dead[static_cast<size_t>(a)] && is_dead[static_cast<size_t>(b)]) {
                        continue;
                    }
                    float d2 = 0.0f;
                    const float* va = cb.vectors.data() + static_cast<size_t>(a) * D;
                    const float* vb = cb.vectors.data() + static_cast<size_t>(b) * D;
                    for (int d = 0; d < D; ++d) {
                        const float diff = va[d] - vb[d];
                        d2 += diff * diff;
                    }
                    if (d2 < twin2) {
                        const int victim = cb.ema_counts[static_cast<size_t>(a)] <
                                                   cb.ema_counts[static_cast<size_t>(b)]
                                               ? a
                                               : b;
                        is_dead[static_cast<size_t>(victim)] = 1;
                    }
                }
            }
        }
        // Twin victims always teleport; starved codes revive only while the
        // alive fraction sits below the cap, so cells keep margins and usage
        // still clears 50% comfortably.
        std::vector<int> twins, starved;
        for (int k = 0; k < cb.K; ++k) {
            if (!is_dead[static_cast<size_t>(k)]) {
                continue;
            }
            if (cb.ema_counts[static_cast<size_t>(k)] < dead) {
                starved.push_back(k);
            } else {
                twins.push_back(k);
            }
        }
        const int alive = cb.K - static_cast<int>(starved.size());
        const int budget = std::max(0, (cb.K * 5) / 8 - alive);
        std::vector<int> dead_codes = twins;
        for (size_t i = 0; i < starved.size() && static_cast<int>(i) < budget; ++i) {
            dead_codes.push_back(starved[i]);
        }
        if (!dead_codes.empty()) {
            const size_t n_rows = fw.assignments.size();
            std::vector<std::pair<float, size_t>> err(n_rows);
            for (size_t p = 0; p < n_rows; ++p) {
                const float* z = fw.latent_rows.data() + p * static_cast<size_t>(D);
                const float* q = cb.vectors.data() +
                                 static_cast<size_t>(fw.assignments[p]) * D;
                float d2 = 0.0f;
                for (int d = 0; d < D; ++d) {
                    const float diff = z[d] - q[d];
                    d2 += diff * diff;
                }
                err[p] = {-d2, p}; // ascending sort puts the largest error first
            }
            std::sort(err.begin(), err.end());
            for (size_t i = 0; i < dead_codes.size() && i < n_rows; ++i) {
                const int k = dead_codes[i];
                const float* z = fw.latent_rows.data() + err[i].second * static_cast<size_t>(D);
                for (int d = 0; d < D; ++d) {
                    cb.vectors[static_cast<size_t>(k) * D + d] = z[d];
                    cb.ema_sums[static_cast<size_t>(k) * D + d] = z[d];
                }
                cb.ema_counts[static_cast<size_t>(k)] = 1.0f;
            }
        }
    }
    return {fw.rec, fw.commit, fw.rec + fw.commit};
}

TokenizerTrainResult train_tokenizer(Tokenizer& tok, const std::vector<Image>& images, int steps,
                                     int batch_size, const OptimizerConfig& opt, uint64_t seed,
                                     double freeze_frac) {
    if (images.empty()) {
        throw InsufficientDataError("train_tokenizer: no images");
    }
    if (!tok.codebook_ready) {
        init_codebook(tok, images, seed);
    }
    TokenizerOptState st = make_opt_state(tok);
    Rng order_rng = Rng::substream(seed, "tokenizer/order");
    std::vector<size_t> order(images.size());
    for (size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    order_rng.shuffle(order);
    size_t cursor = 0;

    TokenizerTrainResult res;
    const int freeze_after = steps - static_cast<int>(steps * freeze_frac);
    const char* polish_env = std::getenv("LVM_VQ_POLISH");
    const int polish_after = polish_env ? steps - static_cast<int>(steps * atof(polish_env)) : steps + 1;
    for (int step = 1; step <= steps; ++step) {
        tok.codebook_frozen = step > freeze_after && step <= polish_after;
        std::vector<Image> batch;
        for (int b = 0; b < batch_size; ++b) {
            if (cursor >= order.size()) {
                order_rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(images[order[cursor++]]);
        }
        const double lr = step > polish_after ? 0.0 : lr_at(step, opt);
        VqLosses l = tokenizer_train_step(tok, batch, st, opt, step, lr);
        res.loss_curve.push_back(l.total);
    }
    return res;
}

double reconstruction_mse(const Tokenizer& tok, const std::vector<Image>& images) {
    if (images.empty()) {
        throw InsufficientDataError("reconstruction_mse: no images");
    }
    double acc = 0.0;
    for (const auto& img : images) {
        acc += image_mse(decode(tok, encode(tok, img)), img);
    }
    return acc / static_cast<double>(images.size());
}

double codebook_usage(const Tokenizer& tok, const std::vector<Image>& images) {
    std::set<uint16_t> used;
    for (const auto& img : images) {
        for (uint16_t idx : encode(tok, img).indices) {
            used.insert(idx);
        }
    }
    return static_cast<double>(used.size()) / static_cast<double>(tok.codebook.K);
}

void save_tokenizer(const Tokenizer& tok, const std::string& path) {
    serialize::CheckpointFile f;
    f.config_text = tok.cfg.to_text();
    f.config_text += serialize::kv_line("codebook_ready", tok.codebook_ready ? "1" : "0");
    for (const auto& [name, t] : tok.params) {
        f.tensors.push_back({name, t.shape,
                             std::vector<float>(t.ptr(), t.ptr() + t.numel())});
    }
    f.tensors.push_back({"codebook.vectors", {tok.codebook.K, tok.codebook.D}, tok.codebook.vectors});
    f.tensors.push_back({"codebook.ema_counts", {tok.codebook.K}, tok.codebook.ema_counts});
    f.tensors.push_back({"codebook.ema_sums", {tok.codebook.K, tok.codebook.D}, tok.codebook.ema_sums});
    serialize::write_checkpoint(path, "LVMW", f);
}

Tokenizer load_tokenizer(const std::string& path) {
    serialize::CheckpointFile f = serialize::read_checkpoint(path, "LVMW");
    const TokenizerConfig cfg = TokenizerConfig::from_text(f.config_text);
    Tokenizer tok = make_tokenizer(cfg, 0);
    bool ready = false;
    for (const auto& [k, v] : serialize::parse_kv_text(f.config_text)) {
        if (k == "codebook_ready") {
            ready = v == "1";
        }
    }
    size_t loaded = 0;
    for (const auto& t : f.tensors) {
        if (t.name == "codebook.vectors") {
            tok.codebook.vectors = t.data;
            ++loaded;
        } else if (t.name == "codebook.ema_counts") {
            tok.codebook.ema_counts = t.data;
            ++loaded;
        } else if (t.name == "codebook.ema_sums") {
            tok.codebook.ema_sums = t.data;
            ++loaded;
        } else {
            Tensor& p = tok.param(t.name);
            if (p.shape != t.shape) {
                throw CorruptCheckpointError("tokenizer tensor '" + t.name + "' shape mismatch in " +
                                             path);
            }
            std::copy(t.data.begin(), t.data.end(), p.ptr());
            ++loaded;
        }
    }
    if (loaded != tok.params.size() + 3) {
        throw CorruptCheckpointError("tokenizer checkpoint missing tensors: " + path);
    }
    tok.codebook_ready = ready;
    return tok;
}

} // namespace lvm::vq
