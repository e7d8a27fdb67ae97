#include "lvm/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "lvm/ops.hpp"
#include "lvm/rng.hpp"
#include "lvm/serialize.hpp"

namespace lvm::lm {

void ModelConfig::validate() const {
    if (hidden_dim <= 0 || mlp_dim <= 0 || n_heads <= 0 || n_layers <= 0 || vocab_size < 3 ||
        context_len < 3) {
        throw ConfigError("model config: all dimensions must be positive (vocab >= 3, L >= 3)");
    }
    if (hidden_dim % n_heads != 0) {
        throw ConfigError("model config: hidden_dim " + std::to_string(hidden_dim) +
                          " not divisible by heads " + std::to_string(n_heads));
    }
    if (head_dim() % 2 != 0) {
        throw ConfigError("model config: head_dim must be even for rotary embeddings");
    }
}

std::string ModelConfig::to_text() const {
    using serialize::kv_line;
    std::string t;
    t += kv_line("name", name);
    t += kv_line("hidden_dim", std::to_string(hidden_dim));
    t += kv_line("mlp_dim", std::to_string(mlp_dim));
    t += kv_line("n_heads", std::to_string(n_heads));
    t += kv_line("n_layers", std::to_string(n_layers));
    t += kv_line("vocab_size", std::to_string(vocab_size));
    t += kv_line("context_len", std::to_string(context_len));
    t += kv_line("rope_base", std::to_string(rope_base));
    return t;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
    ModelConfig cfg;
    for (const auto& [k, v] : serialize::parse_kv_text(text)) {
        if (k == "name") {
            cfg.name = v;
        } else if (k == "hidden_dim") {
            cfg.hidden_dim = std::stoi(v);
        } else if (k == "mlp_dim") {
            cfg.mlp_dim = std::stoi(v);
        } else if (k == "n_heads") {
            cfg.n_heads = std::stoi(v);
        } else if (k == "n_layers") {
            cfg.n_layers = std::stoi(v);
        } else if (k == "vocab_size") {
            cfg.vocab_size = std::stoi(v);
        } else if (k == "context_len") {
            cfg.context_len = std::stoi(v);
        } else if (k == "rope_base") {
            cfg.rope_base = std::stod(v);
        } else if (k == "step" || k.rfind("rng", 0) == 0) {
            // trainer fields live in the same text block
        } else {
            throw ConfigError("model config: unknown key '" + k + "'");
        }
    }
    cfg.validate();
    return cfg;
}

ModelConfig config_preset(const std::string& name) {
    ModelConfig c;
    c.name = name;
    if (name == "LVM-300M") {
        c.hidden_dim = 1024;
        c.mlp_dim = 2688;
        c.n_heads = 8;
        c.n_layers = 22;
        c.vocab_size = 8194;
        c.context_len = 4096;
    } else if (name == "LVM-600M") {
        c.hidden_dim = 1536;
        c.mlp_dim = 4096;
        c.n_heads = 16;
        c.n_layers = 22;
        c.vocab_size = 8194;
        c.context_len = 4096;
    } else if (name == "LVM-1B") {
        c.hidden_dim = 2048;
        c.mlp_dim = 5504;
        c.n_heads = 16;
        c.n_layers = 22;
        c.vocab_size = 8194;
        c.context_len = 4096;
    } else if (name == "LVM-3B") {
        c.hidden_dim = 3200;
        c.mlp_dim = 8640;
        c.n_heads = 32;
        c.n_layers = 26;
        c.vocab_size = 8194;
        c.context_len = 4096;
    } else if (name == "desk-micro") {
        c.hidden_dim = 64;
        c.mlp_dim = 176;
        c.n_heads = 4;
        c.n_layers = 2;
        c.vocab_size = 258;
        c.context_len = 1024;
    } else if (name == "desk-small") {
        c.hidden_dim = 96;
        c.mlp_dim = 264;
        c.n_heads = 6;
        c.n_layers = 3;
        c.vocab_size = 258;
        c.context_len = 1024;
    } else if (name == "desk-med") {
        c.hidden_dim = 128;
        c.mlp_dim = 352;
        c.n_heads = 8;
        c.n_layers = 4;
        c.vocab_size = 258;
        c.context_len = 1024;
    } else {
        std::string valid;
        for (const auto& n : preset_names()) {
            valid += valid.empty() ? n : ", " + n;
        }
        throw ConfigError("unknown model preset '" + name + "' (valid: " + valid + ")");
    }
    c.validate();
    return c;
}

std::vector<std::string> preset_names() {
    return {"LVM-300M", "LVM-600M", "LVM-1B", "LVM-3B", "desk-micro", "desk-small", "desk-med"};
}

void Model::visit_params(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("tok_emb", tok_emb);
    for (size_t i = 0; i < layers.size(); ++i) {
        const std::string p = "layers." + std::to_string(i) + ".";
        fn(p + "attn_norm", layers[i].attn_norm);
        fn(p + "wq", layers[i].wq);
        fn(p + "wk", layers[i].wk);
        fn(p + "wv", layers[i].wv);
        fn(p + "wo", layers[i].wo);
        fn(p + "mlp_norm", layers[i].mlp_norm);
        fn(p + "w_gate", layers[i].w_gate);
        fn(p + "w_up", layers[i].w_up);
        fn(p + "w_down", layers[i].w_down);
    }
    fn("final_norm", final_norm);
    fn("out_proj", out_proj);
}

void Model::visit_params(const std::function<void(const std::string&, const Tensor&)>& fn) const {
    const_cast<Model*>(this)->visit_params(
        [&](const std::string& n, Tensor& t) { fn(n, t); });
}

int64_t Model::param_count() const {
    int64_t n = 0;
    visit_params([&](const std::string&, const Tensor& t) { n += t.numel(); });
    return n;
}

namespace {

Tensor normal_init(std::vector<int> shape, Rng& rng, double std) {
    Tensor t(std::move(shape), true);
    for (int64_t i = 0; i < t.numel(); ++i) {
        t.ptr()[i] = static_cast<float>(rng.next_normal() * std);
    }
    return t;
}

Tensor ones_init(int n) {
    Tensor t({n}, true);
    std::fill(t.ptr(), t.ptr() + n, 1.0f);
    return t;
}

} // namespace

Model make_model(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    Rng rng = Rng::substream(seed, "model/init");
    const double base_std = 0.02;
    const double resid_std = 0.02 / std::sqrt(2.0 * cfg.n_layers);
    const int h = cfg.hidden_dim;

    m.tok_emb = normal_init({cfg.vocab_size, h}, rng, base_std);
    for (int l = 0; l < cfg.n_layers; ++l) {
        LayerWeights lw;
        lw.attn_norm = ones_init(h);
        lw.wq = normal_init({h, h}, rng, base_std);
        lw.wk = normal_init({h, h}, rng, base_std);
        lw.wv = normal_init({h, h}, rng, base_std);
        lw.wo = normal_init({h, h}, rng, resid_std);
        lw.mlp_norm = ones_init(h);
        lw.w_gate = normal_init({h, cfg.mlp_dim}, rng, base_std);
        lw.w_up = normal_init({h, cfg.mlp_dim}, rng, base_std);
        lw.w_down = normal_init({cfg.mlp_dim, h}, rng, resid_std);
        m.layers.push_back(std::move(lw));
    }
    m.final_norm = ones_init(h);
    m.out_proj = normal_init({h, cfg.vocab_size}, rng, base_std);
    return m;
}

Tensor forward(const Model& m, const std::vector<int>& tokens, Tape* tape) {
    if (tokens.empty()) {
        throw LengthError("forward: empty token sequence");
    }
    if (static_cast<int>(tokens.size()) > m.cfg.context_len) {
        throw LengthError("forward: sequence length " + std::to_string(tokens.size()) +
                          " exceeds context " + std::to_string(m.cfg.context_len));
    }
    for (int t : tokens) {
        if (t < 0 || t >= m.cfg.vocab_size) {
            throw InvalidTokenError("forward: token id " + std::to_string(t) +
                                    " outside vocabulary of size " +
                                    std::to_string(m.cfg.vocab_size));
        }
    }
    Model& mm = const_cast<Model&>(m);
    Tensor x = ops::embedding_gather(tape, mm.tok_emb, tokens);
    for (auto& lw : mm.layers) {
        Tensor h1 = ops::rms_norm(tape, x, lw.attn_norm, kRmsEps);
        Tensor q = ops::rope(tape, ops::matmul(tape, h1, lw.wq), m.cfg.n_heads, m.cfg.rope_base, 0);
        Tensor k = ops::rope(tape, ops::matmul(tape, h1, lw.wk), m.cfg.n_heads, m.cfg.rope_base, 0);
        Tensor v = ops::matmul(tape, h1, lw.wv);
        Tensor scores = ops::attn_scores(tape, q, k, m.cfg.n_heads);
        Tensor probs = ops::causal_softmax(tape, scores, m.cfg.n_heads);
        Tensor mixed = ops::attn_mix(tape, probs, v, m.cfg.n_heads);
        x = ops::add(tape, x, ops::matmul(tape, mixed, lw.wo));

        Tensor h2 = ops::rms_norm(tape, x, lw.mlp_norm, kRmsEps);
        Tensor gate = ops::silu(tape, ops::matmul(tape, h2, lw.w_gate));
        Tensor up = ops::matmul(tape, h2, lw.w_up);
        x = ops::add(tape, x, ops::matmul(tape, ops::mul(tape, gate, up), lw.w_down));
    }
    Tensor xf = ops::rms_norm(tape, x, mm.final_norm, kRmsEps);
    return ops::matmul(tape, xf, mm.out_proj);
}

TrainerState make_trainer_state(const Model& m) {
    TrainerState st;
    m.visit_params([&](const std::string&, const Tensor& t) {
        AdamStateT<float> a;
        a.init(static_cast<size_t>(t.numel()));
        st.adam.push_back(std::move(a));
    });
    return st;
}

double batch_loss(const Model& m, const std::vector<pack::TokenStream>& batch) {
    if (batch.empty()) {
        throw InsufficientDataError("batch_loss: empty batch");
    }
    double acc = 0.0;
    for (const auto& w : batch) {
        if (w.size() < 2) {
            throw LengthError("batch_loss: window shorter than 2 tokens");
        }
        std::vector<int> inputs(w.begin(), w.end() - 1);
        std::vector<int> targets(w.begin() + 1, w.end());
        Tensor logits = forward(m, inputs, nullptr);
        Tensor loss = ops::softmax_xent_mean<float>(nullptr, logits, targets);
        acc += static_cast<double>(loss.ptr()[0]);
    }
    return acc / static_cast<double>(batch.size());
}

TrainResult train(Model& m, const std::vector<pack::TokenStream>& windows,
                  const OptimizerConfig& opt, const TrainConfig& tc, TrainerState& state) {
    if (windows.empty()) {
        throw InsufficientDataError("train: no windows");
    }
    if (tc.steps < 1 || tc.batch_windows < 1) {
        throw ConfigError("train: steps and batch_windows must be >= 1");
    }
    opt.validate();
    for (const auto& w : windows) {
        if (w.size() < 2) {
            throw LengthError("train: window shorter than 2 tokens");
        }
        if (static_cast<int>(w.size()) > m.cfg.context_len) {
            throw LengthError("train: window length exceeds model context");
        }
    }

    std::vector<std::string> names;
    std::vector<Tensor*> params;
    m.visit_params([&](const std::string& n, Tensor& t) {
        names.push_back(n);
        params.push_back(&t);
    });

    // single-epoch order: seeded shuffle, reshuffled when an epoch is
    // exhausted; a resumed trainer restores the order RNG and begins a fresh
    // epoch from it
    Rng order_rng = Rng::substream(tc.seed, "train/order");
    if (state.step > 0) {
        order_rng.set_state(state.order_rng_state);
    }
    std::vector<size_t> order(windows.size());
    for (size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    order_rng.shuffle(order);
    size_t cursor = 0;

    TrainResult res;
    for (int s = 0; s < tc.steps; ++s) {
        const int step = state.step + 1;
        std::vector<pack::TokenStream> batch;
        for (int b = 0; b < tc.batch_windows; ++b) {
            if (cursor >= order.size()) {
                order_rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(windows[order[cursor++]]);
        }

        Tape tape;
        for (Tensor* p : params) {
            p->zero_grad();
        }
        Tensor loss_sum;
        for (const auto& w : batch) {
            std::vector<int> inputs(w.begin(), w.end() - 1);
            std::vector<int> targets(w.begin() + 1, w.end());
            Tensor logits = forward(m, inputs, &tape);
            Tensor loss = ops::softmax_xent_mean(&tape, logits, targets);
            loss_sum = loss_sum.defined() ? ops::add(&tape, loss_sum, loss) : loss;
        }
        Tensor total = ops::scale(&tape, loss_sum, 1.0f / static_cast<float>(batch.size()));
        const double loss_value = static_cast<double>(total.ptr()[0]);
        const double lr = lr_at(step, opt);
        if (!std::isfinite(loss_value)) {
            res.aborted = true;
            res.abort_reason = "non-finite loss at step " + std::to_string(step);
            break;
        }
        tape.backward(total);
        try {
            for (size_t i = 0; i < params.size(); ++i) {
                adamw_step(params[i]->ptr(), params[i]->gptr(),
                           static_cast<size_t>(params[i]->numel()), state.adam[i], opt, step, lr,
                           names[i]);
            }
        } catch (const TrainingError& e) {
            res.aborted = true;
            res.abort_reason = e.what();
            break;
        }
        state.step = step;
        state.order_rng_state = order_rng.state();
        res.curve.push_back({step, loss_value, lr});
    }
    return res;
}

std::string format_loss_csv(const std::vector<LossPoint>& curve) {
    std::string out = "step,loss,lr\n";
    char buf[96];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof buf, "%d,%.8f,%.10g\n", p.step, p.loss, p.lr);
        out += buf;
    }
    return out;
}

DecodeState::DecodeState(const ModelConfig& cfg) {
    k_cache.assign(static_cast<size_t>(cfg.n_layers),
                   std::vector<float>(static_cast<size_t>(cfg.context_len) * cfg.hidden_dim, 0.0f));
    v_cache = k_cache;
}

std::vector<float> decode_step(const Model& m, DecodeState& st, int token) {
    const ModelConfig& cfg = m.cfg;
    if (st.pos >= cfg.context_len) {
        throw LengthError("decode_step: position " + std::to_string(st.pos) +
                          " exceeds context " + std::to_string(cfg.context_len));
    }
    if (token < 0 || token >= cfg.vocab_size) {
        throw InvalidTokenError("decode_step: token id " + std::to_string(token) +
                                " outside vocabulary of size " + std::to_string(cfg.vocab_size));
    }
    const int h = cfg.hidden_dim;
    const int hd = cfg.head_dim();
    const float inv = 1.0f / std::sqrt(static_cast<float>(hd));
    const int pos = st.pos;

    std::vector<float> x(static_cast<size_t>(h));
    std::memcpy(x.data(), m.tok_emb.ptr() + static_cast<size_t>(token) * h, sizeof(float) * h);

    std::vector<float> n1(static_cast<size_t>(h)), q(static_cast<size_t>(h));
    std::vector<float> attn_out(static_cast<size_t>(h)), proj(static_cast<size_t>(h));
    std::vector<float> scores(static_cast<size_t>(pos) + 1);
    std::vector<float> gate(static_cast<size_t>(cfg.mlp_dim)), up(static_cast<size_t>(cfg.mlp_dim));
    std::vector<float> gated(static_cast<size_t>(cfg.mlp_dim));

    for (int l = 0; l < cfg.n_layers; ++l) {
        const LayerWeights& lw = m.layers[static_cast<size_t>(l)];
        kernels::rms_apply(n1.data(), x.data(), lw.attn_norm.ptr(), h, kRmsEps);

        float* krow = st.k_cache[static_cast<size_t>(l)].data() + static_cast<size_t>(pos) * h;
        float* vrow = st.v_cache[static_cast<size_t>(l)].data() + static_cast<size_t>(pos) * h;
        std::fill(q.begin(), q.end(), 0.0f);
        std::fill(krow, krow + h, 0.0f);
        std::fill(vrow, vrow + h, 0.0f);
        kernels::vec_mat(q.data(), n1.data(), lw.wq.ptr(), h, h);
        kernels::vec_mat(krow, n1.data(), lw.wk.ptr(), h, h);
        kernels::vec_mat(vrow, n1.data(), lw.wv.ptr(), h, h);
        kernels::rope_apply_row(q.data(), cfg.n_heads, hd, pos, cfg.rope_base);
        kernels::rope_apply_row(krow, cfg.n_heads, hd, pos, cfg.rope_base);

        std::fill(attn_out.begin(), attn_out.end(), 0.0f);
        const std::vector<float>& kc = st.k_cache[static_cast<size_t>(l)];
        const std::vector<float>& vc = st.v_cache[static_cast<size_t>(l)];
        for (int hh = 0; hh < cfg.n_heads; ++hh) {
            kernels::attn_score_row(scores.data(), q.data() + static_cast<size_t>(hh) * hd,
                                    kc.data() + static_cast<size_t>(hh) * hd,
                                    static_cast<size_t>(h), pos + 1, hd, inv);
            kernels::softmax_inplace(scores.data(), pos + 1);
            kernels::attn_mix_row(attn_out.data() + static_cast<size_t>(hh) * hd, scores.data(),
                                  vc.data() + static_cast<size_t>(hh) * hd,
                                  static_cast<size_t>(h), pos + 1, hd);
        }
        std::fill(proj.begin(), proj.end(), 0.0f);
        kernels::vec_mat(proj.data(), attn_out.data(), lw.wo.ptr(), h, h);
        kernels::add_rows(n1.data(), x.data(), proj.data(), h); // reuse n1 as residual sum
        std::memcpy(x.data(), n1.data(), sizeof(float) * static_cast<size_t>(h));

        kernels::rms_apply(n1.data(), x.data(), lw.mlp_norm.ptr(), h, kRmsEps);
        std::fill(gate.begin(), gate.end(), 0.0f);
        std::fill(up.begin(), up.end(), 0.0f);
        kernels::vec_mat(gate.data(), n1.data(), lw.w_gate.ptr(), h, cfg.mlp_dim);
        kernels::vec_mat(up.data(), n1.data(), lw.w_up.ptr(), h, cfg.mlp_dim);
        kernels::silu_row(gated.data(), gate.data(), cfg.mlp_dim);
        kernels::mul_rows(gated.data(), gated.data(), up.data(), cfg.mlp_dim);
        std::fill(proj.begin(), proj.end(), 0.0f);
        kernels::vec_mat(proj.data(), gated.data(), lw.w_down.ptr(), cfg.mlp_dim, h);
        kernels::add_rows(n1.data(), x.data(), proj.data(), h);
        std::memcpy(x.data(), n1.data(), sizeof(float) * static_cast<size_t>(h));
    }

    kernels::rms_apply(n1.data(), x.data(), m.final_norm.ptr(), h, kRmsEps);
    std::vector<float> logits(static_cast<size_t>(cfg.vocab_size), 0.0f);
    kernels::vec_mat(logits.data(), n1.data(), m.out_proj.ptr(), h, cfg.vocab_size);
    st.pos += 1;
    return logits;
}

namespace {

int sample_from_logits(const std::vector<float>& logits, const SamplerConfig& sampler, Rng& rng) {
    const int limit = sampler.vocab_limit
                          ? std::min<int>(*sampler.vocab_limit, static_cast<int>(logits.size()))
                          : static_cast<int>(logits.size());
    if (limit < 1) {
        throw ConfigError("sampler: vocab_limit must be >= 1");
    }
    if (sampler.temperature < 0.0) {
        throw ConfigError("sampler: temperature must be >= 0");
    }
    if (sampler.temperature == 0.0) {
        return kernels::argmax_row(logits.data(), limit);
    }
    std::vector<int> ids(static_cast<size_t>(limit));
    for (int i = 0; i < limit; ++i) {
        ids[static_cast<size_t>(i)] = i;
    }
    if (sampler.top_k && *sampler.top_k < limit) {
        std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
            return logits[static_cast<size_t>(a)] > logits[static_cast<size_t>(b)];
        });
        ids.resize(static_cast<size_t>(std::max(1, *sampler.top_k)));
    }
    // softmax over the retained set at the given temperature, in double
    double mx = -1e300;
    for (int id : ids) {
        mx = std::max(mx, static_cast<double>(logits[static_cast<size_t>(id)]) /
                              sampler.temperature);
    }
    std::vector<double> probs(ids.size());
    double sum = 0.0;
    for (size_t i = 0; i < ids.size(); ++i) {
        probs[i] = std::exp(static_cast<double>(logits[static_cast<size_t>(ids[i])]) /
                                sampler.temperature -
                            mx);
        sum += probs[i];
    }
    const double r = rng.next_double() * sum;
    double acc = 0.0;
    for (size_t i = 0; i < ids.size(); ++i) {
        acc += probs[i];
        if (r < acc) {
            return ids[i];
        }
    }
    return ids.back();
}

} // namespace

std::vector<int> generate(const Model& m, const std::vector<int>& prefix, int n,
                          const SamplerConfig& sampler) {
    if (prefix.empty()) {
        throw LengthError("generate: prefix must contain at least one token");
    }
    if (n < 0) {
        throw ConfigError("generate: n must be >= 0");
    }
    if (static_cast<int>(prefix.size()) + n > m.cfg.context_len) {
        throw LengthError("generate: prefix " + std::to_string(prefix.size()) + " + " +
                          std::to_string(n) + " new tokens exceeds context " +
                          std::to_string(m.cfg.context_len));
    }
    Rng rng = Rng::substream(sampler.seed, "sampling");
    DecodeState st(m.cfg);
    std::vector<float> logits;
    for (int t : prefix) {
        logits = decode_step(m, st, t);
    }
    std::vector<int> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int id = sample_from_logits(logits, sampler, rng);
        out.push_back(id);
        if (i + 1 < n) {
            logits = decode_step(m, st, id);
        }
    }
    return out;
}

namespace {

double pairwise_sum(const double* v, size_t n) {
    if (n == 1) {
        return v[0];
    }
    const size_t half = n / 2;
    return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

} // namespace

NllResult sequence_nll(const Model& m, const std::vector<int>& prefix,
                       const std::vector<int>& target) {
    if (prefix.empty() || target.empty()) {
        throw LengthError("sequence_nll: prefix and target must be nonempty");
    }
    if (static_cast<int>(prefix.size() + target.size()) > m.cfg.context_len) {
        throw LengthError("sequence_nll: prefix " + std::to_string(prefix.size()) + " + target " +
                          std::to_string(target.size()) + " exceeds context " +
                          std::to_string(m.cfg.context_len));
    }
    std::vector<int> tokens = prefix;
    tokens.insert(tokens.end(), target.begin(), target.end());
    tokens.pop_back(); // logits for the last target come from its predecessor
    Tensor logits = forward(m, tokens, nullptr);

    const int V = m.cfg.vocab_size;
    NllResult res;
    res.per_token.resize(target.size());
    for (size_t i = 0; i < target.size(); ++i) {
        const size_t row_idx = prefix.size() - 1 + i;
        const float* row = logits.ptr() + row_idx * static_cast<size_t>(V);
        float mx = row[0];
        for (int j = 1; j < V; ++j) {
            mx = std::max(mx, row[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < V; ++j) {
            sum += std::exp(static_cast<double>(row[j] - mx));
        }
        const int tgt = target[i];
        if (tgt < 0 || tgt >= V) {
            throw InvalidTokenError("sequence_nll: target id outside vocabulary");
        }
        res.per_token[i] =
            std::log(sum) + static_cast<double>(mx) - static_cast<double>(row[tgt]);
    }
    res.mean_nll = pairwise_sum(res.per_token.data(), res.per_token.size()) /
                   static_cast<double>(res.per_token.size());
    res.perplexity = std::exp(res.mean_nll);
    return res;
}

namespace {

std::vector<int> probe_tokens(const ModelConfig& cfg) {
    uint64_t x = Rng::hash_name("probe") ^ (static_cast<uint64_t>(cfg.vocab_size) << 20) ^
                 static_cast<uint64_t>(cfg.hidden_dim);
    std::vector<int> out;
    const int n = std::min(16, cfg.context_len);
    for (int i = 0; i < n; ++i) {
        out.push_back(static_cast<int>(Rng::splitmix64(x) % static_cast<uint64_t>(cfg.vocab_size)));
    }
    return out;
}

} // namespace

void save_checkpoint(const std::string& path, const Model& m, const TrainerState& state) {
    serialize::CheckpointFile f;
    f.config_text = m.cfg.to_text();
    f.config_text += serialize::kv_line("step", std::to_string(state.step));
    for (int i = 0; i < 4; ++i) {
        f.config_text += serialize::kv_line("rng" + std::to_string(i),
                                            std::to_string(state.order_rng_state[static_cast<size_t>(i)]));
    }
    size_t pi = 0;
    m.visit_params([&](const std::string& name, const Tensor& t) {
        f.tensors.push_back(
            {"w." + name, t.shape, std::vector<float>(t.ptr(), t.ptr() + t.numel())});
        if (pi < state.adam.size() && !state.adam[pi].m.empty()) {
            f.tensors.push_back({"adam.m." + name, t.shape, state.adam[pi].m});
            f.tensors.push_back({"adam.v." + name, t.shape, state.adam[pi].v});
        }
        ++pi;
    });

    const std::vector<int> probe = probe_tokens(m.cfg);
    Tensor logits = forward(m, probe, nullptr);
    serialize::NamedTensor pt;
    pt.name = "probe.tokens";
    pt.shape = {static_cast<int>(probe.size())};
    for (int t : probe) {
        pt.data.push_back(static_cast<float>(t));
    }
    f.tensors.push_back(std::move(pt));
    const size_t last = (probe.size() - 1) * static_cast<size_t>(m.cfg.vocab_size);
    f.tensors.push_back({"probe.logits",
                         {m.cfg.vocab_size},
                         std::vector<float>(logits.ptr() + last,
                                            logits.ptr() + last + m.cfg.vocab_size)});
    serialize::write_checkpoint(path, "LVMW", f);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    serialize::CheckpointFile f = serialize::read_checkpoint(path, "LVMW");
    const ModelConfig cfg = ModelConfig::from_text(f.config_text);
    LoadedCheckpoint out{make_model(cfg, 0), {}};
    out.trainer = make_trainer_state(out.model);
    for (const auto& [k, v] : serialize::parse_kv_text(f.config_text)) {
        if (k == "step") {
            out.trainer.step = std::stoi(v);
        } else if (k.rfind("rng", 0) == 0 && k.size() == 4) {
            out.trainer.order_rng_state[static_cast<size_t>(k[3] - '0')] = std::stoull(v);
        }
    }

    std::vector<float> probe_logits;
    std::vector<int> probe;
    size_t loaded = 0;
    std::vector<std::string> names;
    std::vector<Tensor*> params;
    out.model.visit_params([&](const std::string& n, Tensor& t) {
        names.push_back(n);
        params.push_back(&t);
    });
    auto find_param = [&](const std::string& n) -> int {
        for (size_t i = 0; i < names.size(); ++i) {
            if (names[i] == n) {
                return static_cast<int>(i);
            }
        }
        return -1;
    };
    for (auto& t : f.tensors) {
        if (t.name == "probe.tokens") {
            for (float v : t.data) {
                probe.push_back(static_cast<int>(v));
            }
        } else if (t.name == "probe.logits") {
            probe_logits = t.data;
        } else if (t.name.rfind("w.", 0) == 0) {
            const int i = find_param(t.name.substr(2));
            if (i < 0 || params[static_cast<size_t>(i)]->shape != t.shape) {
                throw CorruptCheckpointError("unexpected weight tensor '" + t.name + "' in " + path);
            }
            std::copy(t.data.begin(), t.data.end(), params[static_cast<size_t>(i)]->ptr());
            ++loaded;
        } else if (t.name.rfind("adam.m.", 0) == 0) {
            const int i = find_param(t.name.substr(7));
            if (i < 0) {
                throw CorruptCheckpointError("unexpected adam tensor '" + t.name + "' in " + path);
            }
            out.trainer.adam[static_cast<size_t>(i)].m = t.data;
        } else if (t.name.rfind("adam.v.", 0) == 0) {
            const int i = find_param(t.name.substr(7));
            if (i < 0) {
                throw CorruptCheckpointError("unexpected adam tensor '" + t.name + "' in " + path);
            }
            out.trainer.adam[static_cast<size_t>(i)].v = t.data;
        } else {
            throw CorruptCheckpointError("unexpected tensor '" + t.name + "' in " + path);
        }
    }
    if (loaded != names.size()) {
        throw CorruptCheckpointError("checkpoint missing weight tensors: " + path);
    }
    if (probe.empty() || probe_logits.empty()) {
        throw CorruptCheckpointError("checkpoint missing probe record: " + path);
    }
    Tensor logits = forward(out.model, probe, nullptr);
    const size_t last = (probe.size() - 1) * static_cast<size_t>(cfg.vocab_size);
    for (int j = 0; j < cfg.vocab_size; ++j) {
        const double diff = std::fabs(static_cast<double>(logits.ptr()[last + static_cast<size_t>(j)]) -
                                      static_cast<double>(probe_logits[static_cast<size_t>(j)]));
        if (diff > 1e-6) {
            throw CorruptCheckpointError("checkpoint probe logits mismatch in " + path);
        }
    }
    return out;
}

} // namespace lvm::lm
