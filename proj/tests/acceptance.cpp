// Acceptance suite: runs every acceptance criterion end to end on desk-scale
// artifacts and prints one pass/fail line per criterion. Heavy artifacts
// (tokenizer, corpus, trained models) are built once and shared.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "lvm/forge.hpp"
#include "lvm/model.hpp"
#include "lvm/ops.hpp"
#include "lvm/packer.hpp"
#include "lvm/prompt.hpp"
#include "lvm/rng.hpp"
#include "lvm/vq.hpp"

namespace fs = std::filesystem;
using namespace lvm;
using Clock = std::chrono::steady_clock;

namespace {

struct Harness {
    int passed = 0;
    int failed = 0;

    template <class F>
    void criterion(int n, const std::string& what, F body) {
        const auto t0 = Clock::now();
        std::string detail;
        bool ok = false;
        try {
            detail = body();
            ok = true;
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        std::printf("[%s] criterion %2d (%7.1fs): %s — %s\n", ok ? "PASS" : "FAIL", n, secs,
                    what.c_str(), detail.c_str());
        std::fflush(stdout);
        (ok ? passed : failed) += 1;
    }

    void info(const std::string& msg) {
        std::printf("       %s\n", msg.c_str());
        std::fflush(stdout);
    }
};

#define EXPECT(cond, msg)                                                                          \
    do {                                                                                           \
        if (!(cond)) {                                                                             \
            throw std::runtime_error(msg);                                                         \
        }                                                                                          \
    } while (0)

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

// ---------------------------------------------------------------------------
// criterion 1: finite-difference gradient suite

double fd_check_all(int shapes_per_primitive) {
    using gradcheck::DTape;
    using gradcheck::DTensor;
    Rng rng(20260808);
    double worst = 0.0;
    auto track = [&](double err) { worst = std::max(worst, err); };

    for (int it = 0; it < shapes_per_primitive; ++it) {
        const int m = 1 + static_cast<int>(rng.next_below(5));
        const int k = 1 + static_cast<int>(rng.next_below(5));
        const int n = 1 + static_cast<int>(rng.next_below(5));
        {
            std::vector<DTensor> in{gradcheck::random_tensor({m, k}, rng),
                                    gradcheck::random_tensor({k, n}, rng)};
            DTensor tgt = gradcheck::random_tensor({m, n}, rng, 1.0, false);
            track(gradcheck::max_rel_err(in, [&](DTape* t) {
                return ops::mean_sqerr(t, ops::matmul(t, in[0], in[1]), tgt);
            }));
        }
        {
            const int C = 1 + static_cast<int>(rng.next_below(2));
            const int Co = 1 + static_cast<int>(rng.next_below(3));
            const int H = 4 + 2 * static_cast<int>(rng.next_below(2));
            const int stride = 1 + static_cast<int>(rng.next_below(2));
            const int kk = rng.next_below(2) ? 3 : 1;
            std::vector<DTensor> in{gradcheck::random_tensor({C, H, H}, rng),
                                    gradcheck::random_tensor({Co, C, kk, kk}, rng, 0.5)};
            const int Ho = (H + 2 * ((kk - 1) / 2) - kk) / stride + 1;
            DTensor tgt = gradcheck::random_tensor({Co, Ho, Ho}, rng, 1.0, false);
            track(gradcheck::max_rel_err(in, [&](DTape* t) {
                return ops::mean_sqerr(t, ops::conv2d(t, in[0], in[1], stride), tgt);
            }));
        }
        {
            const int V = 3 + static_cast<int>(rng.next_below(6));
            const int h = 2 + static_cast<int>(rng.next_below(6));
            const int T = 1 + static_cast<int>(rng.next_below(5));
            std::vector<int> ids;
            for (int t = 0; t < T; ++t) {
                ids.push_back(static_cast<int>(rng.next_below(static_cast<uint64_t>(V))));
            }
            std::vector<DTensor> in{gradcheck::random_tensor({V, h}, rng)};
            DTensor tgt = gradcheck::random_tensor({T, h}, rng, 1.0, false);
            track(gradcheck::max_rel_err(in, [&](DTape* t) {
                return ops::mean_sqerr(t, ops::embedding_gather(t, in[0], ids), tgt);
            }));
        }
        {
            const int T = 1 + static_cast<int>(rng.next_below(4));
            const int h = 4 + 4 * static_cast<int>(rng.next_below(2));
            std::vector<DTensor> in{gradcheck::random_tensor({T, h}, rng),
                                    gradcheck::random_tensor({h}, rng, 0.3)};
            for (int i = 0; i < h; ++i) {
                in[1].ptr()[i] += 1.0;
            }
            DTensor tgt = gradcheck::random_tensor({T, h}, rng, 1.0, false);
            track(gradcheck::max_rel_err(in, [&](DTape* t) {
                return ops::mean_sqerr(t, ops::rms_norm(t, in[0], in[1], 1e-5), tgt);
            }));
        }
        {
            const int T = 1 + static_cast<int>(rng.next_below(4));
            const int V = 3 + static_cast<int>(rng.next_below(7));
            std::vector<int> tg;
            for (int t = 0; t < T; ++t) {
                tg.push_back(static_cast<int>(rng.next_below(static_cast<uint64_t>(V))));
            }
            std::vector<DTensor> in{gradcheck::random_tensor({T, V}, rng)};
            track(gradcheck::max_rel_err(
                in, [&](DTape* t) { return ops::softmax_xent_mean(t, in[0], tg); }));
        }
        {
            const int T = 2 + static_cast<int>(rng.next_below(3));
            const int h = 4 + 4 * static_cast<int>(rng.next_below(2));
            std::vector<DTensor> in{gradcheck::random_tensor({T, h}, rng),
                                    gradcheck::random_tensor({T, h}, rng)};
            DTensor tgt = gradcheck::random_tensor({T, h}, rng, 1.0, false);
            track(gradcheck::max_rel_err(in, [&](DTape* t) {
                DTensor s = ops::silu(t, in[0]);
                DTensor p = ops::mul(t, s, in[1]);
                DTensor q = ops::sub(t, ops::add(t, p, in[0]), in[1]);
                return ops::mean_sqerr(t, ops::scale(t, q, 0.7), tgt);
            }));
        }
        {
            const int heads = 1 + static_cast<int>(rng.next_below(2));
            const int hd = 2 + 2 * static_cast<int>(rng.next_below(2));
            const int h = heads * hd;
            const int T = 2 + static_cast<int>(rng.next_below(4));
            std::vector<DTensor> in{gradcheck::random_tensor({T, h}, rng),
                                    gradcheck::random_tensor({T, h}, rng),
                                    gradcheck::random_tensor({T, h}, rng)};
            DTensor tgt = gradcheck::random_tensor({T, h}, rng, 1.0, false);
            track(gradcheck::max_rel_err(in, [&](DTape* t) {
                DTensor q = ops::rope(t, in[0], heads, 10000.0, static_cast<int64_t>(it));
                DTensor kk = ops::rope(t, in[1], heads, 10000.0, static_cast<int64_t>(it));
                DTensor s = ops::attn_scores(t, q, kk, heads);
                DTensor p = ops::causal_softmax(t, s, heads);
                DTensor o = ops::attn_mix(t, p, in[2], heads);
                return ops::mean_sqerr(t, o, tgt);
            }));
        }
        {
            const int C = 1 + static_cast<int>(rng.next_below(3));
            const int H = 2 + static_cast<int>(rng.next_below(3));
            std::vector<DTensor> in{gradcheck::random_tensor({C, H, H}, rng)};
            DTensor tgt = gradcheck::random_tensor({C, 2 * H, 2 * H}, rng, 1.0, false);
            track(gradcheck::max_rel_err(in, [&](DTape* t) {
                return ops::mean_sqerr(t, ops::upsample2x(t, in[0]), tgt);
            }));
            DTensor tgt2 = gradcheck::random_tensor({C, H, H}, rng, 1.0, false);
            track(gradcheck::max_rel_err(in, [&](DTape* t) {
                DTensor hwc = ops::chw_to_hwc(t, in[0]);
                return ops::mean_sqerr(t, ops::hwc_to_chw(t, hwc, H, H), tgt2);
            }));
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::vector<Image> heldout_images(int n, const char* stream, uint64_t seed = 31) {
    Rng rng = Rng::substream(seed, stream);
    std::vector<Image> out;
    for (int i = 0; i < n; ++i) {
        out.push_back(forge::gen_scene(rng.next_u64()).first);
    }
    return out;
}

// Few-shot queries with fresh held-out scenes for one annotation task.
std::vector<eval::FewShotQuery> make_task_queries(forge::AnnotationKind kind, int n_queries,
                                                  int shots, uint64_t seed) {
    Rng rng = Rng::substream(seed, "accept/queries/" + forge::to_string(kind));
    std::vector<eval::FewShotQuery> out;
    for (int i = 0; i < n_queries; ++i) {
        eval::FewShotQuery q;
        for (int s = 0; s < shots; ++s) {
            auto [img, scene] = forge::gen_scene(rng.next_u64());
            q.shots.push_back(forge::make_task_pair(scene, img, kind, rng.next_u64()));
        }
        auto [img, scene] = forge::gen_scene(rng.next_u64());
        forge::TaskPair qp = forge::make_task_pair(scene, img, kind, rng.next_u64());
        q.query = qp.input;
        q.gt = qp.target;
        out.push_back(std::move(q));
    }
    return out;
}

int run_cli(const std::string& cli, const std::string& args) {
    const std::string cmd = cli + " " + args + " >> cli_pipeline.log 2>&1";
    const int rc = std::system(cmd.c_str());
    return rc < 0 ? rc : WEXITSTATUS(rc);
}

} // namespace

int main(int argc, char** argv) {
    std::string cli_path;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--cli") {
            cli_path = argv[i + 1];
        }
    }

    const std::string work = "acceptance_work";
    fs::remove_all(work);
    fs::create_directories(work);

    Harness h;
    std::printf("acceptance suite: desk-scale pipeline, all criteria on one CPU core\n");

    // --- criterion 1 -------------------------------------------------------
    h.criterion(1, "gradient suite: analytic vs central differences (64-bit)", [&] {
        const double worst = fd_check_all(20);
        EXPECT(worst < 1e-4, fmt("max rel err %.3g >= 1e-4", worst));
        return fmt("20 random shapes per primitive, max rel err %.3g < 1e-4", worst);
    });

    // --- criterion 2 -------------------------------------------------------
    h.criterion(2, "quantizer vs exhaustive nearest-codeword search, 10k latents", [&] {
        Rng rng(77);
        vq::Codebook cb;
        cb.K = 256;
        cb.D = 16;
        cb.vectors.resize(static_cast<size_t>(cb.K) * cb.D);
        for (auto& v : cb.vectors) {
            v = static_cast<float>(rng.next_normal());
        }
        int agree = 0;
        std::vector<float> z(16);
        for (int i = 0; i < 10000; ++i) {
            for (auto& v : z) {
                v = static_cast<float>(rng.next_normal());
            }
            int best = -1;
            double best_d = 1e300;
            for (int kk = 0; kk < cb.K; ++kk) {
                double d = 0;
                for (int j = 0; j < cb.D; ++j) {
                    const double diff = z[static_cast<size_t>(j)] -
                                        cb.vectors[static_cast<size_t>(kk) * cb.D + j];
                    d += diff * diff;
                }
                if (d < best_d) {
                    best_d = d;
                    best = kk;
                }
            }
            agree += vq::quantize(z, cb).first == best;
        }
        EXPECT(agree == 10000, fmt("only %d/10000 agree", agree));
        return "10000/10000 identical indices (exact)";
    });

    // --- criterion 10 ------------------------------------------------------
    h.criterion(10, "metric oracles: mIoU, PCK@0.1, MSE vs brute force", [&] {
        Rng rng(99);
        double worst = 0;
        for (int trial = 0; trial < 100; ++trial) {
            const int n_classes = 2 + static_cast<int>(rng.next_below(6));
            const int n = 32 + static_cast<int>(rng.next_below(96));
            std::vector<int> pred(static_cast<size_t>(n)), gt(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                pred[static_cast<size_t>(i)] = static_cast<int>(rng.next_below(n_classes));
                gt[static_cast<size_t>(i)] = static_cast<int>(rng.next_below(n_classes));
            }
            double expect = 0;
            int present = 0;
            for (int c = 0; c < n_classes; ++c) {
                int64_t inter = 0, uni = 0, count = 0;
                for (int i = 0; i < n; ++i) {
                    const bool p = pred[static_cast<size_t>(i)] == c;
                    const bool g = gt[static_cast<size_t>(i)] == c;
                    inter += p && g;
                    uni += p || g;
                    count += g;
                }
                if (count) {
                    ++present;
                    expect += double(inter) / double(uni);
                }
            }
            expect = present ? expect / present : 0.0;
            worst = std::max(worst, std::fabs(eval::metric_miou(pred, gt, n_classes) - expect));

            const int nk = 1 + static_cast<int>(rng.next_below(10));
            const double bw = 1 + rng.next_double() * 20, bh = 1 + rng.next_double() * 20;
            std::vector<eval::Keypoint> kp_gt, kp_pred;
            for (int i = 0; i < nk; ++i) {
                kp_gt.push_back({rng.next_double() * bw, rng.next_double() * bh});
                kp_pred.push_back({kp_gt.back().x + (rng.next_double() - 0.5) * bw * 0.4,
                                   kp_gt.back().y + (rng.next_double() - 0.5) * bh * 0.4});
            }
            int correct = 0;
            for (int i = 0; i < nk; ++i) {
                const double dx = kp_pred[static_cast<size_t>(i)].x - kp_gt[static_cast<size_t>(i)].x;
                const double dy = kp_pred[static_cast<size_t>(i)].y - kp_gt[static_cast<size_t>(i)].y;
                correct += std::sqrt(dx * dx + dy * dy) <= 0.1 * std::max(bw, bh);
            }
            worst = std::max(worst, std::fabs(eval::metric_pck(kp_pred, kp_gt, bw, bh) -
                                              100.0 * correct / nk));

            Image a(6, 6), b(6, 6);
            for (size_t i = 0; i < a.rgb.size(); ++i) {
                a.rgb[i] = static_cast<uint8_t>(rng.next_below(256));
                b.rgb[i] = static_cast<uint8_t>(rng.next_below(256));
            }
            double mse = 0;
            for (size_t i = 0; i < a.rgb.size(); ++i) {
                const double d = (a.rgb[i] - double(b.rgb[i])) / 255.0;
                mse += d * d;
            }
            mse /= double(a.rgb.size());
            worst = std::max(worst, std::fabs(eval::metric_mse(a, b) - mse));
        }
        EXPECT(worst < 1e-9, fmt("worst deviation %.3g >= 1e-9", worst));

        // identity inputs give 1.0 / 100.0 / 0.0 exactly
        std::vector<int> mask{0, 1, 2, 1};
        EXPECT(eval::metric_miou(mask, mask, 3) == 1.0, "identity mIoU != 1.0");
        std::vector<eval::Keypoint> kp{{1, 2}, {3, 4}};
        EXPECT(eval::metric_pck(kp, kp, 5, 5) == 100.0, "identity PCK != 100");
        Image img(4, 4);
        EXPECT(eval::metric_mse(img, img) == 0.0, "identity MSE != 0");
        return fmt("100 random instances each, worst |dev| %.2g < 1e-9; identities exact", worst);
    });

    // --- criterion 12 ------------------------------------------------------
    h.criterion(12, "perplexity definition: forced-uniform logits give exactly V", [&] {
        lm::Model m = lm::make_model(lm::config_preset("desk-micro"), 4);
        std::fill(m.out_proj.ptr(), m.out_proj.ptr() + m.out_proj.numel(), 0.0f);
        Rng rng(5);
        std::vector<int> prefix(65), target(64);
        for (auto& t : prefix) {
            t = static_cast<int>(rng.next_below(258));
        }
        for (auto& t : target) {
            t = static_cast<int>(rng.next_below(258));
        }
        const lm::NllResult r = lm::sequence_nll(m, prefix, target);
        EXPECT(r.perplexity == 258.0, fmt("perplexity %.17g != 258 exactly", r.perplexity));
        return "sequence perplexity == 258.0 bit-exactly (desk V = 258)";
    });

    // --- criterion 5 -------------------------------------------------------
    h.criterion(5, "packing: exact windows, BOS/EOS invariant, bit-exact round trips", [&] {
        Rng rng(17);
        const pack::VocabularyLayout vocab{256};
        std::vector<pack::TokenStream> streams;
        for (int i = 0; i < 200; ++i) {
            const int images = 1 + static_cast<int>(rng.next_below(16));
            pack::TokenStream s;
            s.push_back(static_cast<uint16_t>(vocab.bos()));
            for (int t = 0; t < images * 64; ++t) {
                s.push_back(static_cast<uint16_t>(rng.next_below(256)));
            }
            s.push_back(static_cast<uint16_t>(vocab.eos()));
            streams.push_back(std::move(s));
        }
        const uint64_t seed = 23;
        auto windows = pack::pack_windows(streams, 1024, seed);
        EXPECT(!windows.empty(), "no windows packed");
        int64_t bos = 0, eos = 0, total = 0;
        for (const auto& w : windows) {
            EXPECT(static_cast<int>(w.size()) == 1024, "window length != L");
            for (uint16_t id : w) {
                EXPECT(id < vocab.vocab_size(), "token id >= V");
                bos += id == vocab.bos();
                eos += id == vocab.eos();
            }
            total += 1024;
        }
        EXPECT(bos - eos >= 0 && bos - eos <= 1, fmt("BOS %lld vs EOS %lld", (long long)bos,
                                                     (long long)eos));

        // stream round trip against an independent reference concatenator
        std::vector<size_t> order(streams.size());
        for (size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        Rng ref = Rng::substream(seed, "packer/shuffle");
        ref.shuffle(order);
        pack::TokenStream concat;
        for (size_t oi : order) {
            concat.insert(concat.end(), streams[oi].begin(), streams[oi].end());
        }
        pack::TokenStream flat;
        for (const auto& w : windows) {
            flat.insert(flat.end(), w.begin(), w.end());
        }
        EXPECT(flat.size() == concat.size() / 1024 * 1024, "token conservation violated");
        EXPECT(std::equal(flat.begin(), flat.end(), concat.begin()),
               "windows do not reconstruct the shuffled concatenation");

        // shard write/read bit-exact
        pack::Shard shard;
        shard.codebook_size = 256;
        shard.window_len = 1024;
        shard.windows = windows;
        const std::string p1 = work + "/c5a.lvms", p2 = work + "/c5b.lvms";
        pack::write_shard(p1, shard);
        pack::Shard back = pack::read_shard(p1);
        EXPECT(back.windows == shard.windows, "shard read differs from write");
        pack::write_shard(p2, back);
        EXPECT(slurp(p1) == slurp(p2), "shard bytes unstable");
        return fmt("%zu windows of 1024; BOS-EOS=%lld; round trips bit-exact", windows.size(),
                   static_cast<long long>(bos - eos));
    });

    // --- criterion 4 -------------------------------------------------------
    h.criterion(4, "causality: logits before j invariant under perturbing token j", [&] {
        Rng rng(41);
        int windows_tested = 0;
        for (const char* preset : {"desk-micro", "desk-small", "desk-med"}) {
            lm::Model m = lm::make_model(lm::config_preset(preset), 11);
            const int per_config = preset == std::string("desk-micro") ? 34 : 33;
            for (int w = 0; w < per_config; ++w) {
                const int T = 64 + static_cast<int>(rng.next_below(64));
                std::vector<int> tokens(static_cast<size_t>(T));
                for (auto& t : tokens) {
                    t = static_cast<int>(rng.next_below(258));
                }
                Tensor base = lm::forward(m, tokens, nullptr);
                const int j = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(T - 1)));
                auto perturbed = tokens;
                perturbed[static_cast<size_t>(j)] =
                    (perturbed[static_cast<size_t>(j)] + 1 +
                     static_cast<int>(rng.next_below(256))) % 258;
                Tensor after = lm::forward(m, perturbed, nullptr);
                for (int t = 0; t < j; ++t) {
                    for (int v = 0; v < 258; ++v) {
                        EXPECT(base.ptr()[static_cast<size_t>(t) * 258 + v] ==
                                   after.ptr()[static_cast<size_t>(t) * 258 + v],
                               fmt("%s window %d: logits[%d] changed by token %d", preset, w, t,
                                   j));
                    }
                }
                ++windows_tested;
            }
        }
        EXPECT(windows_tested == 100, "expected 100 windows");
        return "100 random windows across desk-micro/small/med, prefixes bit-identical";
    });

    // --- criterion 3: tokenizer training run --------------------------------
    vq::Tokenizer tokenizer = vq::make_tokenizer(vq::TokenizerConfig{}, 2026);
    h.criterion(3, "tokenizer run: 2k images, 2k steps; MSE < 0.01, usage >= 50%", [&] {
        Rng rng = Rng::substream(2026, "accept/tokenizer_data");
        std::vector<Image> train_imgs, heldout;
        for (int i = 0; i < 2000; ++i) {
            train_imgs.push_back(forge::gen_scene(rng.next_u64()).first);
        }
        for (int i = 0; i < 256; ++i) {
            heldout.push_back(forge::gen_scene(rng.next_u64()).first);
        }
        OptimizerConfig opt;
        opt.base_lr = 1e-3;
        opt.final_lr = 1e-4;
        opt.warmup_steps = 100;
        opt.decay_steps = 1900;
        vq::train_tokenizer(tokenizer, train_imgs, 2000, 8, opt, 2026);

        const double mse = vq::reconstruction_mse(tokenizer, heldout);
        const double usage = vq::codebook_usage(tokenizer, train_imgs);
        EXPECT(mse < 0.01, fmt("held-out reconstruction MSE %.5f >= 0.01", mse));
        EXPECT(usage >= 0.5, fmt("codebook usage %.3f < 0.5", usage));

        // module invariant from the same run: encode(decode(g)) token agreement
        int64_t agree = 0, total = 0;
        for (const auto& img : heldout) {
            const vq::TokenGrid g = vq::encode(tokenizer, img);
            const vq::TokenGrid g2 = vq::encode(tokenizer, vq::decode(tokenizer, g));
            for (size_t i = 0; i < g.indices.size(); ++i) {
                agree += g.indices[i] == g2.indices[i];
                ++total;
            }
        }
        const double idem = static_cast<double>(agree) / static_cast<double>(total);
        EXPECT(idem >= 0.95, fmt("encode-decode-encode agreement %.3f < 0.95", idem));
        return fmt("held-out MSE %.5f < 0.01; usage %.1f%% >= 50%%; idempotence %.1f%% >= 95%%",
                   mse, usage * 100, idem * 100);
    });

    // --- shared corpus for the training criteria ----------------------------
    std::vector<pack::TokenStream> corpus_windows;
    {
        const auto t0 = Clock::now();
        forge::CorpusSpec spec;
        spec.seed = 7100;
        spec.n_single = 3000;
        spec.n_video = 1200;
        spec.n_multiview_orbits = 300;
        spec.n_category = 400;
        spec.n_pair_segmentation = 330;
        spec.n_pair_edge = 330;
        spec.n_pair_grayscale = 770;
        spec.n_pair_inpainting = 330;
        spec.n_pair_keypoints = 440;
        spec.n_multi_annot = 300;
        spec.n_video_annot = 200;
        auto sentences = forge::build_corpus(spec);
        std::vector<pack::TokenStream> streams;
        int64_t tokens = 0;
        for (auto& s : sentences) {
            streams.push_back(pack::sentence_to_tokens(s, tokenizer));
            tokens += static_cast<int64_t>(streams.back().size());
            s.images.clear();
            s.images.shrink_to_fit();
        }
        corpus_windows = pack::pack_windows(streams, 1024, 7100);
        const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        h.info(fmt("corpus: %zu sentences, %lld tokens, %zu windows of 1024 (%.1fs)",
                   sentences.size(), static_cast<long long>(tokens), corpus_windows.size(), secs));
        if (tokens < 4900000 || tokens > 5300000) {
            h.info("WARNING: corpus token count off the 5M target");
        }
    }

    // --- criterion 6: scaling run (also produces the main desk model) -------
    lm::Model main_model = lm::make_model(lm::config_preset("desk-micro"), 0); // replaced below
    bool have_main_model = false;
    h.criterion(6, "scaling: desk-small beats desk-micro by >= 0.02 nats (same data order)", [&] {
        OptimizerConfig opt;
        opt.base_lr = 1e-3;
        opt.final_lr = 1e-4;
        opt.warmup_steps = 100;
        opt.decay_steps = 900;
        eval::TaskQueries tasks;
        tasks["colorization"] =
            make_task_queries(forge::AnnotationKind::grayscale_input, 16, 5, 6200);
        lm::ModelConfig micro = lm::config_preset("desk-micro");
        lm::ModelConfig small = lm::config_preset("desk-small");
        eval::ScalingResult res = eval::scaling_experiment(corpus_windows, {micro, small}, opt,
                                                           1000, 1, 9000, &tokenizer, &tasks);
        auto smooth_tail = [](const std::vector<lm::LossPoint>& curve) {
            double acc = 0;
            const size_t n = std::min<size_t>(50, curve.size());
            for (size_t i = curve.size() - n; i < curve.size(); ++i) {
                acc += curve[i].loss;
            }
            return acc / static_cast<double>(n);
        };
        const double micro_loss = smooth_tail(res.curves[0]);
        const double small_loss = smooth_tail(res.curves[1]);
        main_model = std::move(res.models[1]);
        have_main_model = true;
        EXPECT(small_loss <= micro_loss - 0.02,
               fmt("small %.4f vs micro %.4f: gap %.4f < 0.02", small_loss, micro_loss,
                   micro_loss - small_loss));
        return fmt("1000 steps each on the 5M-token corpus: micro %.4f, small %.4f (gap %.4f); "
                   "colorization 5-shot ppl micro %.1f -> small %.1f",
                   micro_loss, small_loss, micro_loss - small_loss,
                   res.task_ppl[0].at("colorization"), res.task_ppl[1].at("colorization"));
    });

    // --- criterion 7: in-context benefit ------------------------------------
    h.criterion(7, "context sweep: mean ppl at 8 frames < at 1 frame (100 held-out videos)", [&] {
        EXPECT(have_main_model, "no trained model from criterion 6");
        Rng rng = Rng::substream(2026, "accept/heldout_videos");
        std::vector<std::vector<Image>> videos;
        for (int i = 0; i < 100; ++i) {
            videos.push_back(forge::gen_video(rng.next_u64(), 16).frames);
        }
        auto points = eval::context_sweep(videos, main_model, tokenizer, {1, 8});
        const double p1 = points[0].mean_perplexity;
        const double p8 = points[1].mean_perplexity;
        EXPECT(p8 < p1, fmt("ppl@8 %.3f !< ppl@1 %.3f", p8, p1));
        return fmt("mean ppl@1 %.3f -> ppl@8 %.3f on 100 held-out videos", p1, p8);
    });

    // --- criterion 8: analogy competence -------------------------------------
    h.criterion(8, "analogy: identity token agreement >= 90%; colorization beats gray baseline",
                [&] {
        EXPECT(have_main_model, "no trained model from criterion 6");
        lm::SamplerConfig greedy; // temperature 0

        // (a) identity task: examples repeat the input; completion must copy the query
        Rng rng = Rng::substream(2026, "accept/identity");
        double agreement = 0;
        const int n_identity = 32;
        for (int i = 0; i < n_identity; ++i) {
            std::vector<forge::TaskPair> pairs;
            for (int s = 0; s < 5; ++s) {
                auto [img, scene] = forge::gen_scene(rng.next_u64());
                forge::TaskPair p;
                p.input = img;
                p.target = img;
                pairs.push_back(std::move(p));
            }
            auto [query, qscene] = forge::gen_scene(rng.next_u64());
            std::vector<Image> ctx;
            for (const auto& p : pairs) {
                ctx.push_back(p.input);
                ctx.push_back(p.target);
            }
            ctx.push_back(query);
            std::vector<int> prefix = eval::prompt_tokens(tokenizer, ctx, true);
            lm::SamplerConfig restricted = greedy;
            restricted.vocab_limit = tokenizer.cfg.codebook_size;
            std::vector<int> ids = lm::generate(main_model, prefix, 64, restricted);
            const vq::TokenGrid qg = vq::encode(tokenizer, query);
            int eq = 0;
            for (int t = 0; t < 64; ++t) {
                eq += ids[static_cast<size_t>(t)] == qg.indices[static_cast<size_t>(t)];
            }
            agreement += eq / 64.0;
        }
        agreement /= n_identity;
        EXPECT(agreement >= 0.90, fmt("identity agreement %.3f < 0.90", agreement));

        // constant-image sequential prompt exercises the same copying skill
        {
            auto [img, scene] = forge::gen_scene(424242);
            std::vector<Image> frames(7, img);
            auto preds = eval::sequential_prompt(frames, main_model, tokenizer, greedy, 1);
            const vq::TokenGrid want = vq::encode(tokenizer, img);
            const vq::TokenGrid got = vq::encode(tokenizer, preds[0]);
            int eq = 0;
            for (size_t t = 0; t < 64; ++t) {
                eq += want.indices[t] == got.indices[t];
            }
            h.info(fmt("constant-frame sequential prompt: %d/64 tokens copied", eq));
        }

        // (b) colorization: prediction closer to the color target than the gray query
        Rng crng = Rng::substream(2026, "accept/colorization");
        int wins = 0;
        const int n_color = 100;
        for (int i = 0; i < n_color; ++i) {
            std::vector<forge::TaskPair> pairs;
            for (int s = 0; s < 5; ++s) {
                auto [img, scene] = forge::gen_scene(crng.next_u64());
                pairs.push_back(forge::make_task_pair(scene, img,
                                                      forge::AnnotationKind::grayscale_input,
                                                      crng.next_u64()));
            }
            auto [img, scene] = forge::gen_scene(crng.next_u64());
            forge::TaskPair qp = forge::make_task_pair(scene, img,
                                                       forge::AnnotationKind::grayscale_input,
                                                       crng.next_u64());
            const Image pred = eval::analogy_prompt(pairs, qp.input, main_model, tokenizer, greedy);
            const double pred_mse = eval::metric_mse(pred, qp.target);
            const double gray_mse = eval::metric_mse(qp.input, qp.target);
            wins += pred_mse < gray_mse;
        }
        EXPECT(wins >= 70, fmt("colorization beats gray baseline on %d/100 < 70", wins));
        return fmt("identity agreement %.1f%% >= 90%%; colorization wins %d/100 >= 70",
                   agreement * 100, wins);
    });

    // --- criterion 9: dataset ablation ---------------------------------------
    h.criterion(9, "ablation: full mix <= single-only on mean 5-shot annotation perplexity", [&] {
        forge::CorpusSpec spec;
        spec.seed = 8300;
        spec.n_single = 1200;
        spec.n_video = 300;
        spec.n_multiview_orbits = 80;
        spec.n_category = 120;
        spec.n_pair_segmentation = 150;
        spec.n_pair_edge = 150;
        spec.n_pair_grayscale = 150;
        spec.n_pair_inpainting = 150;
        spec.n_pair_keypoints = 150;
        spec.n_multi_annot = 100;
        spec.n_video_annot = 60;
        auto corpus = forge::build_corpus(spec);

        eval::TaskQueries tasks;
        const forge::AnnotationKind task_kinds[4] = {
            forge::AnnotationKind::segmentation_mask, forge::AnnotationKind::edge_map,
            forge::AnnotationKind::keypoint_rendering, forge::AnnotationKind::grayscale_input};
        for (const auto kind : task_kinds) {
            tasks[forge::to_string(kind)] = make_task_queries(kind, 32, 5, 8400);
        }

        OptimizerConfig opt;
        opt.base_lr = 1e-3;
        opt.final_lr = 1e-4;
        opt.warmup_steps = 50;
        opt.decay_steps = 350;
        eval::AblationResult res = eval::ablation_experiment(
            corpus, tokenizer, {eval::AblationSubset::single_only, eval::AblationSubset::full},
            lm::config_preset("desk-micro"), opt, 400, 1, 8500, tasks);

        EXPECT(res.window_budget[0] == res.window_budget[1], "unequal token budgets");
        double single_mean = 0, full_mean = 0;
        for (const auto& [task, ppl] : res.task_ppl[0]) {
            single_mean += ppl;
        }
        for (const auto& [task, ppl] : res.task_ppl[1]) {
            full_mean += ppl;
        }
        single_mean /= 4;
        full_mean /= 4;
        EXPECT(full_mean <= single_mean,
               fmt("full-mix ppl %.2f > single-only %.2f", full_mean, single_mean));
        return fmt("equal budget %d windows; mean 5-shot annotation ppl: single-only %.1f, "
                   "full mix %.1f",
                   res.window_budget[0], single_mean, full_mean);
    });

    // --- criterion 11: byte-for-byte pipeline determinism via the CLI --------
    h.criterion(11, "determinism: full CLI pipeline reproduces artifacts byte-for-byte", [&] {
        EXPECT(!cli_path.empty(), "pass --cli <path-to-lvm-binary>");
        auto pipeline = [&](const std::string& dir) {
            fs::remove_all(dir);
            fs::create_directories(dir);
            const std::string common = " --seed 5 --deterministic";
            EXPECT(run_cli(cli_path, "gen-data --out " + dir + "/data --n_single 24 --n_video 4"
                                     " --n_multiview_orbits 1 --n_category 4"
                                     " --n_pair_segmentation 2 --n_pair_grayscale 2"
                                     " --n_multi_annot 1 --n_video_annot 1"
                                     " --n_tokenizer_train 32 --n_tokenizer_heldout 4"
                                     " --n_heldout_videos 4 --n_heldout_pairs 1" + common) == 0,
                   "gen-data failed");
            EXPECT(run_cli(cli_path, "train-tokenizer --manifest " + dir +
                                     "/data/tok_train/manifest.tsv --steps 40 --batch_size 4"
                                     " --base_lr 2e-3 --warmup_steps 5 --decay_steps 35 --out " +
                                     dir + "/tok" + common) == 0,
                   "train-tokenizer failed");
            EXPECT(run_cli(cli_path, "tokenize --manifest " + dir +
                                     "/data/corpus/manifest.tsv --tokenizer " + dir +
                                     "/tok/tokenizer.lvmw --out " + dir + "/streams" + common) == 0,
                   "tokenize failed");
            EXPECT(run_cli(cli_path, "pack --streams " + dir + "/streams/streams.lvmt --L 1024"
                                     " --out " + dir + "/packed" + common) == 0,
                   "pack failed");
            EXPECT(run_cli(cli_path, "train --shards " + dir + "/packed/shard.lvms"
                                     " --preset desk-micro --steps 10 --warmup_steps 2"
                                     " --decay_steps 8 --out " + dir + "/model" + common) == 0,
                   "train failed");
            EXPECT(run_cli(cli_path, "eval context-sweep --tokenizer " + dir +
                                     "/tok/tokenizer.lvmw --checkpoint " + dir +
                                     "/model/model.lvmw --manifest " + dir +
                                     "/data/heldout_videos/manifest.tsv --lengths 1,2 --out " +
                                     dir + "/sweep" + common) == 0,
                   "eval failed");
        };
        pipeline(work + "/det1");
        pipeline(work + "/det2");
        const char* artifacts[] = {
            "/tok/tokenizer.lvmw", "/streams/streams.lvmt", "/packed/shard.lvms",
            "/model/model.lvmw",   "/model/loss.csv",       "/sweep/context_sweep.csv",
        };
        for (const char* a : artifacts) {
            EXPECT(slurp(work + "/det1" + a) == slurp(work + "/det2" + a),
                   fmt("artifact differs between runs: %s", a));
        }
        return "two seeded runs: shards, checkpoints and eval CSVs byte-identical";
    });

    std::printf("acceptance: %d passed, %d failed\n", h.passed, h.failed);
    return h.failed == 0 ? 0 : 1;
}
