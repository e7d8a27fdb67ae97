#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "lvm/forge.hpp"
#include "lvm/rng.hpp"
#include "lvm/vq.hpp"

using namespace lvm;
using namespace lvm::vq;

namespace {

std::vector<Image> sample_images(int n, uint64_t seed, int size = 32) {
    std::vector<Image> out;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        out.push_back(forge::gen_scene(rng.next_u64(), size).first);
    }
    return out;
}

} // namespace

TEST_CASE("quantize: nearest by inspection and tie-break to the lowest index") {
    Codebook cb;
    cb.K = 2;
    cb.D = 2;
    cb.vectors = {0.0f, 0.0f, 1.0f, 1.0f};
    const float latent[2] = {0.9f, 0.8f};
    auto [idx, word] = quantize(std::span<const float>(latent, 2), cb);
    CHECK(idx == 1);
    CHECK(word[0] == 1.0f);

    Codebook tie;
    tie.K = 8;
    tie.D = 2;
    tie.vectors.assign(16, 9.0f);
    // codewords 3 and 7 are identical and closest
    tie.vectors[6] = 0.0f;
    tie.vectors[7] = 0.0f;
    tie.vectors[14] = 0.0f;
    tie.vectors[15] = 0.0f;
    const float origin[2] = {0.1f, -0.1f};
    CHECK(quantize(std::span<const float>(origin, 2), tie).first == 3);
}

TEST_CASE("quantize: matches an exhaustive nearest-neighbor scan on 1000 latents") {
    Rng rng(17);
    Codebook cb;
    cb.K = 64;
    cb.D = 8;
    cb.vectors.resize(static_cast<size_t>(cb.K) * cb.D);
    for (auto& v : cb.vectors) {
        v = static_cast<float>(rng.next_normal());
    }
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<float> z(8);
        for (auto& v : z) {
            v = static_cast<float>(rng.next_normal());
        }
        // brute-force oracle, scanning every codeword independently
        int best = -1;
        double best_d = 1e300;
        for (int k = 0; k < cb.K; ++k) {
            double d = 0;
            for (int j = 0; j < 8; ++j) {
                const double diff = z[j] - cb.vectors[static_cast<size_t>(k) * 8 + j];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        CHECK(quantize(z, cb).first == best);
    }
}

TEST_CASE("encode: token counts at desk and paper-parity geometry") {
    TokenizerConfig desk;
    Tokenizer tok = make_tokenizer(desk, 1);
    auto imgs = sample_images(2, 5);
    init_codebook(tok, imgs, 1);
    TokenGrid g = encode(tok, imgs[0]);
    CHECK(g.h == 8);
    CHECK(g.w == 8);
    CHECK(g.indices.size() == 64);
    CHECK(desk.tokens_per_image() == 64);
    for (uint16_t idx : g.indices) {
        CHECK(idx < desk.codebook_size);
    }

    // paper-parity geometry: 256x256, f=16 -> 16x16 = 256 tokens
    TokenizerConfig parity;
    parity.image_size = 256;
    parity.downsample_f = 16;
    parity.codebook_size = 8192;
    parity.base_channels = 4; // keep the untrained shape check cheap
    CHECK(parity.tokens_per_image() == 256);
    Tokenizer ptok = make_tokenizer(parity, 2);
    auto pimgs = sample_images(1, 6, 256);
    init_codebook(ptok, pimgs, 2);
    TokenGrid pg = encode(ptok, pimgs[0]);
    CHECK(pg.h * pg.w == 256);

    Image wrong(16, 16);
    CHECK_THROWS_AS(encode(tok, wrong), DimensionError);
}

TEST_CASE("decode: shape restore, purity, invalid token") {
    TokenizerConfig cfg;
    Tokenizer tok = make_tokenizer(cfg, 3);
    auto imgs = sample_images(2, 9);
    init_codebook(tok, imgs, 3);
    TokenGrid g = encode(tok, imgs[0]);
    Image a = decode(tok, g);
    Image b = decode(tok, g);
    CHECK(a.width == cfg.image_size);
    CHECK(a.height == cfg.image_size);
    CHECK(a == b);

    TokenGrid bad = g;
    bad.indices[0] = static_cast<uint16_t>(cfg.codebook_size);
    CHECK_THROWS_AS(decode(tok, bad), InvalidTokenError);

    TokenGrid misshapen = g;
    misshapen.h = 4;
    CHECK_THROWS_AS(decode(tok, misshapen), DimensionError);
}

TEST_CASE("commitment loss is zero when latents equal codewords") {
    TokenizerConfig cfg;
    cfg.codebook_size = 64;
    Tokenizer tok = make_tokenizer(cfg, 11);
    auto imgs = sample_images(1, 21);
    // plant the image's own latent cells as the codebook
    Tensor lat = encode_latents(tok, image_to_tensor(imgs[0]), nullptr);
    const int D = cfg.codeword_dim;
    const size_t hw = 64;
    for (size_t p = 0; p < hw; ++p) {
        for (int d = 0; d < D; ++d) {
            tok.codebook.vectors[p * static_cast<size_t>(D) + d] =
                lat.ptr()[static_cast<size_t>(d) * hw + p];
        }
    }
    tok.codebook_ready = true;
    VqLosses l = tokenizer_eval_losses(tok, {imgs[0]});
    CHECK(l.commitment == 0.0);
    CHECK(l.reconstruction > 0.0);
}

TEST_CASE("EMA update arithmetic: one assignment to index i") {
    Codebook cb;
    cb.K = 4;
    cb.D = 2;
    cb.vectors = {1, 1, 2, 2, 3, 3, 4, 4};
    cb.ema_counts = {0.5f, 2.0f, 1.0f, 1.0f};
    cb.ema_sums = {0.5f, 0.5f, 4.0f, 4.0f, 3.0f, 3.0f, 4.0f, 4.0f};

    const std::vector<int> assignments = {1};
    const std::vector<float> latents = {5.0f, 7.0f};
    ema_update(cb, assignments, latents, 0.99);

    CHECK(cb.ema_counts[1] == doctest::Approx(0.99f * 2.0f + 0.01f * 1.0f).epsilon(1e-7));
    CHECK(cb.ema_counts[0] == doctest::Approx(0.99f * 0.5f).epsilon(1e-7));
    CHECK(cb.ema_sums[2] == doctest::Approx(0.99f * 4.0f + 0.01f * 5.0f).epsilon(1e-7));
    CHECK(cb.ema_sums[3] == doctest::Approx(0.99f * 4.0f + 0.01f * 7.0f).epsilon(1e-7));
    // vectors follow sums / counts
    CHECK(cb.vectors[2] == doctest::Approx((0.99f * 4.0f + 0.05f) / (0.99f * 2.0f + 0.01f))
                               .epsilon(1e-6));
}

TEST_CASE("overfit 16 images: smoothed reconstruction loss decreases") {
    TokenizerConfig cfg;
    Tokenizer tok = make_tokenizer(cfg, 5);
    auto imgs = sample_images(16, 41);
    OptimizerConfig opt;
    opt.base_lr = 2e-3;
    opt.final_lr = 2e-4;
    opt.warmup_steps = 10;
    opt.decay_steps = 90;
    TokenizerTrainResult res = train_tokenizer(tok, imgs, 100, 4, opt, 5);
    REQUIRE(res.loss_curve.size() == 100);
    auto window = [&](int lo) {
        double s = 0;
        for (int i = lo; i < lo + 10; ++i) {
            s += res.loss_curve[static_cast<size_t>(i)];
        }
        return s / 10.0;
    };
    const double w0 = window(0), w1 = window(45), w2 = window(90);
    CHECK(w1 < w0);
    CHECK(w2 < w1);
    CHECK(w2 < 0.5 * w0);
}

TEST_CASE("tokenizer save/load: byte-stable and encode-identical") {
    TokenizerConfig cfg;
    Tokenizer tok = make_tokenizer(cfg, 13);
    auto imgs = sample_images(4, 51);
    init_codebook(tok, imgs, 13);

    const std::string p1 = "tok_roundtrip_1.lvmw";
    const std::string p2 = "tok_roundtrip_2.lvmw";
    save_tokenizer(tok, p1);
    Tokenizer back = load_tokenizer(p1);
    save_tokenizer(back, p2);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(encode(back, imgs[0]).indices == encode(tok, imgs[0]).indices);
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}
