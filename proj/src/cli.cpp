#include "lvm/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "lvm/errors.hpp"
#include "lvm/forge.hpp"
#include "lvm/model.hpp"
#include "lvm/packer.hpp"
#include "lvm/prompt.hpp"
#include "lvm/rng.hpp"
#include "lvm/serialize.hpp"
#include "lvm/vq.hpp"

namespace fs = std::filesystem;

namespace lvm::cli {

namespace {

const char* kUsage =
    "usage: lvm <subcommand> [--seed N] [--config FILE] [--out DIR] [--preset NAME]\n"
    "           [--steps N] [--deterministic]\n"
    "subcommands:\n"
    "  gen-data          generate the synthetic corpus, manifests and held-out sets\n"
    "  train-tokenizer   train the VQ tokenizer on single images\n"
    "  tokenize          turn sentence manifests into token streams\n"
    "  pack              pack token streams into fixed-length window shards\n"
    "  train             train a model on packed shards\n"
    "  eval              context-sweep | few-shot evaluations (CSV)\n"
    "  prompt            run sequential/analogy prompts from a prompt manifest\n"
    "  stats             per-category token statistics for manifests (CSV)\n"
    "  scaling           train several presets on the same shards, compare losses\n"
    "  ablation          train on corpus subsets at equal token budgets\n"
    "  verify-checkpoint check a checkpoint round-trips and matches its probe\n";

// All recognized config keys; anything else is rejected.
const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "seed", "out", "preset", "steps", "deterministic",
        // tokenizer config
        "image_size", "f", "K", "D", "base_channels", "commitment_beta", "ema_decay",
        // packing / training shape
        "L", "batch_windows", "batch_size",
        // optimizer
        "base_lr", "final_lr", "warmup_steps", "decay_steps", "weight_decay", "beta1", "beta2",
        "eps",
        // inputs
        "manifest", "manifests", "tokenizer", "streams", "shards", "checkpoint", "prompts",
        "images_root",
        // eval
        "mode", "lengths", "task", "shots", "n_queries", "temperature", "top_k",
        // drivers
        "presets", "subsets",
        // corpus counts
        "n_single", "n_video", "n_multiview_orbits", "n_category", "n_pair_segmentation",
        "n_pair_edge", "n_pair_grayscale", "n_pair_inpainting", "n_pair_keypoints",
        "n_multi_annot", "n_video_annot", "video_strides", "video_length_frames",
        "n_tokenizer_train", "n_tokenizer_heldout", "n_heldout_videos", "n_heldout_pairs",
    };
    return keys;
}

struct Settings {
    std::vector<std::pair<std::string, std::string>> pairs;

    bool has(const std::string& key) const {
        for (const auto& [k, v] : pairs) {
            if (k == key) {
                return true;
            }
        }
        return false;
    }

    void set(const std::string& key, const std::string& value) {
        if (known_keys().count(key) == 0) {
            throw ConfigError("unknown config key '" + key + "'");
        }
        for (auto& [k, v] : pairs) {
            if (k == key) {
                v = value;
                return;
            }
        }
        pairs.emplace_back(key, value);
    }

    std::string str(const std::string& key, const std::string& fallback) const {
        for (const auto& [k, v] : pairs) {
            if (k == key) {
                return v;
            }
        }
        return fallback;
    }

    std::string require(const std::string& key, const std::string& what) const {
        for (const auto& [k, v] : pairs) {
            if (k == key) {
                return v;
            }
        }
        throw ConfigError("missing config key '" + key + "' (" + what + ")");
    }

    int64_t integer(const std::string& key, int64_t fallback) const {
        const std::string v = str(key, "");
        if (v.empty()) {
            return fallback;
        }
        try {
            size_t used = 0;
            const int64_t out = std::stoll(v, &used);
            if (used != v.size()) {
                throw std::invalid_argument(v);
            }
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
        }
    }

    double real(const std::string& key, double fallback) const {
        const std::string v = str(key, "");
        if (v.empty()) {
            return fallback;
        }
        try {
            size_t used = 0;
            const double out = std::stod(v, &used);
            if (used != v.size()) {
                throw std::invalid_argument(v);
            }
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
        }
    }

    std::vector<std::string> list(const std::string& key) const {
        std::vector<std::string> out;
        std::string v = str(key, "");
        size_t start = 0;
        while (start < v.size()) {
            size_t comma = v.find(',', start);
            if (comma == std::string::npos) {
                comma = v.size();
            }
            if (comma > start) {
                out.push_back(v.substr(start, comma - start));
            }
            start = comma + 1;
        }
        return out;
    }

    std::vector<int> int_list(const std::string& key) const {
        std::vector<int> out;
        for (const auto& s : list(key)) {
            try {
                out.push_back(std::stoi(s));
            } catch (const std::exception&) {
                throw ConfigError("config key '" + key + "': expected integer list");
            }
        }
        return out;
    }

    std::string resolved_text() const {
        std::string out;
        for (const auto& [k, v] : pairs) {
            out += serialize::kv_line(k, v);
        }
        return out;
    }
};

uint64_t seed_of(const Settings& s) {
    return static_cast<uint64_t>(s.integer("seed", 0));
}

std::string out_dir(const Settings& s) {
    const std::string out = s.str("out", "");
    if (out.empty()) {
        throw ConfigError("missing --out directory");
    }
    fs::create_directories(out);
    return out;
}

void write_resolved_config(const Settings& s, const std::string& dir,
                           const std::string& subcommand) {
    std::ofstream f(fs::path(dir) / "config.resolved");
    f << "# resolved configuration for subcommand: " << subcommand << "\n";
    f << s.resolved_text();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open for writing: " + path);
    }
    f << text;
}

vq::TokenizerConfig tokenizer_config(const Settings& s) {
    vq::TokenizerConfig cfg;
    cfg.image_size = static_cast<int>(s.integer("image_size", cfg.image_size));
    cfg.downsample_f = static_cast<int>(s.integer("f", cfg.downsample_f));
    cfg.codebook_size = static_cast<int>(s.integer("K", cfg.codebook_size));
    cfg.codeword_dim = static_cast<int>(s.integer("D", cfg.codeword_dim));
    cfg.base_channels = static_cast<int>(s.integer("base_channels", cfg.base_channels));
    cfg.commitment_beta = s.real("commitment_beta", cfg.commitment_beta);
    cfg.ema_decay = s.real("ema_decay", cfg.ema_decay);
    cfg.validate();
    return cfg;
}

OptimizerConfig optimizer_config(const Settings& s) {
    OptimizerConfig opt;
    opt.base_lr = s.real("base_lr", opt.base_lr);
    opt.final_lr = s.real("final_lr", opt.final_lr);
    opt.warmup_steps = static_cast<int>(s.integer("warmup_steps", opt.warmup_steps));
    opt.decay_steps = static_cast<int>(s.integer("decay_steps", opt.decay_steps));
    opt.weight_decay = s.real("weight_decay", opt.weight_decay);
    opt.beta1 = s.real("beta1", opt.beta1);
    opt.beta2 = s.real("beta2", opt.beta2);
    opt.eps = s.real("eps", opt.eps);
    opt.validate();
    return opt;
}

forge::CorpusSpec corpus_spec(const Settings& s) {
    forge::CorpusSpec spec;
    spec.seed = seed_of(s);
    spec.image_size = static_cast<int>(s.integer("image_size", 32));
    spec.n_single = static_cast<int>(s.integer("n_single", 48));
    spec.n_video = static_cast<int>(s.integer("n_video", 16));
    spec.n_multiview_orbits = static_cast<int>(s.integer("n_multiview_orbits", 3));
    spec.n_category = static_cast<int>(s.integer("n_category", 8));
    spec.n_pair_segmentation = static_cast<int>(s.integer("n_pair_segmentation", 6));
    spec.n_pair_edge = static_cast<int>(s.integer("n_pair_edge", 6));
    spec.n_pair_grayscale = static_cast<int>(s.integer("n_pair_grayscale", 10));
    spec.n_pair_inpainting = static_cast<int>(s.integer("n_pair_inpainting", 4));
    spec.n_pair_keypoints = static_cast<int>(s.integer("n_pair_keypoints", 6));
    spec.n_multi_annot = static_cast<int>(s.integer("n_multi_annot", 4));
    spec.n_video_annot = static_cast<int>(s.integer("n_video_annot", 4));
    if (s.has("video_strides")) {
        spec.video_strides = s.int_list("video_strides");
        if (spec.video_strides.empty()) {
            throw ConfigError("video_strides: need at least one stride");
        }
    }
    spec.video_length_frames = static_cast<int>(s.integer("video_length_frames", 64));
    return spec;
}

std::vector<Image> load_manifest_images(const std::string& manifest_path,
                                        const forge::ManifestEntry& entry) {
    const fs::path root = fs::path(manifest_path).parent_path();
    std::vector<Image> out;
    for (const auto& p : entry.paths) {
        out.push_back(read_ppm((root / p).string()));
    }
    return out;
}

std::vector<forge::VisualSentence> load_manifest_sentences(const std::string& manifest_path) {
    std::vector<forge::VisualSentence> out;
    for (const auto& entry : forge::parse_manifest(manifest_path)) {
        forge::VisualSentence s;
        s.kind = entry.kind;
        s.images = load_manifest_images(manifest_path, entry);
        out.push_back(std::move(s));
    }
    return out;
}

// Held-out pair-sentence manifests double as few-shot query sources: the
// first `shots` pairs become examples and the following pairs become queries.
eval::TaskQueries queries_from_pair_manifest(const std::string& manifest_path,
                                             forge::AnnotationKind kind, int shots,
                                             int max_queries) {
    eval::TaskQueries tasks;
    auto& queries = tasks[forge::to_string(kind)];
    for (const auto& entry : forge::parse_manifest(manifest_path)) {
        if (entry.kind != forge::SentenceKind::pair || entry.paths.size() != 16) {
            throw FormatError("few-shot manifest " + manifest_path +
                              " must contain 16-image pair sentences");
        }
        const auto images = load_manifest_images(manifest_path, entry);
        if (static_cast<int>(images.size()) / 2 <= shots) {
            continue;
        }
        for (int q = shots; q < 8 && static_cast<int>(queries.size()) < max_queries; ++q) {
            eval::FewShotQuery fq;
            for (int i = 0; i < shots; ++i) {
                forge::TaskPair p;
                p.input = images[static_cast<size_t>(2 * i)];
                p.target = images[static_cast<size_t>(2 * i + 1)];
                p.kind = kind;
                fq.shots.push_back(std::move(p));
            }
            fq.query = images[static_cast<size_t>(2 * q)];
            fq.gt = images[static_cast<size_t>(2 * q + 1)];
            queries.push_back(std::move(fq));
        }
        if (static_cast<int>(queries.size()) >= max_queries) {
            break;
        }
    }
    if (queries.empty()) {
        throw InsufficientDataError("no few-shot queries could be built from " + manifest_path);
    }
    return tasks;
}

// --- subcommands ---------------------------------------------------------------

int cmd_gen_data(const Settings& s) {
    const std::string out = out_dir(s);
    write_resolved_config(s, out, "gen-data");
    const forge::CorpusSpec spec = corpus_spec(s);
    const uint64_t seed = seed_of(s);

    auto sentences = forge::build_corpus(spec);
    forge::write_sentence_corpus((fs::path(out) / "corpus").string(), "manifest.tsv", sentences);

    // tokenizer training set: single images only
    const int n_tok = static_cast<int>(s.integer("n_tokenizer_train", 256));
    const int n_tok_heldout = static_cast<int>(s.integer("n_tokenizer_heldout", 32));
    Rng tok_rng = Rng::substream(seed, "gen/tokenizer_images");
    std::vector<forge::VisualSentence> tok_train, tok_heldout;
    for (int i = 0; i < n_tok + n_tok_heldout; ++i) {
        forge::VisualSentence v;
        v.kind = forge::SentenceKind::single;
        v.images.push_back(forge::gen_scene(tok_rng.next_u64(), spec.image_size).first);
        (i < n_tok ? tok_train : tok_heldout).push_back(std::move(v));
    }
    forge::write_sentence_corpus((fs::path(out) / "tok_train").string(), "manifest.tsv", tok_train);
    forge::write_sentence_corpus((fs::path(out) / "tok_heldout").string(), "manifest.tsv",
                                 tok_heldout);

    // held-out videos for context sweeps
    const int n_heldout_videos = static_cast<int>(s.integer("n_heldout_videos", 16));
    Rng vid_rng = Rng::substream(seed, "gen/heldout_videos");
    std::vector<forge::VisualSentence> heldout_videos;
    for (int i = 0; i < n_heldout_videos; ++i) {
        forge::Video v = forge::gen_video(vid_rng.next_u64(), 16, spec.image_size);
        forge::VisualSentence vs;
        vs.kind = forge::SentenceKind::video;
        vs.images = std::move(v.frames);
        heldout_videos.push_back(std::move(vs));
    }
    forge::write_sentence_corpus((fs::path(out) / "heldout_videos").string(), "manifest.tsv",
                                 heldout_videos);

    // held-out pair sentences per annotation kind for few-shot evals
    const int n_heldout_pairs = static_cast<int>(s.integer("n_heldout_pairs", 4));
    for (int k = 0; k < forge::kNumAnnotationKinds; ++k) {
        const auto kind = static_cast<forge::AnnotationKind>(k);
        Rng pair_rng = Rng::substream(seed, "gen/heldout_pairs/" + forge::to_string(kind));
        std::vector<forge::VisualSentence> sentences_k;
        for (int i = 0; i < n_heldout_pairs; ++i) {
            std::vector<forge::TaskPair> pairs;
            for (int j = 0; j < 8; ++j) {
                auto [img, scene] = forge::gen_scene(pair_rng.next_u64(), spec.image_size);
                pairs.push_back(forge::make_task_pair(scene, img, kind, pair_rng.next_u64()));
            }
            sentences_k.push_back(forge::build_pair_sentence(pairs));
        }
        forge::write_sentence_corpus((fs::path(out) / ("heldout_" + forge::to_string(kind))).string(),
                                     "manifest.tsv", sentences_k);
    }

    std::printf("gen-data: %zu corpus sentences under %s\n", sentences.size(), out.c_str());
    return 0;
}

int cmd_train_tokenizer(const Settings& s) {
    const std::string out = out_dir(s);
    const std::string manifest = s.require("manifest", "tokenizer training manifest");
    const vq::TokenizerConfig cfg = tokenizer_config(s);
    const uint64_t seed = seed_of(s);

    std::vector<Image> images;
    for (const auto& entry : forge::parse_manifest(manifest)) {
        for (auto& img : load_manifest_images(manifest, entry)) {
            images.push_back(std::move(img));
        }
    }

    vq::Tokenizer tok = vq::make_tokenizer(cfg, seed);
    OptimizerConfig opt = optimizer_config(s);
    const int steps = static_cast<int>(s.integer("steps", 500));
    const int batch = static_cast<int>(s.integer("batch_size", 8));
    vq::TokenizerTrainResult res = vq::train_tokenizer(tok, images, steps, batch, opt, seed);

    vq::save_tokenizer(tok, (fs::path(out) / "tokenizer.lvmw").string());
    std::string csv = "step,loss\n";
    char buf[64];
    for (size_t i = 0; i < res.loss_curve.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.8f\n", i + 1, res.loss_curve[i]);
        csv += buf;
    }
    write_text((fs::path(out) / "tokenizer_loss.csv").string(), csv);
    write_resolved_config(s, out, "train-tokenizer");
    std::printf("train-tokenizer: %d steps on %zu images -> %s\n", steps, images.size(),
                out.c_str());
    return 0;
}

int cmd_tokenize(const Settings& s) {
    const std::string out = out_dir(s);
    const std::string manifest = s.require("manifest", "sentence manifest");
    vq::Tokenizer tok = vq::load_tokenizer(s.require("tokenizer", "tokenizer checkpoint"));

    pack::StreamsFile sf;
    sf.codebook_size = tok.cfg.codebook_size;
    for (const auto& entry : forge::parse_manifest(manifest)) {
        forge::VisualSentence vs;
        vs.kind = entry.kind;
        vs.images = load_manifest_images(manifest, entry);
        sf.streams.push_back(pack::sentence_to_tokens(vs, tok));
    }
    pack::write_streams((fs::path(out) / "streams.lvmt").string(), sf);
    write_resolved_config(s, out, "tokenize");
    std::printf("tokenize: %zu sentences -> %s/streams.lvmt\n", sf.streams.size(), out.c_str());
    return 0;
}

int cmd_pack(const Settings& s) {
    const std::string out = out_dir(s);
    pack::StreamsFile sf = pack::read_streams(s.require("streams", "token streams file"));
    const int L = static_cast<int>(s.integer("L", 1024));
    auto windows = pack::pack_windows(sf.streams, L, seed_of(s));

    pack::Shard shard;
    shard.codebook_size = sf.codebook_size;
    shard.window_len = L;
    shard.windows = std::move(windows);
    pack::write_shard((fs::path(out) / "shard.lvms").string(), shard);
    write_resolved_config(s, out, "pack");

    int64_t total = 0;
    for (const auto& st : sf.streams) {
        total += static_cast<int64_t>(st.size());
    }
    std::printf("pack: %lld tokens -> %zu windows of %d (%lld dropped)\n",
                static_cast<long long>(total), shard.windows.size(), L,
                static_cast<long long>(total - static_cast<int64_t>(shard.windows.size()) * L));
    return 0;
}

int cmd_train(const Settings& s) {
    const std::string out = out_dir(s);
    pack::Shard shard = pack::read_shard(s.require("shards", "packed shard file"));

    lm::ModelConfig cfg = lm::config_preset(s.str("preset", "desk-micro"));
    cfg.vocab_size = shard.codebook_size + 2;
    cfg.context_len = shard.window_len;
    lm::Model model = lm::make_model(cfg, seed_of(s));
    lm::TrainerState st = lm::make_trainer_state(model);
    lm::TrainConfig tc;
    tc.steps = static_cast<int>(s.integer("steps", 100));
    tc.batch_windows = static_cast<int>(s.integer("batch_windows", 1));
    tc.seed = seed_of(s);
    lm::TrainResult res = lm::train(model, shard.windows, optimizer_config(s), tc, st);

    lm::save_checkpoint((fs::path(out) / "model.lvmw").string(), model, st);
    write_text((fs::path(out) / "loss.csv").string(), lm::format_loss_csv(res.curve));
    write_resolved_config(s, out, "train");
    if (res.aborted) {
        throw TrainingError("train aborted (" + res.abort_reason + "); last checkpoint kept at " +
                            out + "/model.lvmw");
    }
    std::printf("train: %s, %d steps, final loss %.4f -> %s\n", cfg.name.c_str(), tc.steps,
                res.curve.empty() ? 0.0 : res.curve.back().loss, out.c_str());
    return 0;
}

int cmd_eval(const Settings& s, const std::vector<std::string>& rest) {
    if (rest.empty()) {
        throw UsageError("eval: need a mode (context-sweep | few-shot)");
    }
    const std::string mode = rest[0];
    const std::string out = out_dir(s);
    vq::Tokenizer tok = vq::load_tokenizer(s.require("tokenizer", "tokenizer checkpoint"));
    lm::LoadedCheckpoint ckpt = lm::load_checkpoint(s.require("checkpoint", "model checkpoint"));
    const uint64_t seed = seed_of(s);

    if (mode == "context-sweep") {
        const std::string manifest = s.require("manifest", "held-out video manifest");
        std::vector<std::vector<Image>> videos;
        for (const auto& entry : forge::parse_manifest(manifest)) {
            videos.push_back(load_manifest_images(manifest, entry));
        }
        std::vector<int> lengths = s.int_list("lengths");
        if (lengths.empty()) {
            for (int c = 1; c <= 15; ++c) {
                lengths.push_back(c);
            }
        }
        auto points = eval::context_sweep(videos, ckpt.model, tok, lengths);
        std::vector<eval::EvalRecord> records;
        for (const auto& p : points) {
            records.push_back({"context_sweep", ckpt.model.cfg.name, p.context,
                               p.mean_perplexity, seed});
        }
        write_text((fs::path(out) / "context_sweep.csv").string(),
                   eval::format_records_csv(records));
        write_resolved_config(s, out, "eval context-sweep");
        std::printf("eval context-sweep: %zu lengths x %zu videos -> %s/context_sweep.csv\n",
                    lengths.size(), videos.size(), out.c_str());
        return 0;
    }
    if (mode == "few-shot") {
        const std::string manifest = s.require("manifest", "held-out pair manifest");
        const forge::AnnotationKind kind =
            forge::annotation_kind_from_string(s.require("task", "annotation task name"));
        const int shots = static_cast<int>(s.integer("shots", 5));
        const int n_queries = static_cast<int>(s.integer("n_queries", 64));
        eval::TaskQueries tasks = queries_from_pair_manifest(manifest, kind, shots, n_queries);
        std::vector<eval::EvalRecord> records;
        for (const auto& [task, queries] : tasks) {
            const double ppl = eval::mean_task_perplexity(queries, ckpt.model, tok);
            records.push_back({task, ckpt.model.cfg.name, shots, ppl, seed});
        }
        write_text((fs::path(out) / "few_shot.csv").string(), eval::format_records_csv(records));
        write_resolved_config(s, out, "eval few-shot");
        std::printf("eval few-shot: task %s -> %s/few_shot.csv\n", forge::to_string(kind).c_str(),
                    out.c_str());
        return 0;
    }
    throw UsageError("eval: unknown mode '" + mode + "' (want context-sweep | few-shot)");
}

int cmd_prompt(const Settings& s) {
    const std::string out = out_dir(s);
    vq::Tokenizer tok = vq::load_tokenizer(s.require("tokenizer", "tokenizer checkpoint"));
    lm::LoadedCheckpoint ckpt = lm::load_checkpoint(s.require("checkpoint", "model checkpoint"));
    const std::string prompts_path = s.require("prompts", "prompt manifest");

    std::ifstream pf(prompts_path);
    if (!pf) {
        throw IoError("cannot open prompt manifest: " + prompts_path);
    }
    std::stringstream ss;
    ss << pf.rdbuf();
    const auto specs = eval::parse_prompt_manifest_text(ss.str());

    const fs::path root = s.has("images_root") ? fs::path(s.str("images_root", ""))
                                               : fs::path(prompts_path).parent_path();
    lm::SamplerConfig sampler;
    sampler.temperature = s.real("temperature", 0.0);
    if (s.has("top_k")) {
        sampler.top_k = static_cast<int>(s.integer("top_k", 0));
    }
    sampler.seed = seed_of(s);

    int n_out = 0;
    char buf[64];
    for (size_t i = 0; i < specs.size(); ++i) {
        std::vector<Image> images;
        for (const auto& p : specs[i].image_paths) {
            images.push_back(read_ppm((root / p).string()));
        }
        std::vector<Image> preds;
        if (specs[i].mode == eval::PromptMode::sequential) {
            preds = eval::sequential_prompt(images, ckpt.model, tok, sampler, specs[i].n_predict);
        } else {
            if (images.size() % 2 != 1) {
                throw FormatError("analogy prompt needs pairs plus one query image, got " +
                                  std::to_string(images.size()) + " images");
            }
            std::vector<forge::TaskPair> pairs;
            for (size_t j = 0; j + 1 < images.size(); j += 2) {
                forge::TaskPair p;
                p.input = images[j];
                p.target = images[j + 1];
                pairs.push_back(std::move(p));
            }
            preds.push_back(
                eval::analogy_prompt(pairs, images.back(), ckpt.model, tok, sampler));
        }
        for (size_t j = 0; j < preds.size(); ++j) {
            std::snprintf(buf, sizeof buf, "pred_%03zu_%02zu.ppm", i, j);
            write_ppm((fs::path(out) / buf).string(), preds[j]);
            ++n_out;
        }
    }
    write_resolved_config(s, out, "prompt");
    std::printf("prompt: %zu prompts -> %d predicted images under %s\n", specs.size(), n_out,
                out.c_str());
    return 0;
}

int cmd_stats(const Settings& s) {
    const std::string out = out_dir(s);
    std::vector<std::string> manifests = s.list("manifests");
    if (manifests.empty() && s.has("manifest")) {
        manifests.push_back(s.str("manifest", ""));
    }
    if (manifests.empty()) {
        throw ConfigError("stats: need manifest or manifests");
    }
    const int image_size = static_cast<int>(s.integer("image_size", 32));
    const int f = static_cast<int>(s.integer("f", 4));
    const int tpi = (image_size / f) * (image_size / f);
    pack::CorpusStats stats = pack::corpus_stats(manifests, tpi);
    write_text((fs::path(out) / "stats.csv").string(), pack::format_stats_csv(stats));
    write_resolved_config(s, out, "stats");
    std::printf("%s", pack::format_stats_csv(stats).c_str());
    return 0;
}

int cmd_scaling(const Settings& s) {
    const std::string out = out_dir(s);
    pack::Shard shard = pack::read_shard(s.require("shards", "packed shard file"));
    std::vector<std::string> preset_list = s.list("presets");
    if (preset_list.empty()) {
        preset_list = {"desk-micro", "desk-small", "desk-med"};
    }
    std::vector<lm::ModelConfig> configs;
    for (const auto& name : preset_list) {
        lm::ModelConfig cfg = lm::config_preset(name);
        cfg.vocab_size = shard.codebook_size + 2;
        cfg.context_len = shard.window_len;
        configs.push_back(cfg);
    }
    const int steps = static_cast<int>(s.integer("steps", 200));
    const int batch = static_cast<int>(s.integer("batch_windows", 1));
    eval::ScalingResult res = eval::scaling_experiment(shard.windows, configs, optimizer_config(s),
                                                       steps, batch, seed_of(s), nullptr, nullptr);
    write_text((fs::path(out) / "scaling.csv").string(), eval::format_scaling_csv(res));
    write_resolved_config(s, out, "scaling");
    for (size_t i = 0; i < res.config_names.size(); ++i) {
        std::printf("scaling: %s final loss %.4f\n", res.config_names[i].c_str(),
                    res.curves[i].back().loss);
    }
    return 0;
}

int cmd_ablation(const Settings& s) {
    const std::string out = out_dir(s);
    vq::Tokenizer tok = vq::load_tokenizer(s.require("tokenizer", "tokenizer checkpoint"));
    const std::string manifest = s.require("manifest", "corpus manifest");
    auto corpus = load_manifest_sentences(manifest);

    std::vector<eval::AblationSubset> subsets;
    std::vector<std::string> names = s.list("subsets");
    if (names.empty()) {
        names = {"single_only", "full"};
    }
    for (const auto& n : names) {
        if (n == "single_only") {
            subsets.push_back(eval::AblationSubset::single_only);
        } else if (n == "plus_video") {
            subsets.push_back(eval::AblationSubset::plus_video);
        } else if (n == "plus_annotations") {
            subsets.push_back(eval::AblationSubset::plus_annotations);
        } else if (n == "full") {
            subsets.push_back(eval::AblationSubset::full);
        } else {
            throw ConfigError("ablation: unknown subset '" + n + "'");
        }
    }

    const forge::AnnotationKind kind =
        forge::annotation_kind_from_string(s.str("task", "segmentation_mask"));
    eval::TaskQueries tasks = queries_from_pair_manifest(
        s.require("prompts", "held-out pair manifest for evaluation"), kind,
        static_cast<int>(s.integer("shots", 5)), static_cast<int>(s.integer("n_queries", 32)));

    lm::ModelConfig cfg = lm::config_preset(s.str("preset", "desk-micro"));
    cfg.vocab_size = tok.cfg.codebook_size + 2;
    cfg.context_len = static_cast<int>(s.integer("L", 1024));
    eval::AblationResult res = eval::ablation_experiment(
        corpus, tok, subsets, cfg, optimizer_config(s), static_cast<int>(s.integer("steps", 100)),
        static_cast<int>(s.integer("batch_windows", 1)), seed_of(s), tasks);
    write_text((fs::path(out) / "ablation.csv").string(), eval::format_ablation_csv(res));
    write_resolved_config(s, out, "ablation");
    std::printf("%s", eval::format_ablation_csv(res).c_str());
    return 0;
}

int cmd_verify_checkpoint(const Settings& s, const std::vector<std::string>& rest) {
    const std::string path = !rest.empty() ? rest[0] : s.require("checkpoint", "checkpoint path");
    if (!fs::exists(path)) {
        throw IoError("checkpoint does not exist: " + path);
    }
    // load (verifies probe logits), save to a scratch file, compare bytes
    lm::LoadedCheckpoint ckpt = lm::load_checkpoint(path);
    const std::string scratch = path + ".verify.tmp";
    lm::save_checkpoint(scratch, ckpt.model, ckpt.trainer);
    std::ifstream a(path, std::ios::binary), b(scratch, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    fs::remove(scratch);
    if (sa != sb) {
        throw CorruptCheckpointError("checkpoint does not round-trip byte-identically: " + path);
    }
    std::printf("verify-checkpoint: %s\n  bytes: %zu\n  round-trip: byte-identical\n"
                "  probe logits: match\n  config: %s, step %d\n",
                path.c_str(), sa.size(), ckpt.model.cfg.name.c_str(), ckpt.trainer.step);
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args) {
    try {
        if (args.empty() || args[0] == "--help" || args[0] == "help") {
            std::fputs(kUsage, args.empty() ? stderr : stdout);
            return args.empty() ? 1 : 0;
        }
        const std::string sub = args[0];

        Settings settings;
        std::vector<std::string> rest;
        std::string config_path;
        // first pass: find --config so file values load before flag overrides
        for (size_t i = 1; i < args.size(); ++i) {
            if (args[i] == "--config") {
                if (i + 1 >= args.size()) {
                    throw UsageError("--config needs a file argument");
                }
                config_path = args[i + 1];
            }
        }
        if (!config_path.empty()) {
            std::ifstream f(config_path);
            if (!f) {
                throw DataError("cannot open config file: " + config_path);
            }
            std::stringstream ss;
            ss << f.rdbuf();
            for (const auto& [k, v] : serialize::parse_kv_text(ss.str())) {
                settings.set(k, v);
            }
        }
        for (size_t i = 1; i < args.size(); ++i) {
            const std::string& a = args[i];
            if (a == "--config") {
                ++i;
            } else if (a == "--deterministic") {
                settings.set("deterministic", "1");
            } else if (a.rfind("--", 0) == 0) {
                if (i + 1 >= args.size()) {
                    throw UsageError("flag " + a + " needs a value");
                }
                settings.set(a.substr(2), args[i + 1]);
                ++i;
            } else {
                rest.push_back(a);
            }
        }

        if (sub == "gen-data") {
            return cmd_gen_data(settings);
        }
        if (sub == "train-tokenizer") {
            return cmd_train_tokenizer(settings);
        }
        if (sub == "tokenize") {
            return cmd_tokenize(settings);
        }
        if (sub == "pack") {
            return cmd_pack(settings);
        }
        if (sub == "train") {
            return cmd_train(settings);
        }
        if (sub == "eval") {
            return cmd_eval(settings, rest);
        }
        if (sub == "prompt") {
            return cmd_prompt(settings);
        }
        if (sub == "stats") {
            return cmd_stats(settings);
        }
        if (sub == "scaling") {
            return cmd_scaling(settings);
        }
        if (sub == "ablation") {
            return cmd_ablation(settings);
        }
        if (sub == "verify-checkpoint") {
            return cmd_verify_checkpoint(settings, rest);
        }
        throw UsageError("unknown subcommand '" + sub + "'\n" + kUsage);
    } catch (const Error& e) {
        std::fprintf(stderr, "lvm: error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "lvm: error: %s\n", e.what());
        return 2;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return run(args);
}

} // namespace lvm::cli
