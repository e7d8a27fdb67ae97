#include "lvm/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "lvm/errors.hpp"

namespace lvm::eval {

std::string to_string(PromptMode m) {
    return m == PromptMode::sequential ? "sequential" : "analogy";
}

PromptMode prompt_mode_from_string(const std::string& s) {
    if (s == "sequential") {
        return PromptMode::sequential;
    }
    if (s == "analogy") {
        return PromptMode::analogy;
    }
    throw ParseError("unknown prompt mode '" + s + "'");
}

std::string format_prompt_manifest(const std::vector<PromptSpec>& specs) {
    std::string out;
    for (const auto& s : specs) {
        out += to_string(s.mode);
        out += '\t';
        for (size_t i = 0; i < s.image_paths.size(); ++i) {
            out += s.image_paths[i];
            if (i + 1 < s.image_paths.size()) {
                out += ',';
            }
        }
        out += '\t';
        out += std::to_string(s.n_predict);
        out += '\n';
    }
    return out;
}

std::vector<PromptSpec> parse_prompt_manifest_text(const std::string& text) {
    std::vector<PromptSpec> out;
    size_t pos = 0;
    int lineno = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) {
            end = text.size();
        }
        const std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        ++lineno;
        if (line.empty()) {
            continue;
        }
        const size_t t1 = line.find('\t');
        const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) {
            throw ParseError("prompt manifest line " + std::to_string(lineno) +
                             ": want mode<TAB>paths<TAB>n_predict");
        }
        PromptSpec spec;
        spec.mode = prompt_mode_from_string(line.substr(0, t1));
        const std::string paths = line.substr(t1 + 1, t2 - t1 - 1);
        size_t start = 0;
        while (start <= paths.size() && !paths.empty()) {
            const size_t comma = paths.find(',', start);
            const std::string item =
                paths.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            if (item.empty()) {
                throw ParseError("prompt manifest line " + std::to_string(lineno) +
                                 ": empty image path");
            }
            spec.image_paths.push_back(item);
            if (comma == std::string::npos) {
                break;
            }
            start = comma + 1;
        }
        try {
            spec.n_predict = std::stoi(line.substr(t2 + 1));
        } catch (const std::exception&) {
            throw ParseError("prompt manifest line " + std::to_string(lineno) +
                             ": bad n_predict");
        }
        if (spec.n_predict < 1) {
            throw ParseError("prompt manifest line " + std::to_string(lineno) +
                             ": n_predict must be >= 1");
        }
        out.push_back(std::move(spec));
    }
    return out;
}

std::string format_records_csv(const std::vector<EvalRecord>& records) {
    std::string out = "task,model,context,value,seed\n";
    char buf[256];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%s,%s,%d,%.8f,%llu\n", r.task.c_str(), r.model_id.c_str(),
                      r.context, r.value, static_cast<unsigned long long>(r.seed));
        out += buf;
    }
    return out;
}

std::vector<int> prompt_tokens(const vq::Tokenizer& tok, const std::vector<Image>& images,
                               bool with_bos) {
    const pack::VocabularyLayout vocab{tok.cfg.codebook_size};
    std::vector<int> out;
    if (with_bos) {
        out.push_back(vocab.bos());
    }
    for (const auto& img : images) {
        for (uint16_t id : vq::encode(tok, img).indices) {
            out.push_back(id);
        }
    }
    return out;
}

Image generate_image(const lm::Model& m, const vq::Tokenizer& tok, std::vector<int>& prefix,
                     const lm::SamplerConfig& sampler) {
    lm::SamplerConfig restricted = sampler;
    restricted.vocab_limit = restricted.vocab_limit
                                 ? std::min(*restricted.vocab_limit, tok.cfg.codebook_size)
                                 : tok.cfg.codebook_size;
    const int tpi = tok.cfg.tokens_per_image();
    const std::vector<int> ids = lm::generate(m, prefix, tpi, restricted);
    vq::TokenGrid grid;
    grid.h = tok.cfg.grid_size();
    grid.w = tok.cfg.grid_size();
    for (int id : ids) {
        grid.indices.push_back(static_cast<uint16_t>(id));
    }
    prefix.insert(prefix.end(), ids.begin(), ids.end());
    return vq::decode(tok, grid);
}

std::vector<Image> sequential_prompt(const std::vector<Image>& frames, const lm::Model& m,
                                     const vq::Tokenizer& tok, const lm::SamplerConfig& sampler,
                                     int n_predict_images) {
    if (frames.empty() || n_predict_images < 1) {
        throw FormatError("sequential_prompt: need at least one frame and one prediction");
    }
    const int tpi = tok.cfg.tokens_per_image();
    const int total = 1 + static_cast<int>(frames.size() + n_predict_images) * tpi;
    if (total > m.cfg.context_len) {
        throw LengthError("sequential_prompt: prompt + prediction needs " + std::to_string(total) +
                          " tokens, context is " + std::to_string(m.cfg.context_len));
    }
    std::vector<int> prefix = prompt_tokens(tok, frames, /*with_bos=*/true);
    std::vector<Image> out;
    for (int i = 0; i < n_predict_images; ++i) {
        out.push_back(generate_image(m, tok, prefix, sampler));
    }
    return out;
}

Image analogy_prompt(const std::vector<forge::TaskPair>& pairs, const Image& query,
                     const lm::Model& m, const vq::Tokenizer& tok,
                     const lm::SamplerConfig& sampler) {
    if (pairs.empty()) {
        throw FormatError("analogy_prompt: need at least one example pair");
    }
    for (const auto& p : pairs) {
        if (p.kind != pairs[0].kind) {
            throw FormatError("analogy_prompt: example pairs mix annotation kinds: " +
                              forge::to_string(pairs[0].kind) + " vs " + forge::to_string(p.kind));
        }
    }
    const int tpi = tok.cfg.tokens_per_image();
    const int total = 1 + static_cast<int>(2 * pairs.size() + 2) * tpi;
    if (total > m.cfg.context_len) {
        throw LengthError("analogy_prompt: prompt + prediction needs " + std::to_string(total) +
                          " tokens, context is " + std::to_string(m.cfg.context_len));
    }
    std::vector<Image> ctx;
    for (const auto& p : pairs) {
        ctx.push_back(p.input);
        ctx.push_back(p.target);
    }
    ctx.push_back(query);
    std::vector<int> prefix = prompt_tokens(tok, ctx, /*with_bos=*/true);
    return generate_image(m, tok, prefix, sampler);
}

double few_shot_perplexity(const std::vector<forge::TaskPair>& pairs, const Image& query,
                           const Image& gt_annotation, const lm::Model& m,
                           const vq::Tokenizer& tok) {
    for (const auto& p : pairs) {
        if (p.kind != pairs[0].kind) {
            throw FormatError("few_shot_perplexity: example pairs mix annotation kinds");
        }
    }
    std::vector<Image> ctx;
    for (const auto& p : pairs) {
        ctx.push_back(p.input);
        ctx.push_back(p.target);
    }
    ctx.push_back(query);
    const std::vector<int> prefix = prompt_tokens(tok, ctx, /*with_bos=*/true);
    const std::vector<int> target = prompt_tokens(tok, {gt_annotation}, /*with_bos=*/false);
    if (static_cast<int>(prefix.size() + target.size()) > m.cfg.context_len) {
        throw LengthError("few_shot_perplexity: prompt exceeds model context");
    }
    return lm::sequence_nll(m, prefix, target).perplexity;
}

std::vector<SweepPoint> context_sweep(const std::vector<std::vector<Image>>& videos,
                                      const lm::Model& m, const vq::Tokenizer& tok,
                                      const std::vector<int>& lengths) {
    if (videos.empty() || lengths.empty()) {
        throw InsufficientDataError("context_sweep: need videos and lengths");
    }
    int max_len = 0;
    for (int c : lengths) {
        if (c < 1) {
            throw ConfigError("context_sweep: context lengths must be >= 1");
        }
        max_len = std::max(max_len, c);
    }
    for (const auto& v : videos) {
        if (static_cast<int>(v.size()) < max_len + 1) {
            throw InsufficientFramesError("context_sweep: video with " +
                                          std::to_string(v.size()) + " frames cannot serve " +
                                          std::to_string(max_len + 1) + " frames");
        }
    }
    std::vector<SweepPoint> out;
    for (int c : lengths) {
        double acc = 0.0;
        for (const auto& v : videos) {
            std::vector<Image> ctx(v.begin(), v.begin() + c);
            const std::vector<int> prefix = prompt_tokens(tok, ctx, /*with_bos=*/false);
            const std::vector<int> target =
                prompt_tokens(tok, {v[static_cast<size_t>(c)]}, /*with_bos=*/false);
            acc += lm::sequence_nll(m, prefix, target).perplexity;
        }
        out.push_back({c, acc / static_cast<double>(videos.size())});
    }
    return out;
}

double metric_miou(const std::vector<int>& pred_mask, const std::vector<int>& gt_mask,
                   int n_classes) {
    if (pred_mask.size() != gt_mask.size()) {
        throw DimensionError("metric_miou: mask sizes differ: " + std::to_string(pred_mask.size()) +
                             " vs " + std::to_string(gt_mask.size()));
    }
    if (n_classes < 1) {
        throw ConfigError("metric_miou: n_classes must be >= 1");
    }
    for (size_t i = 0; i < pred_mask.size(); ++i) {
        if (pred_mask[i] < 0 || pred_mask[i] >= n_classes || gt_mask[i] < 0 ||
            gt_mask[i] >= n_classes) {
            throw DimensionError("metric_miou: class id outside [0, n_classes)");
        }
    }
    std::vector<int64_t> inter(static_cast<size_t>(n_classes), 0);
    std::vector<int64_t> uni(static_cast<size_t>(n_classes), 0);
    std::vector<int64_t> gt_count(static_cast<size_t>(n_classes), 0);
    for (size_t i = 0; i < pred_mask.size(); ++i) {
        const int p = pred_mask[i], g = gt_mask[i];
        gt_count[static_cast<size_t>(g)] += 1;
        if (p == g) {
            inter[static_cast<size_t>(p)] += 1;
            uni[static_cast<size_t>(p)] += 1;
        } else {
            uni[static_cast<size_t>(p)] += 1;
            uni[static_cast<size_t>(g)] += 1;
        }
    }
    double acc = 0.0;
    int present = 0;
    for (int c = 0; c < n_classes; ++c) {
        if (gt_count[static_cast<size_t>(c)] > 0) {
            ++present;
            acc += static_cast<double>(inter[static_cast<size_t>(c)]) /
                   static_cast<double>(uni[static_cast<size_t>(c)]);
        }
    }
    return present == 0 ? 0.0 : acc / present;
}

double metric_pck(const std::vector<Keypoint>& pred, const std::vector<Keypoint>& gt,
                  double bbox_w, double bbox_h, double alpha) {
    if (pred.size() != gt.size()) {
        throw DimensionError("metric_pck: keypoint counts differ: " + std::to_string(pred.size()) +
                             " vs " + std::to_string(gt.size()));
    }
    if (pred.empty()) {
        throw DimensionError("metric_pck: no keypoints");
    }
    if (bbox_w <= 0.0 || bbox_h <= 0.0) {
        throw DimensionError("metric_pck: bounding box must be nonempty");
    }
    const double thresh = alpha * std::max(bbox_w, bbox_h);
    int correct = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double dx = pred[i].x - gt[i].x;
        const double dy = pred[i].y - gt[i].y;
        if (std::sqrt(dx * dx + dy * dy) <= thresh) {
            ++correct;
        }
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(pred.size());
}

double metric_mse(const Image& pred, const Image& gt) {
    return image_mse(pred, gt);
}

double mean_task_perplexity(const std::vector<FewShotQuery>& queries, const lm::Model& m,
                            const vq::Tokenizer& tok) {
    if (queries.empty()) {
        throw InsufficientDataError("mean_task_perplexity: no queries");
    }
    double acc = 0.0;
    for (const auto& q : queries) {
        acc += few_shot_perplexity(q.shots, q.query, q.gt, m, tok);
    }
    return acc / static_cast<double>(queries.size());
}

ScalingResult scaling_experiment(const std::vector<pack::TokenStream>& windows,
                                 const std::vector<lm::ModelConfig>& configs,
                                 const OptimizerConfig& opt, int steps, int batch_windows,
                                 uint64_t seed, const vq::Tokenizer* tok,
                                 const TaskQueries* eval_tasks) {
    if (configs.size() < 2) {
        throw ConfigError("scaling_experiment: need at least 2 configs");
    }
    ScalingResult res;
    for (const auto& cfg : configs) {
        lm::Model model = lm::make_model(cfg, seed);
        lm::TrainerState st = lm::make_trainer_state(model);
        lm::TrainConfig tc;
        tc.steps = steps;
        tc.batch_windows = batch_windows;
        tc.seed = seed; // identical data order across configs
        lm::TrainResult tr = lm::train(model, windows, opt, tc, st);
        if (tr.aborted) {
            throw TrainingError("scaling_experiment: " + cfg.name + ": " + tr.abort_reason);
        }
        res.config_names.push_back(cfg.name);
        res.curves.push_back(std::move(tr.curve));
        std::map<std::string, double> ppl;
        if (tok != nullptr && eval_tasks != nullptr) {
            for (const auto& [task, queries] : *eval_tasks) {
                ppl[task] = mean_task_perplexity(queries, model, *tok);
            }
        }
        res.task_ppl.push_back(std::move(ppl));
        res.models.push_back(std::move(model));
    }
    return res;
}

std::string format_scaling_csv(const ScalingResult& r) {
    std::string out = "config,step,loss,lr\n";
    char buf[160];
    for (size_t c = 0; c < r.config_names.size(); ++c) {
        for (const auto& p : r.curves[c]) {
            std::snprintf(buf, sizeof buf, "%s,%d,%.8f,%.10g\n", r.config_names[c].c_str(), p.step,
                          p.loss, p.lr);
            out += buf;
        }
    }
    out += "config,task,perplexity\n";
    for (size_t c = 0; c < r.config_names.size(); ++c) {
        for (const auto& [task, ppl] : r.task_ppl[c]) {
            std::snprintf(buf, sizeof buf, "%s,%s,%.8f\n", r.config_names[c].c_str(), task.c_str(),
                          ppl);
            out += buf;
        }
    }
    return out;
}

std::string to_string(AblationSubset s) {
    switch (s) {
        case AblationSubset::single_only: return "single_only";
        case AblationSubset::plus_video: return "plus_video";
        case AblationSubset::plus_annotations: return "plus_annotations";
        case AblationSubset::full: return "full";
    }
    return "?";
}

bool subset_admits(AblationSubset s, forge::SentenceKind kind) {
    using forge::SentenceKind;
    switch (s) {
        case AblationSubset::single_only: return kind == SentenceKind::single;
        case AblationSubset::plus_video:
            return kind == SentenceKind::single || kind == SentenceKind::video ||
                   kind == SentenceKind::multiview;
        case AblationSubset::plus_annotations:
            return kind == SentenceKind::single || kind == SentenceKind::pair ||
                   kind == SentenceKind::multi_annot;
        case AblationSubset::full: return true;
    }
    return false;
}

AblationResult ablation_experiment(const std::vector<forge::VisualSentence>& corpus,
                                   const vq::Tokenizer& tok,
                                   const std::vector<AblationSubset>& subsets,
                                   const lm::ModelConfig& cfg, const OptimizerConfig& opt,
                                   int steps, int batch_windows, uint64_t seed,
                                   const TaskQueries& eval_tasks) {
    if (subsets.empty()) {
        throw ConfigError("ablation_experiment: no subsets");
    }
    // tokenize once, reuse across subsets
    std::vector<pack::TokenStream> streams;
    std::vector<forge::SentenceKind> kinds;
    for (const auto& s : corpus) {
        streams.push_back(pack::sentence_to_tokens(s, tok));
        kinds.push_back(s.kind);
    }

    std::vector<std::vector<pack::TokenStream>> packed;
    size_t min_windows = SIZE_MAX;
    for (AblationSubset s : subsets) {
        std::vector<pack::TokenStream> subset;
        for (size_t i = 0; i < streams.size(); ++i) {
            if (subset_admits(s, kinds[i])) {
                subset.push_back(streams[i]);
            }
        }
        if (subset.empty()) {
            throw InsufficientDataError("ablation_experiment: subset " + to_string(s) +
                                        " is empty");
        }
        auto windows = pack::pack_windows(subset, cfg.context_len, seed);
        min_windows = std::min(min_windows, windows.size());
        packed.push_back(std::move(windows));
    }
    if (min_windows == 0) {
        throw InsufficientDataError("ablation_experiment: a subset packs to zero windows");
    }

    AblationResult res;
    res.subsets = subsets;
    for (auto& windows : packed) {
        windows.resize(min_windows); // equal token budget across subsets
        res.window_budget.push_back(static_cast<int>(min_windows));

        lm::Model model = lm::make_model(cfg, seed);
        lm::TrainerState st = lm::make_trainer_state(model);
        lm::TrainConfig tc;
        tc.steps = steps;
        tc.batch_windows = batch_windows;
        tc.seed = seed;
        lm::TrainResult tr = lm::train(model, windows, opt, tc, st);
        if (tr.aborted) {
            throw TrainingError("ablation_experiment: " + tr.abort_reason);
        }
        std::map<std::string, double> ppl;
        for (const auto& [task, queries] : eval_tasks) {
            ppl[task] = mean_task_perplexity(queries, model, tok);
        }
        res.task_ppl.push_back(std::move(ppl));
    }
    return res;
}

std::string format_ablation_csv(const AblationResult& r) {
    std::string out = "subset,windows,task,perplexity\n";
    char buf[160];
    for (size_t i = 0; i < r.subsets.size(); ++i) {
        for (const auto& [task, ppl] : r.task_ppl[i]) {
            std::snprintf(buf, sizeof buf, "%s,%d,%s,%.8f\n", to_string(r.subsets[i]).c_str(),
                          r.window_budget[i], task.c_str(), ppl);
            out += buf;
        }
    }
    return out;
}

} // namespace lvm::eval
