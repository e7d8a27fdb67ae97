#pragma once

#include <map>
#include <string>
#include <vector>

#include "lvm/forge.hpp"
#include "lvm/model.hpp"
#include "lvm/vq.hpp"

namespace lvm::eval {

enum class PromptMode { sequential, analogy };

std::string to_string(PromptMode m);
PromptMode prompt_mode_from_string(const std::string& s);

// One prompt per line: mode<TAB>path1,path2,...<TAB>n_predict
struct PromptSpec {
    PromptMode mode = PromptMode::sequential;
    std::vector<std::string> image_paths;
    int n_predict = 1;
};

std::string format_prompt_manifest(const std::vector<PromptSpec>& specs);
std::vector<PromptSpec> parse_prompt_manifest_text(const std::string& text);

struct EvalRecord {
    std::string task;
    std::string model_id;
    int context = 0;
    double value = 0.0;
    uint64_t seed = 0;
};

// CSV: task,model,context,value,seed
std::string format_records_csv(const std::vector<EvalRecord>& records);

// Tokenized prompt: optional BOS followed by the scan-line grids.
std::vector<int> prompt_tokens(const vq::Tokenizer& tok, const std::vector<Image>& images,
                               bool with_bos);

// Generates one image's worth of tokens (sampling restricted to image tokens)
// and decodes it.
Image generate_image(const lm::Model& m, const vq::Tokenizer& tok, std::vector<int>& prefix,
                     const lm::SamplerConfig& sampler);

// Frames -> next image(s): prompt is BOS + frames, prediction appends images.
std::vector<Image> sequential_prompt(const std::vector<Image>& frames, const lm::Model& m,
                                     const vq::Tokenizer& tok, const lm::SamplerConfig& sampler,
                                     int n_predict_images);

// (input, annotation) example pairs + query -> predicted annotation image.
Image analogy_prompt(const std::vector<forge::TaskPair>& pairs, const Image& query,
                     const lm::Model& m, const vq::Tokenizer& tok,
                     const lm::SamplerConfig& sampler);

// Perplexity of the ground-truth annotation after shot pairs + query.
double few_shot_perplexity(const std::vector<forge::TaskPair>& pairs, const Image& query,
                           const Image& gt_annotation, const lm::Model& m,
                           const vq::Tokenizer& tok);

struct SweepPoint {
    int context = 0;
    double mean_perplexity = 0.0;
};

// Mean perplexity of frame c+1 given the first c frames, per context length.
// Sweep prompts carry no BOS so the 15-frame point fits the context exactly.
std::vector<SweepPoint> context_sweep(const std::vector<std::vector<Image>>& videos,
                                      const lm::Model& m, const vq::Tokenizer& tok,
                                      const std::vector<int>& lengths);

// --- metrics -----------------------------------------------------------------

// Mean over classes present in gt of |intersection| / |union|.
double metric_miou(const std::vector<int>& pred_mask, const std::vector<int>& gt_mask,
                   int n_classes);

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
};

// Keypoint correct iff distance <= alpha * max(bbox_h, bbox_w); returns a
// percentage in [0, 100].
double metric_pck(const std::vector<Keypoint>& pred, const std::vector<Keypoint>& gt,
                  double bbox_w, double bbox_h, double alpha = 0.1);

double metric_mse(const Image& pred, const Image& gt);

// --- experiment drivers ---------------------------------------------------------

struct FewShotQuery {
    std::vector<forge::TaskPair> shots;
    Image query;
    Image gt;
};

// task name -> queries
using TaskQueries = std::map<std::string, std::vector<FewShotQuery>>;

double mean_task_perplexity(const std::vector<FewShotQuery>& queries, const lm::Model& m,
                            const vq::Tokenizer& tok);

struct ScalingResult {
    std::vector<std::string> config_names;
    std::vector<std::vector<lm::LossPoint>> curves;
    std::vector<std::map<std::string, double>> task_ppl; // aligned with configs
    std::vector<lm::Model> models;                       // final weights per config
};

// Trains every config on the identical window sequence (same seed) and
// evaluates few-shot perplexities on the supplied tasks.
ScalingResult scaling_experiment(const std::vector<pack::TokenStream>& windows,
                                 const std::vector<lm::ModelConfig>& configs,
                                 const OptimizerConfig& opt, int steps, int batch_windows,
                                 uint64_t seed, const vq::Tokenizer* tok,
                                 const TaskQueries* eval_tasks);

std::string format_scaling_csv(const ScalingResult& r);

enum class AblationSubset { single_only = 0, plus_video, plus_annotations, full };
std::string to_string(AblationSubset s);
bool subset_admits(AblationSubset s, forge::SentenceKind kind);

struct AblationResult {
    std::vector<AblationSubset> subsets;
    std::vector<int> window_budget;                      // identical across subsets
    std::vector<std::map<std::string, double>> task_ppl; // aligned with subsets
};

// Equal token budgets: every subset is packed, then truncated to the smallest
// subset's window count.
AblationResult ablation_experiment(const std::vector<forge::VisualSentence>& corpus,
                                   const vq::Tokenizer& tok,
                                   const std::vector<AblationSubset>& subsets,
                                   const lm::ModelConfig& cfg, const OptimizerConfig& opt,
                                   int steps, int batch_windows, uint64_t seed,
                                   const TaskQueries& eval_tasks);

std::string format_ablation_csv(const AblationResult& r);

} // namespace lvm::eval
