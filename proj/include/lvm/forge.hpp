#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lvm/image.hpp"
#include "lvm/rng.hpp"

namespace lvm::forge {

enum class ShapeKind { circle = 0, square = 1, triangle = 2 };
constexpr int kNumShapeKinds = 3;

// Palette chosen so every color has a clearly distinct luma; a grayscale
// version of a shape still identifies its color.
constexpr int kNumColors = 6;
constexpr std::array<std::array<uint8_t, 3>, kNumColors> kPalette = {{
    {170, 30, 40},  // crimson
    {50, 110, 235}, // blue
    {60, 200, 70},  // green
    {240, 150, 40}, // orange
    {90, 230, 210}, // cyan
    {250, 230, 90}, // yellow
}};

constexpr int kNumClasses = kNumShapeKinds * kNumColors;

struct Scene {
    ShapeKind shape_kind = ShapeKind::circle;
    int palette_index = 0;
    std::array<uint8_t, 3> color{};
    double cx = 0.5; // center, normalized [0,1]^2
    double cy = 0.5;
    double scale = 0.25; // circumradius in normalized units
    double orientation_deg = 0.0;
    double shear = 0.0; // horizontal shear (multiview elevation analog)
    int class_id = 0;
    std::vector<std::array<double, 2>> keypoints; // normalized, on the outline

    // background texture parameters (shared by all frames of a video)
    int bg_base = 170;
    double bg_amp = 10.0;
    double bg_ax = 1.0;
    double bg_ay = 1.0;
    double bg_phase = 0.0;
};

enum class SentenceKind {
    single = 0,
    video,
    multiview,
    category,
    pair,
    multi_annot,
    video_annot_interleaved,
    video_annot_grouped,
};

std::string to_string(SentenceKind k);
SentenceKind sentence_kind_from_string(const std::string& s);

enum class AnnotationKind {
    segmentation_mask = 0,
    edge_map,
    grayscale_input,
    inpainting_corrupted,
    keypoint_rendering,
};
constexpr int kNumAnnotationKinds = 5;

std::string to_string(AnnotationKind k);
AnnotationKind annotation_kind_from_string(const std::string& s);

struct VisualSentence {
    std::vector<Image> images;
    SentenceKind kind = SentenceKind::single;
    // Optional provenance for exact annotation round-trips.
    std::vector<Scene> scenes;
    std::vector<uint64_t> annot_seeds;
    AnnotationKind annot_kind = AnnotationKind::segmentation_mask;
    bool has_annot = false;
};

constexpr int kMaxSentenceLen = 16;

struct MultiAnnotationRule {
    int k = kNumAnnotationKinds; // annotation kinds available
    // sampled tuple length m satisfies 1 <= m <= k+1 <= 16
};

// --- scene generation ---------------------------------------------------

bool point_in_shape(const Scene& s, double u, double v);
Image render_scene(const Scene& s, int size);
Scene make_scene(uint64_t seed, int size);

// (image, scene) as a pure function of the seed.
std::pair<Image, Scene> gen_scene(uint64_t seed, int size = 32);

// Bouncing cell-aligned motion; background stays fixed across frames.
struct Video {
    std::vector<Image> frames;
    std::vector<Scene> scenes;
};
Video gen_video(uint64_t seed, int n_frames, int size = 32);

Image derive_annotation(const Scene& scene, const Image& img, AnnotationKind kind, uint64_t seed);

// Task direction per kind: grayscale/inpainting present the derived image as
// the input and the original as the completion; the rest annotate the input.
struct TaskPair {
    Image input;
    Image target;
    AnnotationKind kind = AnnotationKind::segmentation_mask;
    Scene scene;
    uint64_t annot_seed = 0;
};
TaskPair make_task_pair(const Scene& scene, const Image& img, AnnotationKind kind, uint64_t seed);

// --- sentence builders ---------------------------------------------------

constexpr std::array<int, 3> kDefaultStrideSchedule = {10, 20, 30};

VisualSentence build_video_sentence(const std::vector<Image>& video, int stride, int length,
                                    uint64_t start_seed);

struct MultiviewParams {
    double azimuth_step_deg = 15.0;
    int n_views = 24;
    double elevation_min_deg = -45.0;
    double elevation_max_deg = 45.0;
    double radius_min = 1.5;
    double radius_max = 2.2;
};
std::vector<VisualSentence> build_multiview_sentence(const Scene& scene, const MultiviewParams& p,
                                                     uint64_t seed, int size);

VisualSentence build_category_sentence(const std::map<int, std::vector<Image>>& pool,
                                       int group_size, uint64_t seed);

VisualSentence build_pair_sentence(const std::vector<TaskPair>& pairs);

VisualSentence build_multi_annotation_sentence(
    const std::vector<std::pair<Image, Scene>>& scene_pool,
    const std::vector<AnnotationKind>& kinds, const MultiAnnotationRule& rule, uint64_t seed);

enum class VideoAnnotMode { interleaved, grouped };
VisualSentence build_video_annot_sentence(const std::vector<Image>& frames,
                                          const std::vector<Image>& annots, VideoAnnotMode mode);

// --- corpus driver --------------------------------------------------------

struct CorpusSpec {
    uint64_t seed = 0;
    int image_size = 32;
    int n_single = 0;
    int n_video = 0;
    int n_multiview_orbits = 0; // each orbit yields two 12-view sentences
    int n_category = 0;
    int n_pair_segmentation = 0;
    int n_pair_edge = 0;
    int n_pair_grayscale = 0;
    int n_pair_inpainting = 0;
    int n_pair_keypoints = 0;
    int n_multi_annot = 0;
    int n_video_annot = 0;
    std::vector<int> video_strides = {1, 2, 4}; // desk default; schedule is configurable
    int video_length_frames = 64;
};

std::vector<VisualSentence> build_corpus(const CorpusSpec& spec);

// --- manifests -------------------------------------------------------------

struct ManifestEntry {
    SentenceKind kind;
    std::vector<std::string> paths;
};

// One sentence per line: kind<TAB>path1,path2,...
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> parse_manifest(const std::string& path);

// Writes every image of every sentence under dir and a manifest next to them.
std::vector<ManifestEntry> write_sentence_corpus(const std::string& dir,
                                                 const std::string& manifest_name,
                                                 const std::vector<VisualSentence>& sentences);

} // namespace lvm::forge
