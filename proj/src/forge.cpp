#include "lvm/forge.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "lvm/errors.hpp"

namespace lvm::forge {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSqrtHalf = 0.70710678118654752440;

// Motion lattice: one desk token cell (image_size / 8).
constexpr int kMotionCells = 8;

struct Vec2 {
    double x, y;
};

Vec2 to_canonical(const Scene& s, double u, double v) {
    const double px = u - s.cx;
    const double py = v - s.cy;
    const double ux = px - s.shear * py; // unshear
    const double th = s.orientation_deg * kPi / 180.0;
    const double c = std::cos(th), sn = std::sin(th);
    const double rx = ux * c + py * sn; // rotate by -theta
    const double ry = -ux * sn + py * c;
    return {rx / s.scale, ry / s.scale};
}

Vec2 from_canonical(const Scene& s, double qx, double qy) {
    const double th = s.orientation_deg * kPi / 180.0;
    const double c = std::cos(th), sn = std::sin(th);
    double x = s.scale * qx, y = s.scale * qy;
    const double rx = x * c - y * sn;
    const double ry = x * sn + y * c;
    const double sx = rx + s.shear * ry;
    return {sx + s.cx, ry + s.cy};
}

double cross(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

bool in_triangle(double qx, double qy) {
    static const double vx[3] = {0.0, -0.86602540378443865, 0.86602540378443865};
    static const double vy[3] = {1.0, -0.5, -0.5};
    double sgn[3];
    for (int i = 0; i < 3; ++i) {
        const int j = (i + 1) % 3;
        sgn[i] = cross(vx[j] - vx[i], vy[j] - vy[i], qx - vx[i], qy - vy[i]);
    }
    const bool pos = sgn[0] >= 0 && sgn[1] >= 0 && sgn[2] >= 0;
    const bool neg = sgn[0] <= 0 && sgn[1] <= 0 && sgn[2] <= 0;
    return pos || neg;
}

// Texture is periodic with the token cell (4 px), so every background cell of
// an image carries the same patch; the patch vocabulary stays discrete.
uint8_t bg_value(const Scene& s, int px, int py) {
    const double g = s.bg_base + s.bg_amp * std::sin(2.0 * kPi * (s.bg_ax * px + s.bg_ay * py) /
                                                         4.0 +
                                                     s.bg_phase);
    int iv = static_cast<int>(g + 0.5);
    iv = std::clamp(iv, 0, 255);
    return static_cast<uint8_t>(iv);
}

std::vector<std::array<double, 2>> canonical_keypoints(ShapeKind kind) {
    std::vector<std::array<double, 2>> pts;
    switch (kind) {
        case ShapeKind::circle:
            for (int i = 0; i < 8; ++i) {
                const double a = i * kPi / 4.0;
                pts.push_back({std::cos(a), std::sin(a)});
            }
            break;
        case ShapeKind::square: {
            const double s = kSqrtHalf;
            pts = {{s, s}, {s, -s}, {-s, -s}, {-s, s}, {s, 0}, {0, -s}, {-s, 0}, {0, s}};
            break;
        }
        case ShapeKind::triangle: {
            const double ang[3] = {90.0, 210.0, 330.0};
            for (double a : ang) {
                pts.push_back({std::cos(a * kPi / 180.0), std::sin(a * kPi / 180.0)});
            }
            for (int i = 0; i < 3; ++i) {
                const int j = (i + 1) % 3;
                pts.push_back({(pts[i][0] + pts[j][0]) / 2.0, (pts[i][1] + pts[j][1]) / 2.0});
            }
            break;
        }
    }
    return pts;
}

void refresh_keypoints(Scene& s) {
    s.keypoints.clear();
    for (const auto& q : canonical_keypoints(s.shape_kind)) {
        const Vec2 p = from_canonical(s, q[0], q[1]);
        s.keypoints.push_back({p.x, p.y});
    }
}

std::vector<uint8_t> shape_mask(const Scene& s, int size) {
    std::vector<uint8_t> m(static_cast<size_t>(size) * size, 0);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double u = (x + 0.5) / size;
            const double v = (y + 0.5) / size;
            m[static_cast<size_t>(y) * size + x] = point_in_shape(s, u, v) ? 1 : 0;
        }
    }
    return m;
}

// Segmentation colors are keyed by shape kind, not by the drawn color.
const std::array<std::array<uint8_t, 3>, kNumShapeKinds> kSegColors = {{
    kPalette[0],
    kPalette[2],
    kPalette[1],
}};

} // namespace

std::string to_string(SentenceKind k) {
    switch (k) {
        case SentenceKind::single: return "single";
        case SentenceKind::video: return "video";
        case SentenceKind::multiview: return "multiview";
        case SentenceKind::category: return "category";
        case SentenceKind::pair: return "pair";
        case SentenceKind::multi_annot: return "multi_annot";
        case SentenceKind::video_annot_interleaved: return "video_annot_interleaved";
        case SentenceKind::video_annot_grouped: return "video_annot_grouped";
    }
    return "?";
}

SentenceKind sentence_kind_from_string(const std::string& s) {
    for (int i = 0; i <= static_cast<int>(SentenceKind::video_annot_grouped); ++i) {
        if (s == to_string(static_cast<SentenceKind>(i))) {
            return static_cast<SentenceKind>(i);
        }
    }
    throw ParseError("unknown sentence kind '" + s + "'");
}

std::string to_string(AnnotationKind k) {
    switch (k) {
        case AnnotationKind::segmentation_mask: return "segmentation_mask";
        case AnnotationKind::edge_map: return "edge_map";
        case AnnotationKind::grayscale_input: return "grayscale_input";
        case AnnotationKind::inpainting_corrupted: return "inpainting_corrupted";
        case AnnotationKind::keypoint_rendering: return "keypoint_rendering";
    }
    return "?";
}

AnnotationKind annotation_kind_from_string(const std::string& s) {
    for (int i = 0; i < kNumAnnotationKinds; ++i) {
        if (s == to_string(static_cast<AnnotationKind>(i))) {
            return static_cast<AnnotationKind>(i);
        }
    }
    throw ParseError("unknown annotation kind '" + s + "'");
}

bool point_in_shape(const Scene& s, double u, double v) {
    const Vec2 q = to_canonical(s, u, v);
    switch (s.shape_kind) {
        case ShapeKind::circle: return q.x * q.x + q.y * q.y <= 1.0;
        case ShapeKind::square: return std::max(std::fabs(q.x), std::fabs(q.y)) <= kSqrtHalf;
        case ShapeKind::triangle: return in_triangle(q.x, q.y);
    }
    return false;
}

Image render_scene(const Scene& s, int size) {
    Image img(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double u = (x + 0.5) / size;
            const double v = (y + 0.5) / size;
            if (point_in_shape(s, u, v)) {
                img.set(x, y, s.color);
            } else {
                const uint8_t g = bg_value(s, x, y);
                img.set(x, y, {g, g, g});
            }
        }
    }
    return img;
}

// Attributes are drawn from lattices (scales, right-angle orientations, token
// cell positions, quarter-period texture phases) so the 4x4 patch vocabulary
// of the rendered corpus is discrete; the tokenizer codebook gets clean,
// well-separated clusters to claim.
Scene make_scene(uint64_t seed, int size) {
    Rng rng(seed);
    Scene s;
    s.shape_kind = static_cast<ShapeKind>(rng.next_below(kNumShapeKinds));
    s.palette_index = static_cast<int>(rng.next_below(kNumColors));
    s.color = kPalette[s.palette_index];
    s.class_id = static_cast<int>(s.shape_kind) * kNumColors + s.palette_index;
    s.scale = rng.next_below(2) ? 0.28 : 0.20;
    s.orientation_deg = rng.next_below(2) ? 90.0 : 0.0;
    const double margin = s.scale + 2.0 / size;
    const double cell = 1.0 / 8.0;
    const int lo = static_cast<int>(std::ceil(margin / cell));
    const int hi = static_cast<int>(std::floor((1.0 - margin) / cell));
    s.cx = cell * rng.next_int(lo, hi);
    s.cy = cell * rng.next_int(lo, hi);
    s.bg_base = 170;
    s.bg_amp = 10.0;
    if (rng.next_below(2)) {
        s.bg_ax = 1.0;
        s.bg_ay = 0.0;
    } else {
        s.bg_ax = 0.0;
        s.bg_ay = 1.0;
    }
    s.bg_phase = rng.next_below(2) ? 0.0 : kPi;
    refresh_keypoints(s);
    return s;
}

std::pair<Image, Scene> gen_scene(uint64_t seed, int size) {
    const Scene s = make_scene(seed, size);
    return {render_scene(s, size), s};
}

Video gen_video(uint64_t seed, int n_frames, int size) {
    Rng rng(seed ^ Rng::hash_name("video"));
    Scene base = make_scene(rng.next_u64(), size);
    base.scale = rng.next_below(2) ? 0.16 : 0.20;
    refresh_keypoints(base);
    const double step = 1.0 / kMotionCells;
    const double margin = base.scale + 2.0 / size;

    // Center starts on the cell lattice; bounce bounds sit on the same step
    // lattice so reflected positions stay cell-aligned.
    const int lo = static_cast<int>(std::ceil(margin / step));
    const int hi = static_cast<int>(std::floor((1.0 - margin) / step));
    const double cx0 = step * rng.next_int(lo, hi);
    const double cy0 = step * rng.next_int(lo, hi);
    const int room_left = static_cast<int>(std::floor((cx0 - margin) / step));
    const int room_right = static_cast<int>(std::floor((1.0 - margin - cx0) / step));
    const int room_up = static_cast<int>(std::floor((cy0 - margin) / step));
    const int room_down = static_cast<int>(std::floor((1.0 - margin - cy0) / step));

    const uint64_t mode = rng.next_below(4); // 0: static, 1-2: horizontal, 3: vertical
    int vx = 0, vy = 0;
    if (mode == 1 || mode == 2) {
        vx = rng.next_below(2) ? 1 : -1;
    } else if (mode == 3) {
        vy = rng.next_below(2) ? 1 : -1;
    }

    Video out;
    out.frames.reserve(n_frames);
    double cx = cx0, cy = cy0;
    int dx = 0, dy = 0; // offsets in steps
    for (int t = 0; t < n_frames; ++t) {
        Scene s = base;
        s.cx = cx;
        s.cy = cy;
        refresh_keypoints(s);
        out.frames.push_back(render_scene(s, size));
        out.scenes.push_back(s);
        if (vx != 0) {
            if ((vx > 0 && dx >= room_right) || (vx < 0 && dx <= -room_left)) {
                vx = -vx;
            }
            dx += vx;
            cx = cx0 + dx * step;
        }
        if (vy != 0) {
            if ((vy > 0 && dy >= room_down) || (vy < 0 && dy <= -room_up)) {
                vy = -vy;
            }
            dy += vy;
            cy = cy0 + dy * step;
        }
    }
    return out;
}

Image derive_annotation(const Scene& scene, const Image& img, AnnotationKind kind, uint64_t seed) {
    const int size = img.width;
    switch (kind) {
        case AnnotationKind::segmentation_mask: {
            Image out(size, size);
            const auto& color = kSegColors[static_cast<int>(scene.shape_kind)];
            const auto mask = shape_mask(scene, size);
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    if (mask[static_cast<size_t>(y) * size + x]) {
                        out.set(x, y, color);
                    }
                }
            }
            return out;
        }
        case AnnotationKind::edge_map: {
            Image out(size, size);
            const auto mask = shape_mask(scene, size);
            auto at = [&](int x, int y) -> uint8_t {
                if (x < 0 || y < 0 || x >= size || y >= size) {
                    return 0;
                }
                return mask[static_cast<size_t>(y) * size + x];
            };
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    if (at(x, y) && (!at(x - 1, y) || !at(x + 1, y) || !at(x, y - 1) ||
                                     !at(x, y + 1))) {
                        out.set(x, y, {255, 255, 255});
                    }
                }
            }
            return out;
        }
        case AnnotationKind::grayscale_input: {
            Image out(size, size);
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    const uint8_t* p = img.at(x, y);
                    const uint8_t g = luma_byte(p[0], p[1], p[2]);
                    out.set(x, y, {g, g, g});
                }
            }
            return out;
        }
        case AnnotationKind::inpainting_corrupted: {
            Image out = img;
            Rng rng(seed ^ Rng::hash_name("inpaint"));
            const int boxes = 1 + static_cast<int>(rng.next_below(3));
            for (int b = 0; b < boxes; ++b) {
                const int bw = size / 8 + static_cast<int>(rng.next_below(size / 3 - size / 8 + 1));
                const int bh = size / 8 + static_cast<int>(rng.next_below(size / 3 - size / 8 + 1));
                const int x0 = static_cast<int>(rng.next_below(size - bw + 1));
                const int y0 = static_cast<int>(rng.next_below(size - bh + 1));
                for (int y = y0; y < y0 + bh; ++y) {
                    for (int x = x0; x < x0 + bw; ++x) {
                        out.set(x, y, {0, 0, 0});
                    }
                }
            }
            return out;
        }
        case AnnotationKind::keypoint_rendering: {
            Image out(size, size);
            const double r = size / 16.0;
            for (size_t i = 0; i < scene.keypoints.size(); ++i) {
                const double px = scene.keypoints[i][0] * size;
                const double py = scene.keypoints[i][1] * size;
                const auto& color = kPalette[i % kNumColors];
                for (int y = 0; y < size; ++y) {
                    for (int x = 0; x < size; ++x) {
                        const double ddx = x + 0.5 - px;
                        const double ddy = y + 0.5 - py;
                        if (ddx * ddx + ddy * ddy <= r * r) {
                            out.set(x, y, color);
                        }
                    }
                }
            }
            return out;
        }
    }
    throw FormatError("unsupported annotation kind");
}

TaskPair make_task_pair(const Scene& scene, const Image& img, AnnotationKind kind, uint64_t seed) {
    TaskPair p;
    p.kind = kind;
    p.scene = scene;
    p.annot_seed = seed;
    Image derived = derive_annotation(scene, img, kind, seed);
    if (kind == AnnotationKind::grayscale_input || kind == AnnotationKind::inpainting_corrupted) {
        p.input = std::move(derived);
        p.target = img;
    } else {
        p.input = img;
        p.target = std::move(derived);
    }
    return p;
}

VisualSentence build_video_sentence(const std::vector<Image>& video, int stride, int length,
                                    uint64_t start_seed) {
    if (length < 1 || length > kMaxSentenceLen) {
        throw FormatError("video sentence length must be in [1,16], got " +
                          std::to_string(length));
    }
    if (stride < 1) {
        throw FormatError("video stride must be >= 1, got " + std::to_string(stride));
    }
    const int needed = (length - 1) * stride + 1;
    if (static_cast<int>(video.size()) < needed) {
        throw InsufficientFramesError("video too short: need " + std::to_string(needed) +
                                      " frames for length " + std::to_string(length) +
                                      " at stride " + std::to_string(stride) + ", have " +
                                      std::to_string(video.size()));
    }
    Rng rng(start_seed ^ Rng::hash_name("video_start"));
    const int start_max = static_cast<int>(video.size()) - needed;
    const int start = static_cast<int>(rng.next_below(static_cast<uint64_t>(start_max) + 1));
    VisualSentence s;
    s.kind = SentenceKind::video;
    for (int i = 0; i < length; ++i) {
        s.images.push_back(video[static_cast<size_t>(start) + static_cast<size_t>(i) * stride]);
    }
    return s;
}

std::vector<VisualSentence> build_multiview_sentence(const Scene& scene, const MultiviewParams& p,
                                                     uint64_t seed, int size) {
    if (p.n_views * p.azimuth_step_deg > 360.0 + p.azimuth_step_deg) {
        throw ConfigError("multiview: views x step exceeds a full orbit");
    }
    Rng rng(seed ^ Rng::hash_name("multiview"));
    const double elevation = rng.next_range(p.elevation_min_deg, p.elevation_max_deg);
    const double radius = rng.next_range(p.radius_min, p.radius_max);
    const double shear = 0.5 * std::tan(elevation * kPi / 180.0);

    std::vector<Image> views;
    std::vector<Scene> scenes;
    for (int i = 0; i < p.n_views; ++i) {
        Scene v = scene;
        v.cx = 0.5;
        v.cy = 0.5;
        v.scale = scene.scale / radius;
        v.orientation_deg = scene.orientation_deg + i * p.azimuth_step_deg;
        v.shear = shear;
        refresh_keypoints(v);
        scenes.push_back(v);
        views.push_back(render_scene(v, size));
    }

    std::vector<VisualSentence> out;
    if (p.n_views <= kMaxSentenceLen) {
        VisualSentence s;
        s.kind = SentenceKind::multiview;
        s.images = std::move(views);
        s.scenes = std::move(scenes);
        out.push_back(std::move(s));
    } else {
        const int half = (p.n_views + 1) / 2;
        for (int part = 0; part < 2; ++part) {
            VisualSentence s;
            s.kind = SentenceKind::multiview;
            const int lo = part == 0 ? 0 : half;
            const int hi = part == 0 ? half : p.n_views;
            for (int i = lo; i < hi; ++i) {
                s.images.push_back(views[i]);
                s.scenes.push_back(scenes[i]);
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

VisualSentence build_category_sentence(const std::map<int, std::vector<Image>>& pool,
                                       int group_size, uint64_t seed) {
    if (group_size != 2 && group_size != 4 && group_size != 8 && group_size != 16) {
        throw ConfigError("category group size must be one of 2,4,8,16");
    }
    std::vector<int> eligible;
    for (const auto& [cls, imgs] : pool) {
        if (static_cast<int>(imgs.size()) >= group_size) {
            eligible.push_back(cls);
        }
    }
    if (eligible.empty()) {
        throw InsufficientDataError("category pool has no class with >= " +
                                    std::to_string(group_size) + " images");
    }
    Rng rng(seed ^ Rng::hash_name("category"));
    VisualSentence s;
    s.kind = SentenceKind::category;
    const int n_groups = kMaxSentenceLen / group_size;
    for (int g = 0; g < n_groups; ++g) {
        const int cls = eligible[rng.next_below(eligible.size())];
        const auto& imgs = pool.at(cls);
        std::vector<size_t> idx(imgs.size());
        for (size_t i = 0; i < idx.size(); ++i) {
            idx[i] = i;
        }
        rng.shuffle(idx);
        for (int i = 0; i < group_size; ++i) {
            s.images.push_back(imgs[idx[i]]);
        }
    }
    return s;
}

VisualSentence build_pair_sentence(const std::vector<TaskPair>& pairs) {
    if (pairs.size() != 8) {
        throw FormatError("pair sentence needs exactly 8 pairs, got " +
                          std::to_string(pairs.size()));
    }
    for (const auto& p : pairs) {
        if (p.kind != pairs[0].kind) {
            throw FormatError("pair sentence mixes annotation kinds: " + to_string(pairs[0].kind) +
                              " vs " + to_string(p.kind));
        }
    }
    VisualSentence s;
    s.kind = SentenceKind::pair;
    s.annot_kind = pairs[0].kind;
    s.has_annot = true;
    for (const auto& p : pairs) {
        s.images.push_back(p.input);
        s.images.push_back(p.target);
        s.scenes.push_back(p.scene);
        s.annot_seeds.push_back(p.annot_seed);
    }
    return s;
}

VisualSentence build_multi_annotation_sentence(
    const std::vector<std::pair<Image, Scene>>& scene_pool,
    const std::vector<AnnotationKind>& kinds, const MultiAnnotationRule& rule, uint64_t seed) {
    const int k = static_cast<int>(kinds.size());
    if (k != rule.k || k + 1 > kMaxSentenceLen) {
        throw FormatError("multi-annotation rule needs k+1 <= 16, got k=" + std::to_string(k));
    }
    if (scene_pool.empty()) {
        throw InsufficientDataError("multi-annotation scene pool is empty");
    }
    Rng rng(seed ^ Rng::hash_name("multi_annot"));
    VisualSentence s;
    s.kind = SentenceKind::multi_annot;
    while (true) {
        const auto& [img, scene] = scene_pool[rng.next_below(scene_pool.size())];
        const int m = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(k) + 1));
        if (static_cast<int>(s.images.size()) + m > kMaxSentenceLen) {
            break;
        }
        std::vector<int> kidx(kinds.size());
        for (size_t i = 0; i < kidx.size(); ++i) {
            kidx[i] = static_cast<int>(i);
        }
        rng.shuffle(kidx);
        kidx.resize(static_cast<size_t>(m - 1));
        std::sort(kidx.begin(), kidx.end());
        s.images.push_back(img);
        for (int ki : kidx) {
            s.images.push_back(derive_annotation(scene, img, kinds[ki], rng.next_u64()));
        }
    }
    return s;
}

VisualSentence build_video_annot_sentence(const std::vector<Image>& frames,
                                          const std::vector<Image>& annots, VideoAnnotMode mode) {
    if (frames.size() != 8 || annots.size() != 8) {
        throw FormatError("video+annotation sentence needs 8 frames and 8 annotations, got " +
                          std::to_string(frames.size()) + " and " + std::to_string(annots.size()));
    }
    VisualSentence s;
    s.has_annot = true;
    if (mode == VideoAnnotMode::interleaved) {
        s.kind = SentenceKind::video_annot_interleaved;
        for (size_t i = 0; i < 8; ++i) {
            s.images.push_back(frames[i]);
            s.images.push_back(annots[i]);
        }
    } else {
        s.kind = SentenceKind::video_annot_grouped;
        for (size_t i = 0; i < 8; ++i) {
            s.images.push_back(frames[i]);
        }
        for (size_t i = 0; i < 8; ++i) {
            s.images.push_back(annots[i]);
        }
    }
    return s;
}

std::vector<VisualSentence> build_corpus(const CorpusSpec& spec) {
    std::vector<VisualSentence> out;
    const int size = spec.image_size;

    Rng single_rng = Rng::substream(spec.seed, "corpus/single");
    for (int i = 0; i < spec.n_single; ++i) {
        VisualSentence s;
        s.kind = SentenceKind::single;
        auto [img, scene] = gen_scene(single_rng.next_u64(), size);
        s.images.push_back(std::move(img));
        s.scenes.push_back(scene);
        out.push_back(std::move(s));
    }

    Rng video_rng = Rng::substream(spec.seed, "corpus/video");
    for (int i = 0; i < spec.n_video; ++i) {
        const int stride = spec.video_strides[i % spec.video_strides.size()];
        const int frames_needed = (kMaxSentenceLen - 1) * stride + 1;
        const int len = std::max(spec.video_length_frames, frames_needed);
        Video v = gen_video(video_rng.next_u64(), len, size);
        out.push_back(build_video_sentence(v.frames, stride, kMaxSentenceLen, video_rng.next_u64()));
    }

    Rng mv_rng = Rng::substream(spec.seed, "corpus/multiview");
    for (int i = 0; i < spec.n_multiview_orbits; ++i) {
        const Scene scene = make_scene(mv_rng.next_u64(), size);
        auto sentences = build_multiview_sentence(scene, MultiviewParams{}, mv_rng.next_u64(), size);
        for (auto& s : sentences) {
            out.push_back(std::move(s));
        }
    }

    if (spec.n_category > 0) {
        Rng cat_rng = Rng::substream(spec.seed, "corpus/category");
        std::map<int, std::vector<Image>> pool;
        const int pool_size = std::max(720, spec.n_category * 4);
        for (int i = 0; i < pool_size; ++i) {
            auto [img, scene] = gen_scene(cat_rng.next_u64(), size);
            pool[scene.class_id].push_back(std::move(img));
        }
        const int group_sizes[4] = {2, 4, 8, 16};
        for (int i = 0; i < spec.n_category; ++i) {
            out.push_back(build_category_sentence(pool, group_sizes[i % 4], cat_rng.next_u64()));
        }
    }

    const std::array<std::pair<AnnotationKind, int>, 5> pair_counts = {{
        {AnnotationKind::segmentation_mask, spec.n_pair_segmentation},
        {AnnotationKind::edge_map, spec.n_pair_edge},
        {AnnotationKind::grayscale_input, spec.n_pair_grayscale},
        {AnnotationKind::inpainting_corrupted, spec.n_pair_inpainting},
        {AnnotationKind::keypoint_rendering, spec.n_pair_keypoints},
    }};
    for (const auto& [kind, count] : pair_counts) {
        Rng pair_rng = Rng::substream(spec.seed, "corpus/pair/" + to_string(kind));
        for (int i = 0; i < count; ++i) {
            std::vector<TaskPair> pairs;
            for (int j = 0; j < 8; ++j) {
                auto [img, scene] = gen_scene(pair_rng.next_u64(), size);
                pairs.push_back(make_task_pair(scene, img, kind, pair_rng.next_u64()));
            }
            out.push_back(build_pair_sentence(pairs));
        }
    }

    if (spec.n_multi_annot > 0) {
        Rng ma_rng = Rng::substream(spec.seed, "corpus/multi_annot");
        std::vector<std::pair<Image, Scene>> pool;
        for (int i = 0; i < std::max(64, spec.n_multi_annot); ++i) {
            auto [img, scene] = gen_scene(ma_rng.next_u64(), size);
            pool.emplace_back(std::move(img), scene);
        }
        std::vector<AnnotationKind> kinds = {
            AnnotationKind::segmentation_mask, AnnotationKind::edge_map,
            AnnotationKind::grayscale_input, AnnotationKind::inpainting_corrupted,
            AnnotationKind::keypoint_rendering};
        MultiAnnotationRule rule;
        rule.k = static_cast<int>(kinds.size());
        for (int i = 0; i < spec.n_multi_annot; ++i) {
            out.push_back(build_multi_annotation_sentence(pool, kinds, rule, ma_rng.next_u64()));
        }
    }

    Rng va_rng = Rng::substream(spec.seed, "corpus/video_annot");
    for (int i = 0; i < spec.n_video_annot; ++i) {
        Video v = gen_video(va_rng.next_u64(), 16, size);
        std::vector<Image> frames, annots;
        for (int j = 0; j < 8; ++j) {
            frames.push_back(v.frames[static_cast<size_t>(j) * 2]);
            annots.push_back(derive_annotation(v.scenes[static_cast<size_t>(j) * 2],
                                               v.frames[static_cast<size_t>(j) * 2],
                                               AnnotationKind::segmentation_mask, va_rng.next_u64()));
        }
        out.push_back(build_video_annot_sentence(
            frames, annots,
            i % 2 == 0 ? VideoAnnotMode::interleaved : VideoAnnotMode::grouped));
    }

    return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open manifest for writing: " + path);
    }
    for (const auto& e : entries) {
        out << to_string(e.kind) << '\t';
        for (size_t i = 0; i < e.paths.size(); ++i) {
            out << e.paths[i];
            if (i + 1 < e.paths.size()) {
                out << ',';
            }
        }
        out << '\n';
    }
}

std::vector<ManifestEntry> parse_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest: " + path);
    }
    std::vector<ManifestEntry> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError("manifest " + path + " line " + std::to_string(lineno) +
                             ": missing tab separator");
        }
        ManifestEntry e;
        try {
            e.kind = sentence_kind_from_string(line.substr(0, tab));
        } catch (const ParseError& err) {
            throw ParseError("manifest " + path + " line " + std::to_string(lineno) + ": " +
                             err.what());
        }
        std::string rest = line.substr(tab + 1);
        size_t start = 0;
        while (start <= rest.size()) {
            const size_t comma = rest.find(',', start);
            const std::string item = rest.substr(
                start, comma == std::string::npos ? std::string::npos : comma - start);
            if (item.empty()) {
                throw ParseError("manifest " + path + " line " + std::to_string(lineno) +
                                 ": empty image path");
            }
            e.paths.push_back(item);
            if (comma == std::string::npos) {
                break;
            }
            start = comma + 1;
        }
        if (e.paths.empty() || static_cast<int>(e.paths.size()) > kMaxSentenceLen) {
            throw ParseError("manifest " + path + " line " + std::to_string(lineno) +
                             ": sentence length must be 1..16");
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<ManifestEntry> write_sentence_corpus(const std::string& dir,
                                                 const std::string& manifest_name,
                                                 const std::vector<VisualSentence>& sentences) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "img");
    std::vector<ManifestEntry> entries;
    char buf[64];
    for (size_t i = 0; i < sentences.size(); ++i) {
        ManifestEntry e;
        e.kind = sentences[i].kind;
        for (size_t j = 0; j < sentences[i].images.size(); ++j) {
            std::snprintf(buf, sizeof buf, "img/s%06zu_%02zu.ppm", i, j);
            write_ppm((fs::path(dir) / buf).string(), sentences[i].images[j]);
            e.paths.push_back(buf);
        }
        entries.push_back(std::move(e));
    }
    write_manifest((fs::path(dir) / manifest_name).string(), entries);
    return entries;
}

} // namespace lvm::forge
