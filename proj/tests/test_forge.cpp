#include <doctest.h>

#include <cmath>
#include <set>

#include "lvm/errors.hpp"
#include "lvm/forge.hpp"

using namespace lvm;
using namespace lvm::forge;

TEST_CASE("gen_scene: deterministic, in-range, in-bounds") {
    for (uint64_t seed : {1ull, 77ull, 901ull}) {
        auto [img1, s1] = gen_scene(seed);
        auto [img2, s2] = gen_scene(seed);
        CHECK(img1 == img2);
        CHECK(s1.scale >= 0.15);
        CHECK(s1.scale <= 0.35);
        CHECK(s1.class_id == static_cast<int>(s1.shape_kind) * kNumColors + s1.palette_index);

        // shape fully inside: no foreground pixel on the border ring
        const int n = img1.width;
        for (int i = 0; i < n; ++i) {
            for (auto [x, y] : {std::pair{i, 0}, {i, n - 1}, {0, i}, {n - 1, i}}) {
                const double u = (x + 0.5) / n, v = (y + 0.5) / n;
                CHECK(!point_in_shape(s1, u, v));
            }
        }
        // keypoints sit on the outline: tiny inward offset is inside,
        // tiny outward offset is outside (along the ray from the center)
        for (const auto& kp : s1.keypoints) {
            const double dx = kp[0] - s1.cx, dy = kp[1] - s1.cy;
            const double len = std::sqrt(dx * dx + dy * dy);
            CHECK(point_in_shape(s1, kp[0] - 0.02 * dx / len, kp[1] - 0.02 * dy / len));
            CHECK(!point_in_shape(s1, kp[0] + 0.02 * dx / len, kp[1] + 0.02 * dy / len));
        }
    }
}

TEST_CASE("gen_scene: rasterized mask area matches a Monte-Carlo point-in-shape oracle") {
    for (uint64_t seed : {3ull, 8ull, 15ull, 21ull, 34ull}) {
        auto [img, scene] = gen_scene(seed);
        const int n = img.width;
        const Image mask = derive_annotation(scene, img, AnnotationKind::segmentation_mask, 0);
        int raster = 0;
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                const uint8_t* p = mask.at(x, y);
                if (p[0] != 0 || p[1] != 0 || p[2] != 0) {
                    ++raster;
                }
            }
        }
        const double raster_frac = static_cast<double>(raster) / (n * n);

        Rng mc(seed * 7919 + 13);
        const int samples = 200000;
        int hits = 0;
        for (int i = 0; i < samples; ++i) {
            if (point_in_shape(scene, mc.next_double(), mc.next_double())) {
                ++hits;
            }
        }
        const double mc_frac = static_cast<double>(hits) / samples;
        CHECK(std::fabs(raster_frac - mc_frac) < 0.02);
    }
}

TEST_CASE("derive_annotation: grayscale luma formula") {
    Image img(4, 4);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            img.set(x, y, {255, 0, 0});
        }
    }
    Scene s = make_scene(1, 4);
    Image gray = derive_annotation(s, img, AnnotationKind::grayscale_input, 0);
    for (int c = 0; c < 3; ++c) {
        CHECK(gray.at(0, 0)[c] == 76);
    }
}

TEST_CASE("derive_annotation: inpainting corruption blacks out whole boxes") {
    auto [img, scene] = gen_scene(5);
    Image corrupted = derive_annotation(scene, img, AnnotationKind::inpainting_corrupted, 5);
    // re-derivation is exact, and some pixels must have been blacked
    Image again = derive_annotation(scene, img, AnnotationKind::inpainting_corrupted, 5);
    CHECK(corrupted == again);
    int blacked = 0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const uint8_t* a = corrupted.at(x, y);
            const uint8_t* b = img.at(x, y);
            if (a[0] != b[0] || a[1] != b[1] || a[2] != b[2]) {
                CHECK(a[0] == 0);
                CHECK(a[1] == 0);
                CHECK(a[2] == 0);
                ++blacked;
            }
        }
    }
    CHECK(blacked > 0);
}

TEST_CASE("derive_annotation: edge map equals 4-neighborhood boundary of the mask") {
    for (uint64_t seed : {2ull, 9ull, 31ull}) {
        auto [img, scene] = gen_scene(seed);
        const int n = img.width;
        Image mask = derive_annotation(scene, img, AnnotationKind::segmentation_mask, 0);
        Image edge = derive_annotation(scene, img, AnnotationKind::edge_map, 0);

        auto fg = [&](int x, int y) {
            if (x < 0 || y < 0 || x >= n || y >= n) {
                return false;
            }
            const uint8_t* p = mask.at(x, y);
            return p[0] != 0 || p[1] != 0 || p[2] != 0;
        };
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                const bool boundary =
                    fg(x, y) && (!fg(x - 1, y) || !fg(x + 1, y) || !fg(x, y - 1) || !fg(x, y + 1));
                const bool white = edge.at(x, y)[0] == 255;
                CHECK(boundary == white);
            }
        }
    }
}

TEST_CASE("build_video_sentence: stride arithmetic and errors") {
    std::vector<Image> video(200, Image(4, 4));
    for (int i = 0; i < 200; ++i) {
        video[i].rgb[0] = static_cast<uint8_t>(i);
    }
    // find the seed-independent content: frame index = start + i*stride
    VisualSentence s = build_video_sentence(video, 10, 16, 123);
    REQUIRE(s.images.size() == 16);
    const int start = s.images[0].rgb[0];
    for (int i = 0; i < 16; ++i) {
        CHECK(s.images[i].rgb[0] == static_cast<uint8_t>(start + i * 10));
    }
    CHECK(start <= 200 - 151);

    std::vector<Image> tiny(10, Image(4, 4));
    CHECK_THROWS_AS(build_video_sentence(tiny, 30, 16, 0), InsufficientFramesError);
    try {
        build_video_sentence(tiny, 30, 16, 0);
    } catch (const InsufficientFramesError& e) {
        CHECK(std::string(e.what()).find("451") != std::string::npos);
    }

    // default schedule constants
    CHECK(kDefaultStrideSchedule == std::array<int, 3>{10, 20, 30});
}

TEST_CASE("build_multiview_sentence: 24 views split 12+12, params sampled once") {
    Scene scene = make_scene(42, 32);
    MultiviewParams p;
    CHECK(p.n_views * p.azimuth_step_deg == doctest::Approx(360.0));
    auto sentences = build_multiview_sentence(scene, p, 9, 32);
    REQUIRE(sentences.size() == 2);
    CHECK(sentences[0].images.size() == 12);
    CHECK(sentences[1].images.size() == 12);
    // one shear (elevation) and one scale (radius) across the whole orbit
    const double shear = sentences[0].scenes[0].shear;
    const double scale = sentences[0].scenes[0].scale;
    for (const auto& s : sentences) {
        for (const auto& sc : s.scenes) {
            CHECK(sc.shear == shear);
            CHECK(sc.scale == scale);
        }
    }
    CHECK(std::fabs(shear) <= 0.5 + 1e-12); // |0.5 * tan(+-45 deg)| <= 0.5
    const double radius = scene.scale / scale;
    CHECK(radius >= 1.5);
    CHECK(radius <= 2.2);
    // azimuth advances by one step per view
    CHECK(sentences[0].scenes[1].orientation_deg - sentences[0].scenes[0].orientation_deg ==
          doctest::Approx(15.0));
}

TEST_CASE("build_category_sentence: group structure") {
    std::map<int, std::vector<Image>> pool;
    Rng rng(4);
    for (int cls = 0; cls < 6; ++cls) {
        for (int i = 0; i < 20; ++i) {
            Image img(4, 4);
            img.rgb[0] = static_cast<uint8_t>(cls);
            img.rgb[1] = static_cast<uint8_t>(i);
            pool[cls].push_back(img);
        }
    }
    for (int gs : {2, 4, 8, 16}) {
        VisualSentence s = build_category_sentence(pool, gs, 77);
        REQUIRE(s.images.size() == 16);
        for (int g = 0; g < 16 / gs; ++g) {
            const uint8_t cls = s.images[static_cast<size_t>(g) * gs].rgb[0];
            for (int i = 0; i < gs; ++i) {
                CHECK(s.images[static_cast<size_t>(g) * gs + i].rgb[0] == cls);
            }
        }
    }
    std::map<int, std::vector<Image>> small;
    small[0] = std::vector<Image>(3, Image(4, 4));
    CHECK_THROWS_AS(build_category_sentence(small, 16, 0), InsufficientDataError);
}

TEST_CASE("build_pair_sentence: layout, round-trip, errors") {
    Rng rng(6);
    std::vector<TaskPair> pairs;
    for (int i = 0; i < 8; ++i) {
        auto [img, scene] = gen_scene(rng.next_u64());
        pairs.push_back(make_task_pair(scene, img, AnnotationKind::segmentation_mask,
                                       rng.next_u64()));
    }
    VisualSentence s = build_pair_sentence(pairs);
    REQUIRE(s.images.size() == 16);
    CHECK(s.kind == SentenceKind::pair);

    // input at even slots, annotation at odd slots, from the same scene
    for (int i = 0; i < 8; ++i) {
        const Image expect_in = render_scene(s.scenes[i], s.images[0].width);
        const Image expect_annot = derive_annotation(s.scenes[i], expect_in,
                                                     AnnotationKind::segmentation_mask,
                                                     s.annot_seeds[i]);
        CHECK(s.images[static_cast<size_t>(2 * i)] == expect_in);
        CHECK(s.images[static_cast<size_t>(2 * i + 1)] == expect_annot);
    }

    pairs.pop_back();
    CHECK_THROWS_AS(build_pair_sentence(pairs), FormatError);

    auto [img9, scene9] = gen_scene(rng.next_u64());
    pairs.push_back(make_task_pair(scene9, img9, AnnotationKind::edge_map, rng.next_u64()));
    CHECK_THROWS_AS(build_pair_sentence(pairs), FormatError);
}

TEST_CASE("pair direction: grayscale and inpainting lead with the derived image") {
    auto [img, scene] = gen_scene(12);
    TaskPair gray = make_task_pair(scene, img, AnnotationKind::grayscale_input, 1);
    CHECK(gray.target == img);
    CHECK(gray.input == derive_annotation(scene, img, AnnotationKind::grayscale_input, 1));
    TaskPair seg = make_task_pair(scene, img, AnnotationKind::segmentation_mask, 2);
    CHECK(seg.input == img);
}

TEST_CASE("build_multi_annotation_sentence: maximal tuple and fill arithmetic") {
    Rng rng(8);
    std::vector<std::pair<Image, Scene>> pool;
    for (int i = 0; i < 8; ++i) {
        auto [img, scene] = gen_scene(rng.next_u64());
        pool.emplace_back(img, scene);
    }
    std::vector<AnnotationKind> kinds = {AnnotationKind::segmentation_mask,
                                         AnnotationKind::edge_map,
                                         AnnotationKind::grayscale_input};
    MultiAnnotationRule rule;
    rule.k = 3;
    // k=3 -> max tuple m=4 = input + all 3 annotations; 4 tuples fill 16
    VisualSentence s = build_multi_annotation_sentence(pool, kinds, rule, 5);
    CHECK(s.images.size() <= 16);
    CHECK(s.kind == SentenceKind::multi_annot);
}

TEST_CASE("multi-annotation m is uniform on {1..k+1} (3-sigma band)") {
    const int k = 3;
    const int trials = 10000;
    std::array<int, 5> counts{}; // m in 1..4
    for (int i = 0; i < trials; ++i) {
        Rng rng(static_cast<uint64_t>(i) ^ Rng::hash_name("multi_annot"));
        rng.next_below(1); // scene draw placeholder to mirror builder order
        (void)counts;
        const int m = 1 + static_cast<int>(rng.next_below(k + 1));
        counts[m]++;
    }
    const double p = 1.0 / (k + 1);
    const double mean = trials * p;
    const double sigma = std::sqrt(trials * p * (1 - p));
    for (int m = 1; m <= k + 1; ++m) {
        CHECK(std::fabs(counts[m] - mean) < 3 * sigma);
    }
}

TEST_CASE("build_video_annot_sentence: both orderings") {
    std::vector<Image> frames(8, Image(4, 4)), annots(8, Image(4, 4));
    for (int i = 0; i < 8; ++i) {
        frames[i].rgb[0] = static_cast<uint8_t>(i);
        annots[i].rgb[0] = static_cast<uint8_t>(100 + i);
    }
    VisualSentence inter = build_video_annot_sentence(frames, annots, VideoAnnotMode::interleaved);
    REQUIRE(inter.images.size() == 16);
    for (int i = 0; i < 8; ++i) {
        CHECK(inter.images[static_cast<size_t>(2 * i)].rgb[0] == i);
        CHECK(inter.images[static_cast<size_t>(2 * i + 1)].rgb[0] == 100 + i);
    }
    VisualSentence grp = build_video_annot_sentence(frames, annots, VideoAnnotMode::grouped);
    REQUIRE(grp.images.size() == 16);
    for (int i = 0; i < 8; ++i) {
        CHECK(grp.images[static_cast<size_t>(i)].rgb[0] == i);
        CHECK(grp.images[static_cast<size_t>(8 + i)].rgb[0] == 100 + i);
    }
    annots.pop_back();
    CHECK_THROWS_AS(build_video_annot_sentence(frames, annots, VideoAnnotMode::grouped),
                    FormatError);
}

TEST_CASE("gen_video: deterministic, fixed background, cell-aligned motion") {
    Video v1 = gen_video(31, 24);
    Video v2 = gen_video(31, 24);
    REQUIRE(v1.frames.size() == 24);
    CHECK(v1.frames[5] == v2.frames[5]);
    // background pixels (corners) never change across frames
    for (size_t t = 1; t < v1.frames.size(); ++t) {
        CHECK(v1.frames[t].at(0, 0)[0] == v1.frames[0].at(0, 0)[0]);
        CHECK(v1.frames[t].at(31, 31)[1] == v1.frames[0].at(31, 31)[1]);
    }
    // centers move in eighth-of-image steps (or not at all)
    for (size_t t = 1; t < v1.scenes.size(); ++t) {
        const double dx = v1.scenes[t].cx - v1.scenes[t - 1].cx;
        const double dy = v1.scenes[t].cy - v1.scenes[t - 1].cy;
        const double step = 1.0 / 8.0;
        CHECK((std::fabs(dx) < 1e-12 || std::fabs(std::fabs(dx) - step) < 1e-12));
        CHECK((std::fabs(dy) < 1e-12 || std::fabs(std::fabs(dy) - step) < 1e-12));
    }
}

TEST_CASE("build_corpus: every sentence is 1..16 uniform-size images; manifest round-trips") {
    CorpusSpec spec;
    spec.seed = 99;
    spec.n_single = 3;
    spec.n_video = 2;
    spec.n_multiview_orbits = 1;
    spec.n_category = 2;
    spec.n_pair_segmentation = 1;
    spec.n_pair_grayscale = 1;
    spec.n_multi_annot = 2;
    spec.n_video_annot = 2;
    auto sentences = build_corpus(spec);
    CHECK(sentences.size() == 3 + 2 + 2 + 2 + 1 + 1 + 2 + 2);
    for (const auto& s : sentences) {
        CHECK(s.images.size() >= 1);
        CHECK(s.images.size() <= 16);
        for (const auto& img : s.images) {
            CHECK(img.width == spec.image_size);
            CHECK(img.height == spec.image_size);
        }
    }
    // determinism
    auto again = build_corpus(spec);
    REQUIRE(again.size() == sentences.size());
    for (size_t i = 0; i < again.size(); ++i) {
        CHECK(again[i].images == sentences[i].images);
    }

    const std::string dir = "forge_test_corpus";
    auto entries = write_sentence_corpus(dir, "manifest.tsv", sentences);
    auto parsed = parse_manifest(dir + "/manifest.tsv");
    REQUIRE(parsed.size() == entries.size());
    for (size_t i = 0; i < parsed.size(); ++i) {
        CHECK(parsed[i].kind == entries[i].kind);
        CHECK(parsed[i].paths == entries[i].paths);
    }
    Image back = read_ppm(dir + "/" + parsed[0].paths[0]);
    CHECK(back == sentences[0].images[0]);
}
