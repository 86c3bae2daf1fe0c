#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "fpw/error.hpp"
#include "fpw/pipeline.hpp"
#include "fpw/synth.hpp"
#include "support.hpp"

using namespace fpw;
using fpw::testing::TempDir;

namespace {

TempDir& cache_root() {
    static TempDir dir;
    return dir;
}

PipelineConfig small_config() {
    PipelineConfig c;
    c.camera = FisheyeCamera::centered(400, 400, 200.0);
    c.cache_dir = cache_root().path();
    c.workers = 1;
    return c;
}

/// One pipeline for the whole binary so the exemplar sets are built once.
Pipeline& shared() {
    static Pipeline p(small_config());
    return p;
}

std::vector<CompositeDetection> to_composite(const std::vector<PatchDetection>& dets, const CompositeLayout& layout,
                                             const std::string& id) {
    std::vector<CompositeDetection> out;
    for (const auto& d : dets) out.push_back({id, patch_box_to_composite(d, layout), d.score, "person", 0});
    return out;
}

/// Snap boxes to a dyadic grid so the patch/composite offset round trip is exact.
std::vector<PatchDetection> snapped(std::vector<PatchDetection> dets) {
    auto q = [](double v) { return std::round(v * 256.0) / 256.0; };
    for (auto& d : dets) d.box = AxisBox{q(d.box.x0), q(d.box.y0), q(d.box.x1), q(d.box.y1)};
    return dets;
}

std::string serialize(const FrameResult& r, const Vec2& c) {
    std::ostringstream os;
    write_fisheye_detections(os, {ImageDetections{"f", r.detections}}, c);
    return os.str();
}

}  // namespace

TEST(Config, JsonRoundTrip) {
    PipelineConfig c;
    c.k_r = 7;
    c.nms.method = Stage2Method::bbr;
    c.tta = true;
    c.scaling = ConfidenceScaling::overlap;
    c.layout.phi1 = deg2rad(40);
    const auto back = PipelineConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json().dump(), c.to_json().dump());
    EXPECT_EQ(back.k_r, 7);
    EXPECT_EQ(back.nms.method, Stage2Method::bbr);
    EXPECT_NEAR(back.layout.phi1, deg2rad(40), 1e-12);
    EXPECT_EQ(back.target_grid.size(), 12u);
}

TEST(Config, DefaultsAreTheReferenceValues) {
    const PipelineConfig c;
    EXPECT_EQ(c.layout.composite_size, 608);
    EXPECT_EQ(c.k_r, 10);
    EXPECT_EQ(c.overlap, 0.8);
    EXPECT_EQ(c.min_score, 0.05);
    EXPECT_EQ(c.nms.stage1_iou, 0.8);
    EXPECT_EQ(c.nms.hard_iou, 0.45);
    EXPECT_EQ(c.nms.a_g, 0.2);
    EXPECT_EQ(c.nms.bbr_kernel_frac, 0.04);
    EXPECT_EQ(c.exemplar_params.min_containment, 0.1);
    EXPECT_EQ(c.exemplar_params.min_target_height, 20.0);
    ASSERT_EQ(c.n_composites(), 2);
    EXPECT_NEAR(c.composite_layout(1).phi2_base, deg2rad(22.5), 1e-12);
    EXPECT_EQ(c.composite_layout(0).phi2_base, 0.0);
}

TEST(Config, RejectsUnknownAndInvalid) {
    EXPECT_THROW(PipelineConfig::from_json(Json::parse(R"({"colour": 1})")), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json(Json::parse(R"({"nms": {"methd": "hard"}})")), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json(Json::parse(R"({"mapping": {"k_r": 0}})")), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json(Json::parse(R"({"nms": {"method": "magic"}})")), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json(Json::parse(R"({"camera": {"radius": "big"}})")), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json(Json::parse(R"({"exemplars": {"overlap": 1.0}})")), ConfigError);
    EXPECT_THROW(PipelineConfig::load("/nonexistent/fpw.json"), ConfigError);
}

TEST(Config, ResolveUsesEnvironment) {
    TempDir dir;
    std::ofstream(dir / "c.json") << R"({"mapping": {"k_r": 3}})";
    ::setenv("FPW_CONFIG", (dir / "c.json").c_str(), 1);
    EXPECT_EQ(PipelineConfig::resolve(std::nullopt).k_r, 3);
    ::unsetenv("FPW_CONFIG");
    EXPECT_EQ(PipelineConfig::resolve(std::nullopt).k_r, 10);
}

TEST(Pipeline, SinglePersonGivesOneDetection) {
    auto& p = shared();
    const auto& cam = p.config().camera;
    SyntheticScene scene;
    scene.persons.push_back({CylinderPerson{1.8, 0.9, 1.7, 0.5}});
    const auto rendered = render_fisheye(scene, cam);
    const auto dets = perfect_detections(scene, cam, p.layout(0));
    ASSERT_FALSE(dets.empty());
    const int comp = 0;
    const auto r = p.run_patch_detections(&rendered.image, {dets}, std::span(&comp, 1));
    const auto strong = std::count_if(r.detections.begin(), r.detections.end(),
                                      [](const FisheyeDetection& d) { return d.score >= 0.5; });
    EXPECT_EQ(strong, 1);
    ASSERT_FALSE(r.detections.empty());
    EXPECT_GE(iou_rotated(r.detections[0].box, rendered.gt.boxes[0], cam), 0.7);
}

TEST(Pipeline, FileInputMatchesPatchInput) {
    auto& p = shared();
    const auto& cam = p.config().camera;
    const auto scene = random_scene(3);
    const auto dets = snapped(perfect_detections(scene, cam, p.layout(0)));
    const int comp = 0;
    const auto a = p.run_patch_detections(nullptr, {dets}, std::span(&comp, 1));
    const auto comp_dets = to_composite(dets, p.layout(0), "f:0");
    const auto b = p.run_frame(nullptr, comp_dets, 0);
    EXPECT_EQ(serialize(a, cam.center()), serialize(b, cam.center()));
    EXPECT_EQ(b.ingested, dets.size());
}

TEST(Pipeline, EmptyInput) {
    auto& p = shared();
    const Image img(400, 400, 1, 90);
    const auto r = p.run_frame(&img, {}, 0);
    EXPECT_TRUE(r.detections.empty());
    EXPECT_EQ(r.ingested, 0u);
    EXPECT_GT(r.timing.warp_ms, 0.0);
    EXPECT_GE(r.timing.mapping_ms, 0.0);
    EXPECT_GE(r.timing.nms_ms, 0.0);
}

TEST(Pipeline, DeterministicAndOrderInvariant) {
    auto& p = shared();
    const auto& cam = p.config().camera;
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        const auto scene = random_scene(seed);
        auto comp = to_composite(perfect_detections(scene, cam, p.layout(0)), p.layout(0), "f:0");
        // Add some noisy lower-scored duplicates so the NMS has work to do.
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> j(-4, 4), s(0.06, 0.9);
        const std::size_t n = comp.size();
        for (std::size_t i = 0; i < n; ++i) {
            auto d = comp[i];
            d.box.x0 += j(rng);
            d.box.x1 += j(rng);
            d.box.y0 += j(rng);
            d.box.y1 += j(rng);
            d.score = s(rng);
            comp.push_back(d);
        }
        const auto first = serialize(p.run_frame(nullptr, comp, 0), cam.center());
        EXPECT_EQ(first, serialize(p.run_frame(nullptr, comp, 0), cam.center()));
        std::shuffle(comp.begin(), comp.end(), rng);
        EXPECT_EQ(first, serialize(p.run_frame(nullptr, comp, 0), cam.center()));
    }
}

TEST(Pipeline, GeometryOnlyMappingIsPermutationInvariant) {
    auto& p = shared();
    const auto& cam = p.config().camera;
    const auto scene = random_scene(21);
    auto dets = perfect_detections(scene, cam, p.layout(0));
    ASSERT_GT(dets.size(), 1u);
    PipelineConfig cfg = small_config();
    cfg.scaling = ConfidenceScaling::none;
    cfg.nms.stage1_enabled = false;
    Pipeline q(cfg);
    auto boxes = [&](std::vector<PatchDetection> d) {
        for (std::size_t i = 0; i < d.size(); ++i) d[i].id = i;
        std::vector<std::array<double, 5>> out;
        for (const auto& m : q.map(d, 0)) out.push_back({m.box.cx, m.box.cy, m.box.w, m.box.h, m.score});
        std::sort(out.begin(), out.end());
        return out;
    };
    const auto ref = boxes(dets);
    EXPECT_EQ(ref.size(), dets.size());
    std::reverse(dets.begin(), dets.end());
    EXPECT_EQ(boxes(dets), ref);
}

TEST(Pipeline, IngestFiltersAndReportsLines) {
    auto& p = shared();
    std::vector<CompositeDetection> in{{"f:0", AxisBox{10, 10, 40, 90}, 0.9, "person", 1},
                                       {"f:0", AxisBox{10, 10, 40, 90}, 0.01, "person", 2},
                                       {"f:0", AxisBox{10, 10, 40, 90}, 0.9, "car", 3}};
    EXPECT_EQ(p.ingest(in, 0).size(), 1u);
    in.push_back({"f:0", AxisBox{10, 10, 10, 90}, 0.9, "person", 4});
    try {
        p.ingest(in, 0);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    }
}

TEST(Pipeline, TtaNeverAddsDetections) {
    auto& p = shared();
    const auto& cam = p.config().camera;
    for (std::uint64_t seed : {31u, 32u, 33u, 34u}) {
        const auto scene = random_scene(seed);
        std::vector<std::vector<PatchDetection>> per;
        for (int k = 0; k < 2; ++k) per.push_back(snapped(perfect_detections(scene, cam, p.layout(k))));
        const int c0 = 0, c1 = 1;
        const std::vector<int> both{0, 1};
        const auto a = p.run_patch_detections(nullptr, per, std::span(&c0, 1));
        const auto b = p.run_patch_detections(nullptr, per, std::span(&c1, 1));
        const auto t = p.run_patch_detections(nullptr, per, both);
        EXPECT_LE(t.detections.size(), a.detections.size() + b.detections.size());
        CompositeInputs inputs;
        for (int k = 0; k < 2; ++k) inputs.push_back(to_composite(per[k], p.layout(k), "f:" + std::to_string(k)));
        EXPECT_EQ(serialize(p.run_frame_tta(nullptr, inputs), cam.center()), serialize(t, cam.center()));
    }
}

TEST(Pipeline, TtaFillsCoverageGap) {
    auto& p = shared();
    const auto& cam = p.config().camera;
    // Find a person the first composite misses but the second sees.
    std::optional<SyntheticScene> found;
    for (double az = 0; az < 45 && !found; az += 0.5) {
        for (double d = 6.5; d <= 9.0 && !found; d += 0.25) {
            SyntheticScene s;
            s.persons.push_back({CylinderPerson{d * std::cos(deg2rad(az)), d * std::sin(deg2rad(az)), 1.5, 0.5}});
            if (perfect_detections(s, cam, p.layout(0)).empty() && !perfect_detections(s, cam, p.layout(1)).empty()) {
                found = s;
            }
        }
    }
    ASSERT_TRUE(found) << "no coverage gap found";
    const auto gt = render_fisheye(*found, cam).gt;
    std::vector<std::vector<PatchDetection>> per;
    for (int k = 0; k < 2; ++k) per.push_back(perfect_detections(*found, cam, p.layout(k)));
    const std::vector<int> both{0, 1};
    const auto t = p.run_patch_detections(nullptr, per, both);
    ASSERT_FALSE(t.detections.empty());
    EXPECT_GE(iou_rotated(t.detections[0].box, gt.boxes[0], cam), 0.5);
}

TEST(Pipeline, MissingCacheWithoutBuildFails) {
    TempDir dir;
    PipelineConfig c = small_config();
    c.cache_dir = dir.path();
    c.build_missing_cache = false;
    Pipeline p(c);
    EXPECT_THROW(p.exemplars(0), DataError);
}

TEST(Pipeline, CacheIsReused) {
    auto& p = shared();
    p.exemplars(0);
    ASSERT_TRUE(std::filesystem::exists(p.exemplar_cache_path(0)));
    PipelineConfig c = small_config();
    c.build_missing_cache = false;
    Pipeline q(c);
    EXPECT_EQ(q.exemplars(0).size(), p.exemplars(0).size());
    EXPECT_EQ(q.exemplars(0)[3].size(), p.exemplars(0)[3].size());
}

TEST(Pipeline, WarpChecksImageSize) {
    auto& p = shared();
    EXPECT_THROW(p.warp(Image(300, 300), 0), DataError);
    const auto c = p.warp(Image(400, 400, 1, 50), 1);
    EXPECT_EQ(c.raster.width, 608);
    EXPECT_EQ(c.raster.height, 608);
}

TEST(DetectorCommand, ParsesStdout) {
    const Image img(608, 608, 1, 0);
    double ms = -1;
    const auto d = run_detector_command(
        R"(echo '{"composite_id": "x:0", "x": 1, "y": 2, "w": 3, "h": 4, "score": 0.5, "class": "person"}'; true)", img,
        "x:0", &ms);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].box, (AxisBox{1, 2, 4, 6}));
    EXPECT_GE(ms, 0.0);
    EXPECT_THROW(run_detector_command("false", img, "x:0"), DataError);
}

TEST(CanonicalSort, OrdersByPatchBoxScore) {
    std::vector<PatchDetection> d{{1, AxisBox{0, 0, 1, 1}, 0.5, 0},
                                  {0, AxisBox{5, 0, 6, 1}, 0.5, 0},
                                  {0, AxisBox{0, 0, 1, 1}, 0.9, 0},
                                  {0, AxisBox{0, 0, 1, 1}, 0.4, 0}};
    canonical_sort(d);
    EXPECT_EQ(d[0].patch, 0);
    EXPECT_EQ(d[0].box.x0, 0);
    EXPECT_EQ(d[2].box.x0, 5);
    EXPECT_EQ(d[3].patch, 1);
    EXPECT_NE(d[0].score, d[1].score);
}
