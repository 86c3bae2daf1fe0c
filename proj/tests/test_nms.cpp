#include <gtest/gtest.h>

#include <random>

#include "fpw/error.hpp"
#include "fpw/nms.hpp"

using namespace fpw;

namespace {

const FisheyeCamera kCam = FisheyeCamera::centered(800, 800, 400.0);
const Vec2 kC = kCam.center();

FisheyeDetection fd(double cx, double cy, double w, double h, double s, std::size_t id) {
    return FisheyeDetection::make(PolarBox{cx, cy, w, h}, s, id);
}

std::vector<FisheyeDetection> random_cluttered(std::uint64_t seed, int n) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ang(0, 2 * kPi), rad(60, 360), size(15, 60), jitter(-12, 12), sc(0.05, 1);
    std::vector<FisheyeDetection> out;
    while (static_cast<int>(out.size()) < n) {
        const double a = ang(rng), r = rad(rng), w = size(rng), h = 2 * size(rng);
        const int copies = 1 + static_cast<int>(rng() % 4);
        for (int k = 0; k < copies && static_cast<int>(out.size()) < n; ++k) {
            out.push_back(fd(400 + r * std::cos(a) + jitter(rng), 400 + r * std::sin(a) + jitter(rng),
                             w + jitter(rng) / 3, h + jitter(rng) / 3, sc(rng), out.size()));
        }
    }
    return out;
}

/// Straight transcription of the score-decay loop.
std::vector<std::pair<std::size_t, double>> gnms_oracle(std::vector<FisheyeDetection> d, double a_g) {
    std::vector<std::pair<std::size_t, double>> out;
    for (auto& x : d) x.score = x.raw_score;
    while (!d.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < d.size(); ++i) {
            if (d[i].score > d[best].score || (d[i].score == d[best].score && d[i].id < d[best].id)) best = i;
        }
        const FisheyeDetection b = d[best];
        d.erase(d.begin() + static_cast<std::ptrdiff_t>(best));
        out.push_back({b.id, b.score});
        for (auto& x : d) {
            const double o = iou_rotated(x.box, b.box, kC);
            x.score *= std::exp(-o * o / a_g);
        }
    }
    return out;
}

void expect_same(const std::vector<FisheyeDetection>& a, const std::vector<FisheyeDetection>& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].id, b[i].id);
        EXPECT_NEAR(a[i].score, b[i].score, tol);
        EXPECT_NEAR(a[i].box.cx, b[i].box.cx, tol);
        EXPECT_NEAR(a[i].box.cy, b[i].box.cy, tol);
        EXPECT_NEAR(a[i].box.w, b[i].box.w, tol);
        EXPECT_NEAR(a[i].box.h, b[i].box.h, tol);
    }
}

}  // namespace

TEST(Stage1Nms, Examples) {
    const std::vector<PatchDetection> same{{0, AxisBox{10, 10, 50, 90}, 0.9, 0}, {0, AxisBox{10, 10, 50, 90}, 0.8, 1}};
    const auto a = stage1_nms(same);
    ASSERT_EQ(a.size(), 1u);
    EXPECT_EQ(a[0].score, 0.9);

    // IOU 0.7 < 0.8: both stay.
    const std::vector<PatchDetection> near{{0, AxisBox{0, 0, 100, 10}, 0.9, 0}, {0, AxisBox{0, 0, 70, 10}, 0.8, 1}};
    EXPECT_EQ(stage1_nms(near).size(), 2u);

    const std::vector<PatchDetection> one{{3, AxisBox{1, 2, 3, 4}, 0.5, 7}};
    const auto o = stage1_nms(one);
    ASSERT_EQ(o.size(), 1u);
    EXPECT_EQ(o[0].id, 7u);
    EXPECT_EQ(o[0].box, one[0].box);
}

TEST(Stage1Nms, PatchesAreIndependent) {
    const std::vector<PatchDetection> d{{0, AxisBox{10, 10, 50, 90}, 0.9, 0}, {1, AxisBox{10, 10, 50, 90}, 0.8, 1}};
    EXPECT_EQ(stage1_nms(d).size(), 2u);
}

TEST(Stage1Nms, TiesKeepLowerId) {
    const std::vector<PatchDetection> d{{0, AxisBox{10, 10, 50, 90}, 0.7, 5}, {0, AxisBox{10, 10, 50, 90}, 0.7, 2}};
    const auto o = stage1_nms(d);
    ASSERT_EQ(o.size(), 1u);
    EXPECT_EQ(o[0].id, 2u);
}

TEST(HardNms, Examples) {
    const std::vector<FisheyeDetection> same{fd(500, 400, 20, 40, 0.6, 0), fd(500, 400, 20, 40, 0.9, 1)};
    const auto a = hard_nms_fisheye(same, kC);
    ASSERT_EQ(a.size(), 1u);
    EXPECT_EQ(a[0].id, 1u);

    // IOU 1/3 < 0.45.
    const std::vector<FisheyeDetection> third{fd(500, 400, 1, 1, 0.9, 0), fd(500.5, 400, 1, 1, 0.8, 1)};
    EXPECT_EQ(hard_nms_fisheye(third, kC).size(), 2u);

    EXPECT_TRUE(hard_nms_fisheye({}, kC).empty());
}

TEST(HardNms, KeptBoxesDoNotOverlapPastThreshold) {
    const auto d = random_cluttered(4, 80);
    const auto kept = hard_nms_fisheye(d, kC, 0.45);
    for (std::size_t i = 0; i < kept.size(); ++i) {
        for (std::size_t j = i + 1; j < kept.size(); ++j) EXPECT_LT(iou_rotated(kept[i].box, kept[j].box, kC), 0.45);
        if (i > 0) EXPECT_LE(kept[i].score, kept[i - 1].score);
    }
    // Every dropped box overlaps a kept, higher-scored box.
    for (const auto& x : d) {
        bool is_kept = false, covered = false;
        for (const auto& k : kept) {
            is_kept |= k.id == x.id;
            covered |= k.score >= x.score && iou_rotated(k.box, x.box, kC) >= 0.45;
        }
        EXPECT_TRUE(is_kept || covered);
    }
}

TEST(GaussianNms, CoincidentPair) {
    const std::vector<FisheyeDetection> d{fd(500, 400, 20, 40, 0.9, 0), fd(500, 400, 20, 40, 0.6, 1)};
    const auto o = gaussian_soft_nms(d, kC, 0.2, 0.0);
    ASSERT_EQ(o.size(), 2u);
    EXPECT_EQ(o[0].score, 0.9);
    EXPECT_NEAR(o[1].score, 0.6 * std::exp(-1.0 / 0.2), 1e-12);
    EXPECT_NEAR(o[1].score, 0.00404, 1e-5);
    EXPECT_EQ(o[1].raw_score, 0.6);
}

TEST(GaussianNms, HandComputedPartialOverlap) {
    // IOU 1/3 between the two unit squares.
    const std::vector<FisheyeDetection> d{fd(500, 400, 1, 1, 0.9, 0), fd(500.5, 400, 1, 1, 0.7, 1)};
    for (double a_g : {0.05, 0.2, 1.0}) {
        const auto o = gaussian_soft_nms(d, kC, a_g, 0.0);
        ASSERT_EQ(o.size(), 2u);
        EXPECT_NEAR(o[1].score, 0.7 * std::exp(-(1.0 / 9.0) / a_g), 1e-12);
    }
}

TEST(GaussianNms, DisjointUnchanged) {
    const std::vector<FisheyeDetection> d{fd(500, 400, 20, 40, 0.9, 0), fd(300, 400, 20, 40, 0.6, 1)};
    const auto o = gaussian_soft_nms(d, kC);
    ASSERT_EQ(o.size(), 2u);
    EXPECT_EQ(o[1].score, 0.6);
}

TEST(GaussianNms, MatchesFormulaTranscription) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto d = random_cluttered(seed, 60);
        const auto o = gaussian_soft_nms(d, kC, 0.2, 0.0);
        const auto ref = gnms_oracle(d, 0.2);
        ASSERT_EQ(o.size(), ref.size());
        for (std::size_t i = 0; i < o.size(); ++i) {
            EXPECT_EQ(o[i].id, ref[i].first);
            EXPECT_NEAR(o[i].score, ref[i].second, 1e-12);
        }
    }
}

TEST(GaussianNms, NeverRaisesScoresAndOrdersBySelection) {
    const auto d = random_cluttered(7, 80);
    const auto o = gaussian_soft_nms(d, kC, 0.2, 0.001);
    for (std::size_t i = 0; i < o.size(); ++i) {
        EXPECT_LE(o[i].score, o[i].raw_score);
        EXPECT_GE(o[i].score, 0.001);
        if (i > 0) EXPECT_LE(o[i].score, o[i - 1].score);
    }
}

TEST(GaussianNms, TinyStrengthActsLikeZeroThresholdNms) {
    const auto d = random_cluttered(11, 80);
    const auto soft = gaussian_soft_nms(d, kC, 1e-6, 0.01);
    // Hard NMS that suppresses any positive overlap.
    const auto hard = hard_nms_fisheye(d, kC, 1e-12);
    ASSERT_EQ(soft.size(), hard.size());
    for (std::size_t i = 0; i < soft.size(); ++i) {
        EXPECT_EQ(soft[i].id, hard[i].id);
        EXPECT_EQ(soft[i].score, soft[i].raw_score);
    }
}

TEST(Bbr, CoincidentPair) {
    const std::vector<FisheyeDetection> d{fd(500, 400, 20, 40, 0.9, 0), fd(500, 400, 20, 40, 0.6, 1)};
    const auto o = bbr(d, 32);
    ASSERT_EQ(o.size(), 1u);
    EXPECT_EQ(o[0].score, 0.9);
    EXPECT_EQ(o[0].box, (PolarBox{500, 400, 20, 40}));
}

TEST(Bbr, FarApartStayUnchanged) {
    const std::vector<FisheyeDetection> d{fd(500, 400, 20, 40, 0.9, 0), fd(400, 600, 22, 30, 0.6, 1)};
    const auto o = bbr(d, 32);
    ASSERT_EQ(o.size(), 2u);
    EXPECT_EQ(o[0].box, d[0].box);
    EXPECT_EQ(o[1].box, d[1].box);
    EXPECT_EQ(o[1].score, 0.6);
}

TEST(Bbr, ThreeBoxWeightedAverage) {
    const std::vector<FisheyeDetection> d{fd(500, 400, 20, 40, 0.9, 0), fd(504, 403, 24, 44, 0.5, 1),
                                          fd(498, 396, 18, 38, 0.3, 2)};
    const auto o = bbr(d, 32);
    ASSERT_EQ(o.size(), 1u);
    BoxVec4 sum = BoxVec4::Zero();
    double ws = 0;
    for (const auto& x : d) {
        sum += x.score * to_vec4(x.box);
        ws += x.score;
    }
    const BoxVec4 expect = sum / ws;
    EXPECT_NEAR(o[0].box.cx, expect[0], 1e-12);
    EXPECT_NEAR(o[0].box.cy, expect[1], 1e-12);
    EXPECT_NEAR(o[0].box.w, expect[2], 1e-12);
    EXPECT_NEAR(o[0].box.h, expect[3], 1e-12);
    EXPECT_EQ(o[0].score, 0.9);
}

TEST(Bbr, CountAndProximity) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto d = random_cluttered(seed, 60);
        const double r = 32;
        const auto o = bbr(d, r);
        EXPECT_LE(o.size(), d.size());
        for (const auto& x : o) {
            double best = 1e300;
            for (const auto& y : d) best = std::min(best, std::hypot(x.box.cx - y.box.cx, x.box.cy - y.box.cy));
            EXPECT_LE(best, r);
        }
    }
}

TEST(Stage2, IdempotentForAllMethods) {
    for (auto method : {Stage2Method::hard, Stage2Method::gaussian, Stage2Method::bbr}) {
        NmsConfig cfg;
        cfg.method = method;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto d = random_cluttered(seed, 60);
            const auto once = apply_stage2(d, cfg, kCam);
            const auto twice = apply_stage2(once, cfg, kCam);
            expect_same(once, twice, 1e-9);
        }
    }
}

TEST(Stage2, EmptyInput) {
    for (auto method : {Stage2Method::hard, Stage2Method::gaussian, Stage2Method::bbr}) {
        NmsConfig cfg;
        cfg.method = method;
        EXPECT_TRUE(apply_stage2({}, cfg, kCam).empty());
    }
}

TEST(Stage2, BbrKernelScalesWithImageWidth) {
    NmsConfig cfg;
    cfg.method = Stage2Method::bbr;
    // 0.04 * 800 = 32 px: centers 30 px apart merge, 40 px apart do not.
    const std::vector<FisheyeDetection> close{fd(500, 400, 20, 40, 0.9, 0), fd(530, 400, 20, 40, 0.6, 1)};
    const std::vector<FisheyeDetection> apart{fd(500, 400, 20, 40, 0.9, 0), fd(540, 400, 20, 40, 0.6, 1)};
    EXPECT_EQ(apply_stage2(close, cfg, kCam).size(), 1u);
    EXPECT_EQ(apply_stage2(apart, cfg, kCam).size(), 2u);
}

TEST(NmsConfig, Validation) {
    NmsConfig ok;
    EXPECT_NO_THROW(ok.validate());
    NmsConfig bad = ok;
    bad.a_g = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = ok;
    bad.hard_iou = 1.5;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = ok;
    bad.stage1_iou = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    EXPECT_EQ(parse_stage2_method("gnms"), Stage2Method::gaussian);
    EXPECT_EQ(parse_stage2_method("bbr"), Stage2Method::bbr);
    EXPECT_EQ(parse_stage2_method("hard"), Stage2Method::hard);
    EXPECT_THROW(parse_stage2_method("soft"), ConfigError);
}

TEST(Bbr, SecondPassChangesNothingOnDenseClutter) {
    // Dense enough that one merge round leaves merged centers within the
    // kernel of each other.
    int changed_by_merge = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto d = random_cluttered(100 + seed, 150);
        const auto once = bbr(d, 32);
        changed_by_merge += once.size() < d.size();
        expect_same(once, bbr(once, 32), 0.0);
    }
    EXPECT_GT(changed_by_merge, 0);
}
