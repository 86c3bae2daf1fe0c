#include <gtest/gtest.h>

#include "fpw/error.hpp"
#include "fpw/synth.hpp"

using namespace fpw;

namespace {

const FisheyeCamera kCam = FisheyeCamera::centered(400, 400, 200.0);
const CompositeLayout kLayout;

SyntheticScene one_person(double x, double y, std::uint8_t gray = 220) {
    SyntheticScene s;
    s.persons.push_back({CylinderPerson{x, y, 1.7, 0.5}, gray});
    return s;
}

/// Independent ray test: nearest hit of the side wall or top cap.
bool oracle_hits(const Vec3& d, const CylinderPerson& p, double cam_h) {
    const double r = 0.5 * p.diameter;
    const double top = cam_h - p.height;
    // Top cap, plane z = top.
    if (d.z() > 0) {
        const double t = top / d.z();
        if (std::hypot(t * d.x() - p.ground_x, t * d.y() - p.ground_y) <= r) return true;
    }
    // Side: |(t dx, t dy) - g| = r with top <= t dz <= cam_h.
    const double a = d.x() * d.x() + d.y() * d.y();
    if (a == 0) return false;
    const double b = -2 * (d.x() * p.ground_x + d.y() * p.ground_y);
    const double c = p.ground_x * p.ground_x + p.ground_y * p.ground_y - r * r;
    const double disc = b * b - 4 * a * c;
    if (disc < 0) return false;
    for (double t : {(-b - std::sqrt(disc)) / (2 * a), (-b + std::sqrt(disc)) / (2 * a)}) {
        if (t <= 0) continue;
        const double z = t * d.z();
        if (z >= top && z <= cam_h) return true;
    }
    return false;
}

}  // namespace

TEST(Render, EmptySceneIsBackground) {
    SyntheticScene s;
    s.background = 77;
    const auto r = render_fisheye(s, kCam);
    EXPECT_TRUE(r.gt.boxes.empty());
    ASSERT_EQ(r.image.width, 400);
    ASSERT_EQ(r.image.height, 400);
    for (int y = 0; y < 400; ++y) {
        for (int x = 0; x < 400; ++x) {
            const bool in = std::hypot(x + 0.5 - 200, y + 0.5 - 200) <= 199;
            const bool out = std::hypot(x + 0.5 - 200, y + 0.5 - 200) > 201;
            if (in) EXPECT_EQ(r.image.at(x, y), 77);
            if (out) EXPECT_EQ(r.image.at(x, y), 0);
        }
    }
}

TEST(Render, NadirPersonIsCenteredDisk) {
    const auto r = render_fisheye(one_person(0, 0), kCam);
    double sx = 0, sy = 0, n = 0, rmax = 0;
    for (int y = 0; y < 400; ++y) {
        for (int x = 0; x < 400; ++x) {
            if (r.image.at(x, y) != 220) continue;
            sx += x + 0.5;
            sy += y + 0.5;
            n += 1;
            rmax = std::max(rmax, std::hypot(x + 0.5 - 200, y + 0.5 - 200));
        }
    }
    ASSERT_GT(n, 100);
    EXPECT_NEAR(sx / n, 200, 0.05);
    EXPECT_NEAR(sy / n, 200, 0.05);
    // Filled disk: area close to pi rmax^2.
    EXPECT_NEAR(n / (kPi * rmax * rmax), 1.0, 0.1);
    ASSERT_EQ(r.gt.boxes.size(), 1u);
    EXPECT_NEAR(r.gt.boxes[0].w, 2 * rmax, 2.0);
}

TEST(Render, SilhouetteBoxAgreesWithProjection) {
    const std::vector<std::pair<double, double>> spots{{1, 0}, {0, -2}, {-2.5, 1.5}, {3, 3}, {0.3, 0.6}};
    for (const auto& [x, y] : spots) {
        const auto r = render_fisheye(one_person(x, y), kCam);
        std::vector<Vec2> px;
        Vec2 m = Vec2::Zero();
        for (int j = 0; j < 400; ++j) {
            for (int i = 0; i < 400; ++i) {
                if (r.image.at(i, j) != 220) continue;
                px.emplace_back(i + 0.5, j + 0.5);
                m += px.back();
            }
        }
        ASSERT_FALSE(px.empty());
        m /= static_cast<double>(px.size());
        const Vec2 u = (m - kCam.center()).normalized();
        const Vec2 t(-u.y(), u.x());
        double s0 = 1e300, s1 = -1e300, t0 = 1e300, t1 = -1e300;
        for (const auto& p : px) {
            const Vec2 d = p - kCam.center();
            s0 = std::min(s0, d.dot(u) - 0.5);
            s1 = std::max(s1, d.dot(u) + 0.5);
            t0 = std::min(t0, d.dot(t) - 0.5);
            t1 = std::max(t1, d.dot(t) + 0.5);
        }
        const Vec2 c = kCam.center() + 0.5 * (s0 + s1) * u + 0.5 * (t0 + t1) * t;
        const PolarBox blob{c.x(), c.y(), t1 - t0, s1 - s0};
        EXPECT_GE(iou_rotated(blob, r.gt.boxes.at(0), kCam), 0.9) << x << "," << y;
    }
}

TEST(Render, SilhouetteMatchesRayCastOracle) {
    SyntheticScene s = one_person(1.2, -0.7, 200);
    s.persons.push_back({CylinderPerson{-2.0, 1.0, 1.5, 0.6}, 240});
    const auto r = render_fisheye(s, kCam);
    auto label = [&](int x, int y) {
        return static_cast<int>(r.image.at(x, y));
    };
    int mismatches = 0, far_mismatches = 0;
    for (int y = 1; y < 399; ++y) {
        for (int x = 1; x < 399; ++x) {
            if (std::hypot(x + 0.5 - 200, y + 0.5 - 200) > 198) continue;
            const Vec3 ray = fisheye_to_ray(x + 0.5, y + 0.5, kCam);
            for (std::size_t k = 0; k < s.persons.size(); ++k) {
                const bool hit = oracle_hits(ray, s.persons[k].person, s.scene.camera_height);
                const bool drawn = label(x, y) == s.persons[k].gray;
                if (hit == drawn) continue;
                ++mismatches;
                bool boundary = false;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) boundary |= (label(x + dx, y + dy) == s.persons[k].gray) != drawn;
                far_mismatches += !boundary;
            }
        }
    }
    EXPECT_EQ(far_mismatches, 0);
    EXPECT_LT(mismatches, 50);
}

TEST(Render, Deterministic) {
    auto s = random_scene(5);
    s.noise_sigma = 4.0;
    s.seed = 99;
    const auto a = render_fisheye(s, kCam);
    const auto b = render_fisheye(s, kCam);
    EXPECT_EQ(a.image, b.image);
    s.seed = 100;
    EXPECT_NE(render_fisheye(s, kCam).image, a.image);
}

TEST(Render, ResolutionMustMatchCamera) {
    auto s = one_person(1, 0);
    s.width = 300;
    s.height = 300;
    EXPECT_THROW(render_fisheye(s, kCam), DataError);
    s.width = 400;
    s.height = 400;
    EXPECT_NO_THROW(render_fisheye(s, kCam));
}

TEST(RayHit, StraightDownOnNadir) {
    const CylinderPerson p{0, 0, 1.7, 0.5};
    const auto t = ray_hit_cylinder(Vec3(0, 0, 1), p, SceneParams{3.0});
    ASSERT_TRUE(t);
    EXPECT_NEAR(*t, 1.3, 1e-12);
    EXPECT_FALSE(ray_hit_cylinder(Vec3(1, 0, 0.2).normalized(), CylinderPerson{-2, 0, 1.7, 0.5}, SceneParams{3.0}));
}

TEST(PerfectDetections, StraddlingPersonInTwoPatches) {
    const double a = deg2rad(22.5);
    const auto d = perfect_detections_detailed(one_person(2.0 * std::cos(a), 2.0 * std::sin(a)), kCam, kLayout);
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d[0].det.patch, 0);
    EXPECT_EQ(d[1].det.patch, 1);
    for (const auto& x : d) {
        EXPECT_EQ(x.det.score, 1.0);
        EXPECT_GE(x.visible_fraction, 0.3);
        EXPECT_GE(x.det.box.x0, 0.0);
        EXPECT_LE(x.det.box.x1, 152.0);
        EXPECT_GE(x.det.box.y0, 0.0);
        EXPECT_LE(x.det.box.y1, 304.0);
    }
    EXPECT_NEAR(d[0].det.box.width(), d[1].det.box.width(), 1.5);
    EXPECT_NEAR(d[0].det.box.x0, 152 - d[1].det.box.x1, 1.5);
}

TEST(PerfectDetections, OutOfViewGivesNothing) {
    EXPECT_TRUE(perfect_detections(one_person(60, 0), kCam, kLayout).empty());
}

TEST(PerfectDetections, VisibilityCutoff) {
    const auto s = one_person(1.0, 0);
    const auto all = perfect_detections_detailed(s, kCam, kLayout, 0.0);
    const auto cut = perfect_detections_detailed(s, kCam, kLayout, 0.3);
    EXPECT_GT(all.size(), cut.size());
    for (const auto& x : cut) EXPECT_GE(x.visible_fraction, 0.3);
}

TEST(PerfectDetections, CompositeOffset) {
    const PatchDetection d{5, AxisBox{10, 20, 30, 60}, 1.0, 0};
    const AxisBox c = patch_box_to_composite(d, kLayout);
    EXPECT_EQ(c, (AxisBox{152 + 10, 304 + 20, 152 + 30, 304 + 60}));
}

TEST(RandomScene, SeededAndNonIntersecting) {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const auto s = random_scene(seed);
        EXPECT_GE(s.persons.size(), 1u);
        EXPECT_LE(s.persons.size(), 6u);
        for (std::size_t i = 0; i < s.persons.size(); ++i) {
            const auto& p = s.persons[i].person;
            const double r = std::hypot(p.ground_x, p.ground_y);
            EXPECT_GE(r, 0.5);
            EXPECT_LE(r, 4.0);
            for (std::size_t j = i + 1; j < s.persons.size(); ++j) {
                const auto& q = s.persons[j].person;
                EXPECT_GT(std::hypot(p.ground_x - q.ground_x, p.ground_y - q.ground_y), 0.5 * (p.diameter + q.diameter));
            }
        }
        const auto again = random_scene(seed);
        ASSERT_EQ(again.persons.size(), s.persons.size());
        for (std::size_t i = 0; i < s.persons.size(); ++i) EXPECT_EQ(again.persons[i].person.ground_x, s.persons[i].person.ground_x);
    }
}
