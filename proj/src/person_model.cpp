#include "fpw/person_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "fpw/error.hpp"

namespace fpw {

Vec2 project_point(const Vec3& p, const FisheyeCamera& cam) {
    const double transverse = std::hypot(p.x(), p.y());
    if (transverse == 0.0) return cam.center();
    const double theta = std::atan2(transverse, p.z());
    const double r = cam.radius * theta / cam.max_angle;
    return {cam.center_x + r * p.x() / transverse, cam.center_y + r * p.y() / transverse};
}

std::optional<PolarBox> project_cylinder(const CylinderPerson& person, const SceneParams& scene,
                                         const FisheyeCamera& cam, const SilhouetteSampling& sampling) {
    if (!(person.height > 0.0 && person.diameter > 0.0)) throw DomainError("person size must be positive");
    if (!(scene.camera_height > person.height)) throw DomainError("person must be below the camera");

    const double rad = 0.5 * person.diameter;
    const double z_floor = scene.camera_height;
    const double z_head = scene.camera_height - person.height;
    const Vec2 ground(person.ground_x, person.ground_y);

    std::vector<Vec2> pts;
    pts.reserve(2 * sampling.circle_samples + 2 * sampling.edge_samples);
    bool any_in_view = false;
    auto add = [&](const Vec3& p) {
        const double theta = std::atan2(std::hypot(p.x(), p.y()), p.z());
        if (theta <= cam.max_angle) any_in_view = true;
        pts.push_back(project_point(p, cam));
    };

    // Rim samples start at the person's azimuth so that the sample set, and
    // with it the box, rotates exactly with the person.
    const double psi = std::atan2(ground.y(), ground.x());
    for (int i = 0; i < sampling.circle_samples; ++i) {
        const double a = psi + 2.0 * kPi * i / sampling.circle_samples;
        const double x = ground.x() + rad * std::cos(a);
        const double y = ground.y() + rad * std::sin(a);
        add({x, y, z_floor});
        add({x, y, z_head});
    }
    // Silhouette generators: where the view from the camera's vertical axis
    // grazes the cylinder side.
    const double dist = ground.norm();
    if (dist > rad && sampling.edge_samples > 1) {
        const double off = std::acos(-rad / dist);
        for (double a : {psi + off, psi - off}) {
            const double x = ground.x() + rad * std::cos(a);
            const double y = ground.y() + rad * std::sin(a);
            for (int i = 0; i < sampling.edge_samples; ++i) {
                add({x, y, z_head + (z_floor - z_head) * i / (sampling.edge_samples - 1)});
            }
        }
    }
    if (!any_in_view) return std::nullopt;

    const Vec2 c = cam.center();
    Vec2 centroid = Vec2::Zero();
    for (const auto& p : pts) centroid += p;
    centroid /= static_cast<double>(pts.size());
    const Vec2 u = radial_axis(centroid, c).value_or(Vec2(0.0, 1.0));
    const Vec2 t(-u.y(), u.x());

    double smin = std::numeric_limits<double>::infinity(), smax = -smin;
    double tmin = smin, tmax = -smin;
    for (const auto& p : pts) {
        const Vec2 d = p - c;
        const double s = d.dot(u);
        const double q = d.dot(t);
        smin = std::min(smin, s);
        smax = std::max(smax, s);
        tmin = std::min(tmin, q);
        tmax = std::max(tmax, q);
    }
    const Vec2 center = c + 0.5 * (smin + smax) * u + 0.5 * (tmin + tmax) * t;
    return PolarBox{center.x(), center.y(), tmax - tmin, smax - smin};
}

std::string target_param_id(const SceneParams& scene, const PersonTemplate& person) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "h%.2f_d%.2f_cam%.2f", person.height, person.diameter, scene.camera_height);
    return buf;
}

std::vector<TargetParams> default_target_grid() {
    std::vector<TargetParams> grid;
    for (double cam_h : {2.75, 3.25}) {
        for (double h : {1.3, 1.5, 1.7}) {
            for (double d : {0.45, 0.6}) grid.push_back({SceneParams{cam_h}, PersonTemplate{h, d}});
        }
    }
    return grid;
}

namespace {

struct RingSample {
    double dist;
    PolarBox box;       // on the +x ground axis
    double center_radius;
};

std::optional<RingSample> sample_at(double dist, const SceneParams& scene, const PersonTemplate& person,
                                    const FisheyeCamera& cam) {
    const auto box = project_cylinder({dist, 0.0, person.height, person.diameter}, scene, cam);
    if (!box) return std::nullopt;
    return RingSample{dist, *box, std::hypot(box->cx - cam.center_x, box->cy - cam.center_y)};
}

}  // namespace

TargetBoxSet generate_target_boxes(const SceneParams& scene, const PersonTemplate& person,
                                   const FisheyeCamera& cam, double overlap, double min_height) {
    if (!(overlap > 0.0 && overlap < 1.0)) throw DomainError("overlap must be in (0, 1)");
    cam.validate();

    TargetBoxSet set;
    set.param_id = target_param_id(scene, person);
    set.scene = scene;
    set.person = person;

    const double step = 1.0 - overlap;
    // Ground distance beyond which nothing of interest remains (theta ~ 89.9 deg at the feet).
    const double max_dist = scene.camera_height * 1000.0;

    auto emit_ring = [&](const RingSample& r) {
        TargetRing ring{r.dist, r.center_radius, r.box.w, r.box.h, 1};
        if (r.center_radius > 0.0) {
            ring.count = std::max(1, static_cast<int>(std::ceil(2.0 * kPi * r.center_radius / (step * r.box.w))));
        }
        for (int i = 0; i < ring.count; ++i) {
            const double a = 2.0 * kPi * i / ring.count;
            set.boxes.push_back({cam.center_x + r.center_radius * std::cos(a),
                                 cam.center_y + r.center_radius * std::sin(a), r.box.w, r.box.h});
        }
        set.rings.push_back(ring);
    };

    auto cur = sample_at(0.0, scene, person, cam);
    if (!cur) return set;
    emit_ring(*cur);
    double prev_h = cur->box.h;

    while (true) {
        // Radial spacing must not exceed step * min(h_cur, h_next).
        auto gap = [&](const RingSample& nxt) {
            return (nxt.center_radius - cur->center_radius) - step * std::min(cur->box.h, nxt.box.h);
        };
        double lo = cur->dist;
        double hi = cur->dist + 0.05;
        std::optional<RingSample> hi_s = sample_at(hi, scene, person, cam);
        while (hi_s && gap(*hi_s) <= 0.0 && hi < max_dist) {
            lo = hi;
            hi = cur->dist + 2.0 * (hi - cur->dist);
            hi_s = sample_at(hi, scene, person, cam);
        }
        if (!hi_s || hi >= max_dist) break;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            const auto s = sample_at(mid, scene, person, cam);
            if (s && gap(*s) <= 0.0) lo = mid; else hi = mid;
        }
        if (lo <= cur->dist) break;
        auto nxt = sample_at(lo, scene, person, cam);
        if (!nxt) break;
        const bool shrinking = nxt->box.h < prev_h;
        if (nxt->center_radius - 0.5 * nxt->box.h > cam.radius) break;
        if (shrinking && nxt->box.h < min_height) break;
        prev_h = nxt->box.h;
        cur = nxt;
        emit_ring(*cur);
    }
    return set;
}

}  // namespace fpw
