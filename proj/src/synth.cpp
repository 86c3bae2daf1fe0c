#include "fpw/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "fpw/error.hpp"

namespace fpw {

std::optional<double> ray_hit_cylinder(const Vec3& dir, const CylinderPerson& p, const SceneParams& scene) {
    const double rad = 0.5 * p.diameter;
    const double z_head = scene.camera_height - p.height;
    const double z_floor = scene.camera_height;
    std::optional<double> best;
    auto consider = [&](double t) {
        if (t > 0.0 && (!best || t < *best)) best = t;
    };

    // Top cap.
    if (dir.z() > 0.0) {
        const double t = z_head / dir.z();
        const double dx = t * dir.x() - p.ground_x;
        const double dy = t * dir.y() - p.ground_y;
        if (dx * dx + dy * dy <= rad * rad) consider(t);
    }
    // Side: |t * dir_xy - g|^2 = rad^2, entering root.
    const double a = dir.x() * dir.x() + dir.y() * dir.y();
    if (a > 0.0) {
        const double b = -2.0 * (dir.x() * p.ground_x + dir.y() * p.ground_y);
        const double c = p.ground_x * p.ground_x + p.ground_y * p.ground_y - rad * rad;
        const double disc = b * b - 4.0 * a * c;
        if (disc >= 0.0 && c > 0.0) {
            const double t = (-b - std::sqrt(disc)) / (2.0 * a);
            const double z = t * dir.z();
            if (z >= z_head && z <= z_floor) consider(t);
        }
    }
    return best;
}

RenderedScene render_fisheye(const SyntheticScene& scene, const FisheyeCamera& cam, const std::string& image_id) {
    cam.validate();
    if ((scene.width != 0 && scene.width != cam.image_width) ||
        (scene.height != 0 && scene.height != cam.image_height)) {
        throw DataError("scene resolution differs from the camera image size");
    }
    RenderedScene out;
    out.image = Image(cam.image_width, cam.image_height, 1, 0);
    out.gt.image_id = image_id;
    const double r2 = cam.radius * cam.radius;
    for (int y = 0; y < cam.image_height; ++y) {
        for (int x = 0; x < cam.image_width; ++x) {
            const double px = x + 0.5;
            const double py = y + 0.5;
            const double dx = px - cam.center_x;
            const double dy = py - cam.center_y;
            if (dx * dx + dy * dy > r2) continue;
            const Vec3 dir = fisheye_to_ray(px, py, cam);
            double nearest = std::numeric_limits<double>::infinity();
            std::uint8_t gray = scene.background;
            if (dir.z() <= 0.0) gray = 0;  // at or above the horizon: no ground
            for (const auto& sp : scene.persons) {
                if (auto t = ray_hit_cylinder(dir, sp.person, scene.scene); t && *t < nearest) {
                    nearest = *t;
                    gray = sp.gray;
                }
            }
            out.image.at(x, y) = gray;
        }
    }
    if (scene.noise_sigma > 0.0) {
        std::mt19937_64 rng(scene.seed);
        std::normal_distribution<double> noise(0.0, scene.noise_sigma);
        for (auto& v : out.image.data) v = static_cast<std::uint8_t>(std::clamp(v + noise(rng), 0.0, 255.0));
    }
    for (std::size_t i = 0; i < scene.persons.size(); ++i) {
        if (auto box = project_cylinder(scene.persons[i].person, scene.scene, cam)) {
            out.gt.boxes.push_back(*box);
            out.gt_person.push_back(static_cast<int>(i));
        }
    }
    return out;
}

namespace {

/// Rays through the silhouette of one person, supersampled 2x2 per pixel.
std::vector<Vec3> silhouette_rays(const ScenePerson& sp, const SceneParams& scene, const FisheyeCamera& cam) {
    std::vector<Vec3> rays;
    const auto box = project_cylinder(sp.person, scene, cam);
    if (!box) return rays;
    const double reach = 0.5 * std::hypot(box->w, box->h) + 2.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(box->cx - reach)));
    const int x1 = std::min(cam.image_width - 1, static_cast<int>(std::ceil(box->cx + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(box->cy - reach)));
    const int y1 = std::min(cam.image_height - 1, static_cast<int>(std::ceil(box->cy + reach)));
    const double r2 = cam.radius * cam.radius;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            for (int sy = 0; sy < 2; ++sy) {
                for (int sx = 0; sx < 2; ++sx) {
                    const double px = x + 0.25 + 0.5 * sx;
                    const double py = y + 0.25 + 0.5 * sy;
                    const double dx = px - cam.center_x;
                    const double dy = py - cam.center_y;
                    if (dx * dx + dy * dy > r2) continue;
                    const Vec3 dir = fisheye_to_ray(px, py, cam);
                    if (ray_hit_cylinder(dir, sp.person, scene)) rays.push_back(dir);
                }
            }
        }
    }
    return rays;
}

}  // namespace

std::vector<SyntheticDetection> perfect_detections_detailed(const SyntheticScene& scene, const FisheyeCamera& cam,
                                                            const CompositeLayout& layout, double min_visible) {
    const auto specs = layout_patch_specs(layout);
    std::vector<PatchProjector> projectors(specs.begin(), specs.end());
    std::vector<SyntheticDetection> out;
    std::size_t next_id = 0;
    for (std::size_t i = 0; i < scene.persons.size(); ++i) {
        const auto rays = silhouette_rays(scene.persons[i], scene.scene, cam);
        if (rays.empty()) continue;
        for (std::size_t k = 0; k < projectors.size(); ++k) {
            double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
            std::size_t inside = 0;
            for (const auto& r : rays) {
                const PatchPoint p = projectors[k].to_patch(r);
                if (!p.inside()) continue;
                ++inside;
                x0 = std::min(x0, p.xp);
                x1 = std::max(x1, p.xp);
                y0 = std::min(y0, p.yp);
                y1 = std::max(y1, p.yp);
            }
            const double frac = static_cast<double>(inside) / rays.size();
            if (inside == 0 || frac < min_visible) continue;
            const auto& s = specs[k];
            AxisBox box{relative_to_pixel(x0, s.width_px), relative_to_pixel(y0, s.height_px),
                        relative_to_pixel(x1, s.width_px), relative_to_pixel(y1, s.height_px)};
            if (!(box.width() > 0.0 && box.height() > 0.0)) continue;
            out.push_back({PatchDetection{static_cast<int>(k), box, 1.0, next_id++}, static_cast<int>(i), frac});
        }
    }
    return out;
}

std::vector<PatchDetection> perfect_detections(const SyntheticScene& scene, const FisheyeCamera& cam,
                                               const CompositeLayout& layout, double min_visible) {
    std::vector<PatchDetection> out;
    for (const auto& d : perfect_detections_detailed(scene, cam, layout, min_visible)) out.push_back(d.det);
    return out;
}

AxisBox patch_box_to_composite(const PatchDetection& det, const CompositeLayout& layout) {
    const double ox = layout.cell_x(det.patch);
    const double oy = layout.cell_y(det.patch);
    return {det.box.x0 + ox, det.box.y0 + oy, det.box.x1 + ox, det.box.y1 + oy};
}

SyntheticScene random_scene(std::uint64_t seed, const RandomSceneParams& p) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> count(p.min_persons, p.max_persons);
    std::uniform_real_distribution<double> radius(p.min_radius, p.max_radius);
    std::uniform_real_distribution<double> azimuth(0.0, 2.0 * kPi);
    std::uniform_real_distribution<double> height(p.min_height, p.max_height);
    std::uniform_real_distribution<double> diameter(p.min_diameter, p.max_diameter);
    std::uniform_int_distribution<int> gray(170, 250);

    SyntheticScene scene;
    scene.scene.camera_height = p.camera_height;
    scene.seed = seed;
    const int n = count(rng);
    for (int attempt = 0; static_cast<int>(scene.persons.size()) < n && attempt < 1000; ++attempt) {
        const double r = radius(rng);
        const double a = azimuth(rng);
        CylinderPerson person{r * std::cos(a), r * std::sin(a), height(rng), diameter(rng)};
        const bool clear = std::none_of(scene.persons.begin(), scene.persons.end(), [&](const ScenePerson& o) {
            const double gap = std::hypot(o.person.ground_x - person.ground_x, o.person.ground_y - person.ground_y);
            return gap < 0.5 * (o.person.diameter + person.diameter) + 0.1;
        });
        if (clear) scene.persons.push_back({person, static_cast<std::uint8_t>(gray(rng))});
    }
    return scene;
}

}  // namespace fpw
