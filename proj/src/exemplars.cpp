#include "fpw/exemplars.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "fpw/error.hpp"
#include "fpw/parallel.hpp"

namespace fpw {

namespace {

constexpr const char* kCacheFormat = "fpw-exemplars-2";

struct EllipseSamples {
    std::vector<Vec3> rays;  // in-circle samples
    std::size_t total = 0;   // all samples, including those outside the fisheye circle
};

/// Samples inside the ellipse inscribed in `box`, on a lattice aligned with
/// the box axes, centered on the box center, with the given spacing in
/// pixels. Aligning with the box (not the image grid) makes the sample set
/// rotate exactly with the target. Samples outside the fisheye circle count
/// toward the total but yield no ray. Returns the count only when `rays` is
/// null.
std::size_t enumerate_ellipse(const PolarBox& box, const FisheyeCamera& cam, double spacing,
                              std::vector<Vec3>* rays) {
    const Vec2 c(box.cx, box.cy);
    const Vec2 u = radial_axis(c, cam.center()).value_or(Vec2(0.0, 1.0));
    const Vec2 t(-u.y(), u.x());
    const double a = 0.5 * box.h;
    const double b = 0.5 * box.w;
    const int ns = static_cast<int>(std::floor(a / spacing));
    const int nt = static_cast<int>(std::floor(b / spacing));
    const double r2 = cam.radius * cam.radius;

    std::size_t total = 0;
    for (int i = -ns; i <= ns; ++i) {
        const double s = i * spacing;
        for (int j = -nt; j <= nt; ++j) {
            const double q = j * spacing;
            if ((s * s) / (a * a) + (q * q) / (b * b) > 1.0) continue;
            ++total;
            if (!rays) continue;
            const Vec2 p = c + s * u + q * t;
            if ((p - cam.center()).squaredNorm() > r2) continue;
            rays->push_back(fisheye_to_ray(p.x(), p.y(), cam));
        }
    }
    return total;
}

EllipseSamples sample_ellipse(const PolarBox& box, const FisheyeCamera& cam, int max_samples) {
    EllipseSamples out;
    double spacing = 1.0;
    if (max_samples > 0) {
        const double area = kPi * 0.25 * box.w * box.h;
        spacing = std::max(1.0, std::sqrt(area / max_samples));
        while (enumerate_ellipse(box, cam, spacing, nullptr) > static_cast<std::size_t>(max_samples)) {
            spacing *= 1.02;
        }
    }
    out.total = enumerate_ellipse(box, cam, spacing, &out.rays);
    return out;
}

ReferenceResult reference_from_samples(const EllipseSamples& samples, const PatchProjector& proj,
                                       double min_containment) {
    ReferenceResult res;
    if (samples.total == 0) return res;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    std::size_t kept = 0;
    for (const Vec3& ray : samples.rays) {
        const PatchPoint p = proj.to_patch(ray);
        if (!p.inside()) continue;
        ++kept;
        x0 = std::min(x0, p.xp);
        x1 = std::max(x1, p.xp);
        y0 = std::min(y0, p.yp);
        y1 = std::max(y1, p.yp);
    }
    res.containment = static_cast<double>(kept) / static_cast<double>(samples.total);
    if (kept == 0 || res.containment < min_containment) return res;
    res.reference = AxisBox{0.5 * (x0 + 1.0), 0.5 * (y0 + 1.0), 0.5 * (x1 + 1.0), 0.5 * (y1 + 1.0)};
    return res;
}

}  // namespace

ReferenceResult build_reference_box(const PolarBox& target, const PatchSpec& spec, const FisheyeCamera& cam,
                                    const ExemplarParams& params) {
    return reference_from_samples(sample_ellipse(target, cam, params.max_samples), PatchProjector(spec),
                                  params.min_containment);
}

ReferenceResult build_reference_box_full(const PolarBox& target, const PatchSpec& spec,
                                         const FisheyeCamera& cam, double min_containment) {
    return reference_from_samples(sample_ellipse(target, cam, 0), PatchProjector(spec), min_containment);
}

std::vector<ExemplarSet> build_exemplar_sets(const CompositeLayout& layout, std::span<const TargetBoxSet> targets,
                                             const FisheyeCamera& cam, const ExemplarParams& params,
                                             unsigned workers) {
    const auto specs = layout_patch_specs(layout);
    std::vector<PatchProjector> projectors(specs.begin(), specs.end());

    std::vector<const PolarBox*> boxes;
    for (const auto& set : targets) {
        for (const auto& b : set.boxes) {
            if (b.h >= params.min_target_height) boxes.push_back(&b);
        }
    }

    // results[i * n_patches + k]
    const std::size_t np = projectors.size();
    std::vector<ReferenceResult> results(boxes.size() * np);
    parallel_for(boxes.size(), workers, [&](std::size_t i) {
        const EllipseSamples samples = sample_ellipse(*boxes[i], cam, params.max_samples);
        for (std::size_t k = 0; k < np; ++k) {
            results[i * np + k] = reference_from_samples(samples, projectors[k], params.min_containment);
        }
    });

    std::vector<ExemplarSet> sets(np);
    for (std::size_t k = 0; k < np; ++k) {
        sets[k].patch_index = static_cast<int>(k);
        sets[k].spec = specs[k];
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            const auto& r = results[i * np + k];
            if (r.reference) sets[k].exemplars.push_back({*boxes[i], *r.reference, r.containment});
        }
    }
    return sets;
}

ExemplarSet build_exemplar_set(int patch_index, const PatchSpec& spec, std::span<const TargetBoxSet> targets,
                               const FisheyeCamera& cam, const ExemplarParams& params) {
    const PatchProjector proj(spec);
    ExemplarSet set;
    set.patch_index = patch_index;
    set.spec = spec;
    for (const auto& ts : targets) {
        for (const auto& b : ts.boxes) {
            if (b.h < params.min_target_height) continue;
            const auto r = reference_from_samples(sample_ellipse(b, cam, params.max_samples), proj,
                                                  params.min_containment);
            if (r.reference) set.exemplars.push_back({b, *r.reference, r.containment});
        }
    }
    return set;
}

std::vector<TargetBoxSet> generate_target_grid(const FisheyeCamera& cam, double overlap,
                                               const std::vector<TargetParams>& grid, double min_height) {
    std::vector<TargetBoxSet> sets;
    sets.reserve(grid.size());
    for (const auto& p : grid) sets.push_back(generate_target_boxes(p.scene, p.person, cam, overlap, min_height));
    return sets;
}

std::uint64_t exemplar_config_hash(const FisheyeCamera& cam, const CompositeLayout& l, double overlap,
                                   const std::vector<TargetParams>& grid, const ExemplarParams& params) {
    std::ostringstream os;
    os.precision(17);
    os << kCacheFormat << '|' << cam.center_x << ',' << cam.center_y << ',' << cam.radius << ','
       << cam.max_angle << ',' << cam.image_width << ',' << cam.image_height << '|' << l.n_patches << ','
       << l.patch_w << ',' << l.patch_h << ',' << l.columns << ',' << l.rows << ',' << l.composite_size << ','
       << l.phi2_base << ',' << l.phi2_step << ',' << l.phi1 << ',' << l.alpha_x << ',' << l.alpha_y << '|'
       << overlap << '|' << params.min_containment << ',' << params.min_target_height << ','
       << params.max_samples;
    for (const auto& g : grid) {
        os << '|' << g.scene.camera_height << ',' << g.person.height << ',' << g.person.diameter;
    }
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : os.str()) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

void save_exemplar_cache(const std::filesystem::path& path, std::span<const ExemplarSet> sets,
                         std::uint64_t config_hash) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream os(tmp);
        if (!os) throw DataError("cannot write exemplar cache: " + path.string());
        nlohmann::json header = {{"format", kCacheFormat}, {"hash", hash_hex(config_hash)},
                                 {"patches", sets.size()}};
        os << header.dump() << '\n';
        for (const auto& set : sets) {
            for (const auto& e : set.exemplars) {
                nlohmann::json j = {
                    {"patch", set.patch_index},
                    {"target", {{"cx", e.target.cx}, {"cy", e.target.cy}, {"w", e.target.w}, {"h", e.target.h}}},
                    {"ref", {e.reference.x0, e.reference.y0, e.reference.x1, e.reference.y1}},
                    {"fc", e.containment}};
                os << j.dump() << '\n';
            }
        }
        if (!os) throw DataError("exemplar cache write failed: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

std::vector<ExemplarSet> load_exemplar_cache(const std::filesystem::path& path, std::uint64_t expected_hash,
                                             const CompositeLayout& layout) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open exemplar cache: " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw DataError("empty exemplar cache: " + path.string());
    std::vector<ExemplarSet> sets;
    std::size_t line_no = 1;
    try {
        const auto header = nlohmann::json::parse(line);
        if (header.at("format").get<std::string>() != kCacheFormat) throw DataError("unknown exemplar cache format");
        if (header.at("hash").get<std::string>() != hash_hex(expected_hash)) {
            throw DataError("exemplar cache was built for a different camera/layout configuration");
        }
        const auto n = header.at("patches").get<std::size_t>();
        if (n != static_cast<std::size_t>(layout.n_patches)) throw DataError("exemplar cache patch count mismatch");
        const auto specs = layout_patch_specs(layout);
        sets.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            sets[k].patch_index = static_cast<int>(k);
            sets[k].spec = specs[k];
        }
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            const auto k = j.at("patch").get<std::size_t>();
            if (k >= n) throw DataError("exemplar patch index out of range");
            const auto& t = j.at("target");
            const auto& r = j.at("ref");
            sets[k].exemplars.push_back({{t.at("cx").get<double>(), t.at("cy").get<double>(),
                                          t.at("w").get<double>(), t.at("h").get<double>()},
                                         {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>(),
                                          r.at(3).get<double>()},
                                         j.at("fc").get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    return sets;
}

}  // namespace fpw
