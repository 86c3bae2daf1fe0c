#include "fpw/compositor.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>

#include "fpw/error.hpp"

namespace fpw {

CompositeLayout CompositeLayout::with_grid(int columns, int rows, int patch_w, int patch_h) {
    CompositeLayout l;
    l.columns = columns;
    l.rows = rows;
    l.n_patches = columns * rows;
    l.patch_w = patch_w;
    l.patch_h = patch_h;
    l.composite_size = columns * patch_w;
    l.phi2_step = 2.0 * kPi / l.n_patches;
    return l;
}

void CompositeLayout::validate() const {
    if (columns <= 0 || rows <= 0 || patch_w <= 0 || patch_h <= 0) throw ConfigError("layout dimensions must be positive");
    if (n_patches != columns * rows) throw ConfigError("n_patches must equal columns * rows");
    if (columns * patch_w != composite_size || rows * patch_h != composite_size) {
        throw ConfigError("patch grid does not tile the square composite");
    }
    if (std::abs(phi2_step * n_patches - 2.0 * kPi) > 1e-9) throw ConfigError("phi2_step must be 2*pi / n_patches");
    PatchSpec probe{phi1, phi2_base, alpha_x, alpha_y, patch_w, patch_h};
    probe.validate();
}

std::vector<PatchSpec> layout_patch_specs(const CompositeLayout& layout) {
    layout.validate();
    std::vector<PatchSpec> specs;
    specs.reserve(layout.n_patches);
    for (int k = 0; k < layout.n_patches; ++k) {
        specs.push_back({layout.phi1, layout.phi2_base + k * layout.phi2_step, layout.alpha_x,
                         layout.alpha_y, layout.patch_w, layout.patch_h});
    }
    return specs;
}

std::string lut_key(const PatchSpec& s, const FisheyeCamera& c) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "lut_%.12g_%.12g_%.12g_%.12g_%dx%d_%.12g_%.12g_%.12g_%.12g_%dx%d",
                  s.phi1, s.phi2, s.alpha_x, s.alpha_y, s.width_px, s.height_px, c.center_x, c.center_y,
                  c.radius, c.max_angle, c.image_width, c.image_height);
    return buf;
}

const WarpLut& LutCache::get(const PatchSpec& spec, const FisheyeCamera& cam) {
    const std::string key = lut_key(spec, cam);
    std::lock_guard lock(mu_);
    auto it = luts_.find(key);
    if (it != luts_.end()) return *it->second;

    std::unique_ptr<WarpLut> lut;
    if (dir_) {
        const auto path = *dir_ / (key + ".fplut");
        if (std::filesystem::exists(path)) {
            lut = std::make_unique<WarpLut>(WarpLut::load(path));
        } else {
            lut = std::make_unique<WarpLut>(build_warp_lut(spec, cam));
            std::filesystem::create_directories(*dir_);
            lut->save(path);
        }
    } else {
        lut = std::make_unique<WarpLut>(build_warp_lut(spec, cam));
    }
    return *luts_.emplace(key, std::move(lut)).first->second;
}

std::size_t LutCache::size() const {
    std::lock_guard lock(mu_);
    return luts_.size();
}

CompositeImage build_composite(const Image& image, const CompositeLayout& layout,
                               const FisheyeCamera& cam, LutCache& luts) {
    CompositeImage out;
    out.patches = layout_patch_specs(layout);
    out.raster = Image(layout.composite_size, layout.composite_size, image.channels);
    for (int k = 0; k < layout.n_patches; ++k) {
        warp_patch_into(image, luts.get(out.patches[k], cam), out.raster, layout.cell_x(k), layout.cell_y(k));
    }
    return out;
}

PatchBox composite_box_to_patch(const AxisBox& box, const CompositeLayout& layout) {
    if (!(box.width() > 0.0 && box.height() > 0.0)) throw DataError("degenerate detection box");
    const Vec2 c = box.center();
    if (c.x() < 0.0 || c.y() < 0.0 || c.x() > layout.composite_size || c.y() > layout.composite_size) {
        throw DataError("detection center outside the composite");
    }
    const int col = std::min(static_cast<int>(std::floor(c.x() / layout.patch_w)), layout.columns - 1);
    const int row = std::min(static_cast<int>(std::floor(c.y() / layout.patch_h)), layout.rows - 1);
    const int k = row * layout.columns + col;
    const double ox = layout.cell_x(k);
    const double oy = layout.cell_y(k);
    AxisBox local{std::max(box.x0, ox) - ox, std::max(box.y0, oy) - oy,
                  std::min(box.x1, ox + layout.patch_w) - ox, std::min(box.y1, oy + layout.patch_h) - oy};
    return {k, local};
}

Image coverage_map(const CompositeLayout& layout, const FisheyeCamera& cam) {
    cam.validate();
    std::vector<PatchProjector> projectors;
    for (const auto& s : layout_patch_specs(layout)) projectors.emplace_back(s);
    Image counts(cam.image_width, cam.image_height, 1, 0);
    const double r2 = cam.radius * cam.radius;
    for (int y = 0; y < cam.image_height; ++y) {
        for (int x = 0; x < cam.image_width; ++x) {
            const double px = x + 0.5;
            const double py = y + 0.5;
            const double dx = px - cam.center_x;
            const double dy = py - cam.center_y;
            if (dx * dx + dy * dy > r2) continue;
            const Vec3 ray = fisheye_to_ray(px, py, cam);
            int n = 0;
            for (const auto& p : projectors) n += p.to_patch(ray).inside() ? 1 : 0;
            counts.at(x, y) = static_cast<std::uint8_t>(n);
        }
    }
    return counts;
}

std::string patch_sidecar_json(const CompositeLayout& layout) {
    nlohmann::json arr = nlohmann::json::array();
    const auto specs = layout_patch_specs(layout);
    for (int k = 0; k < layout.n_patches; ++k) {
        const auto& s = specs[k];
        arr.push_back({{"phi1", s.phi1}, {"phi2", s.phi2}, {"alpha_x", s.alpha_x}, {"alpha_y", s.alpha_y},
                       {"cell_x", layout.cell_x(k)}, {"cell_y", layout.cell_y(k)},
                       {"w", s.width_px}, {"h", s.height_px}});
    }
    return arr.dump(2);
}

}  // namespace fpw
