#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "fpw/geometry.hpp"
#include "fpw/rotrect.hpp"

namespace fpw {

/// Tiling of perspective patches into one square composite. Patch k sits at
/// column k % columns, row k / columns and looks along
/// phi2 = phi2_base + k * phi2_step.
struct CompositeLayout {
    int n_patches = 8;
    int patch_w = 152;
    int patch_h = 304;
    int columns = 4;
    int rows = 2;
    int composite_size = 608;
    double phi2_base = 0.0;
    double phi2_step = deg2rad(45.0);
    double phi1 = deg2rad(36.0);
    double alpha_x = deg2rad(48.0);
    double alpha_y = deg2rad(96.0);

    /// Layout with the given grid; phi2_step follows from the patch count.
    static CompositeLayout with_grid(int columns, int rows, int patch_w, int patch_h);

    void validate() const;

    int cell_x(int k) const { return (k % columns) * patch_w; }
    int cell_y(int k) const { return (k / columns) * patch_h; }

    friend bool operator==(const CompositeLayout&, const CompositeLayout&) = default;
};

std::vector<PatchSpec> layout_patch_specs(const CompositeLayout& layout);

struct CompositeImage {
    Image raster;
    std::vector<PatchSpec> patches;
};

/// Memoizes warp tables per (patch spec, camera); optionally mirrors them to
/// FPLUT1 files in a directory. Safe to share between threads.
class LutCache {
public:
    LutCache() = default;
    explicit LutCache(std::filesystem::path directory) : dir_(std::move(directory)) {}

    const WarpLut& get(const PatchSpec& spec, const FisheyeCamera& cam);
    std::size_t size() const;

private:
    std::optional<std::filesystem::path> dir_;
    mutable std::mutex mu_;
    std::map<std::string, std::unique_ptr<WarpLut>> luts_;
};

/// Key identifying a (spec, camera) pair; also used as the LUT file stem.
std::string lut_key(const PatchSpec& spec, const FisheyeCamera& cam);

CompositeImage build_composite(const Image& image, const CompositeLayout& layout,
                               const FisheyeCamera& cam, LutCache& luts);

struct PatchBox {
    int patch = 0;
    AxisBox box;  // patch pixels
};

/// Assigns a composite-frame box to the cell containing its center (a center
/// on a cell edge goes to the higher-index cell) and crops it to that cell.
/// Throws DataError for zero-area boxes or centers outside the composite.
PatchBox composite_box_to_patch(const AxisBox& box, const CompositeLayout& layout);

/// Per fisheye pixel, the number of patches whose view contains it.
Image coverage_map(const CompositeLayout& layout, const FisheyeCamera& cam);

/// JSON sidecar listing {phi1, phi2, alpha_x, alpha_y, cell_x, cell_y, w, h}
/// per patch.
std::string patch_sidecar_json(const CompositeLayout& layout);

}  // namespace fpw
