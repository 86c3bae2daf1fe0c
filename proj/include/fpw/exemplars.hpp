#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpw/compositor.hpp"
#include "fpw/person_model.hpp"
#include "fpw/rotrect.hpp"

namespace fpw {

/// A target box in the fisheye frame paired with the footprint of its
/// inscribed ellipse in one patch.
struct MappingExemplar {
    PolarBox target;
    AxisBox reference;   // relative patch coordinates, [0, 1]^2
    double containment = 0.0;
};

struct ExemplarParams {
    double min_containment = 0.1;
    double min_target_height = 20.0;  // px
    int max_samples = 4096;           // ellipse samples per target
};

struct ReferenceResult {
    std::optional<AxisBox> reference;  // nullopt when rejected
    double containment = 0.0;
};

/// Maps the ellipse inscribed in `target` into the patch, sampled at one
/// sample per pixel on a lattice aligned with the target's axes. The reference
/// box is the bounding box of the samples landing inside the patch and the
/// containment ratio is their share of all ellipse samples. Ellipses with
/// more than `max_samples` samples get a wider lattice spacing. Rejected when
/// the containment falls below `min_containment`.
ReferenceResult build_reference_box(const PolarBox& target, const PatchSpec& spec, const FisheyeCamera& cam,
                                    const ExemplarParams& params = {});

/// Variant that always samples at one-pixel spacing (test reference).
ReferenceResult build_reference_box_full(const PolarBox& target, const PatchSpec& spec,
                                         const FisheyeCamera& cam, double min_containment = 0.1);

struct ExemplarSet {
    int patch_index = 0;
    PatchSpec spec;
    std::vector<MappingExemplar> exemplars;

    std::size_t size() const { return exemplars.size(); }
    bool empty() const { return exemplars.empty(); }
};

ExemplarSet build_exemplar_set(int patch_index, const PatchSpec& spec, std::span<const TargetBoxSet> targets,
                               const FisheyeCamera& cam, const ExemplarParams& params = {});

/// All patches of a layout at once; each target's ellipse is sampled once and
/// projected into every patch.
std::vector<ExemplarSet> build_exemplar_sets(const CompositeLayout& layout, std::span<const TargetBoxSet> targets,
                                             const FisheyeCamera& cam, const ExemplarParams& params = {},
                                             unsigned workers = 0);

/// Target boxes for every parameter set of `grid` (default: the 12-set grid).
std::vector<TargetBoxSet> generate_target_grid(const FisheyeCamera& cam, double overlap,
                                               const std::vector<TargetParams>& grid = default_target_grid(),
                                               double min_height = 20.0);

/// Stable 64-bit FNV-1a digest of everything an exemplar cache depends on.
std::uint64_t exemplar_config_hash(const FisheyeCamera& cam, const CompositeLayout& layout, double overlap,
                                   const std::vector<TargetParams>& grid, const ExemplarParams& params);

/// JSON lines: a header {"format", "hash", "patches"} then one object per
/// exemplar {"patch", "target": {cx, cy, w, h}, "ref": [x0, y0, x1, y1], "fc"}.
void save_exemplar_cache(const std::filesystem::path& path, std::span<const ExemplarSet> sets,
                         std::uint64_t config_hash);

/// Throws DataError on malformed files or when the stored hash differs from
/// `expected_hash`. `layout` restores each set's patch spec.
std::vector<ExemplarSet> load_exemplar_cache(const std::filesystem::path& path, std::uint64_t expected_hash,
                                             const CompositeLayout& layout);

}  // namespace fpw
