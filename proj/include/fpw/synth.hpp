#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fpw/boxmap.hpp"
#include "fpw/compositor.hpp"
#include "fpw/evaluation.hpp"
#include "fpw/person_model.hpp"

namespace fpw {

struct ScenePerson {
    CylinderPerson person;
    std::uint8_t gray = 220;
};

/// Flat-shaded scene of cylinder people on a ground plane, seen by a
/// top-view fisheye camera.
struct SyntheticScene {
    SceneParams scene;
    std::vector<ScenePerson> persons;
    std::uint8_t background = 90;
    double noise_sigma = 0.0;  // additive Gaussian pixel noise
    std::uint64_t seed = 0;    // noise seed
    int width = 0;             // output resolution; 0 = the camera's
    int height = 0;
};

struct RenderedScene {
    Image image;
    GroundTruth gt;
    std::vector<int> gt_person;  // scene person index of each GT box
};

/// Casts one ray per fisheye pixel against the cylinders (side and top cap)
/// and the ground plane; the nearest hit decides the gray level. Pixels
/// outside the fisheye circle are black. GT boxes come from project_cylinder.
RenderedScene render_fisheye(const SyntheticScene& scene, const FisheyeCamera& cam,
                             const std::string& image_id = "synthetic");

/// Distance along a unit camera ray to the cylinder surface, if hit.
std::optional<double> ray_hit_cylinder(const Vec3& dir, const CylinderPerson& person, const SceneParams& scene);

struct SyntheticDetection {
    PatchDetection det;
    int person = 0;
    double visible_fraction = 0.0;  // share of the silhouette inside the patch
};

/// Stand-in for a detector: for every person and every patch showing at least
/// `min_visible` of the person's silhouette, the tight patch-pixel box around
/// the visible part with score 1. Silhouettes are supersampled 2x2 per
/// fisheye pixel.
std::vector<SyntheticDetection> perfect_detections_detailed(const SyntheticScene& scene, const FisheyeCamera& cam,
                                                            const CompositeLayout& layout,
                                                            double min_visible = 0.3);

std::vector<PatchDetection> perfect_detections(const SyntheticScene& scene, const FisheyeCamera& cam,
                                               const CompositeLayout& layout, double min_visible = 0.3);

/// Patch-pixel box of patch `det.patch` in composite pixels.
AxisBox patch_box_to_composite(const PatchDetection& det, const CompositeLayout& layout);

struct RandomSceneParams {
    int min_persons = 1;
    int max_persons = 6;
    double min_radius = 0.5;   // meters from the nadir
    double max_radius = 4.0;
    double camera_height = 3.0;
    double min_height = 1.3;
    double max_height = 1.7;
    double min_diameter = 0.45;
    double max_diameter = 0.6;
};

/// Seeded scene with non-intersecting persons.
SyntheticScene random_scene(std::uint64_t seed, const RandomSceneParams& params = {});

}  // namespace fpw
