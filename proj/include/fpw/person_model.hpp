#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fpw/geometry.hpp"
#include "fpw/rotrect.hpp"

namespace fpw {

/// Vertical cylinder standing on the ground plane. Ground coordinates are in
/// meters, in the camera frame's x/y directions, with the origin at the nadir.
struct CylinderPerson {
    double ground_x = 0.0;
    double ground_y = 0.0;
    double height = 1.7;
    double diameter = 0.5;
};

struct SceneParams {
    double camera_height = 3.0;  // meters above the ground plane
};

struct PersonTemplate {
    double height = 1.7;
    double diameter = 0.5;
};

struct SilhouetteSampling {
    int circle_samples = 360;  // per rim circle
    int edge_samples = 64;     // per silhouette generator line
};

/// Smallest polar-axis-aligned rectangle around the fisheye image of the
/// cylinder. The box axes are anchored at the polar angle of the projected
/// region's centroid. Returns nullopt when no part of the cylinder is within
/// the camera's field of view. Throws DomainError for a person taller than
/// the camera height.
std::optional<PolarBox> project_cylinder(const CylinderPerson& person, const SceneParams& scene,
                                         const FisheyeCamera& cam,
                                         const SilhouetteSampling& sampling = {});

/// Fisheye image point of a 3D point given in camera coordinates (z = depth
/// below the camera). Extrapolates past theta0 instead of failing.
Vec2 project_point(const Vec3& p, const FisheyeCamera& cam);

/// Summary of one ring of sampled ground positions.
struct TargetRing {
    double ground_distance = 0.0;  // meters from the nadir
    double center_radius = 0.0;    // pixels from the fisheye center
    double w = 0.0;
    double h = 0.0;
    int count = 0;                 // boxes on the ring
};

struct TargetBoxSet {
    std::string param_id;
    SceneParams scene;
    PersonTemplate person;
    std::vector<PolarBox> boxes;
    std::vector<TargetRing> rings;
};

/// Target boxes for one person template, sampled on concentric rings of
/// ground positions so that neighbouring boxes overlap by at least `overlap`
/// in both the radial and the tangential direction. Per direction, overlap is
/// 1 - center spacing / box extent. Sampling stops once boxes leave the
/// fisheye circle or shrink below `min_height` px on the far side of the
/// height peak.
TargetBoxSet generate_target_boxes(const SceneParams& scene, const PersonTemplate& person,
                                   const FisheyeCamera& cam, double overlap, double min_height = 20.0);

struct TargetParams {
    SceneParams scene;
    PersonTemplate person;
};

/// {1.3, 1.5, 1.7 m} x {0.45, 0.6 m} x {2.75, 3.25 m camera height}.
std::vector<TargetParams> default_target_grid();

std::string target_param_id(const SceneParams& scene, const PersonTemplate& person);

}  // namespace fpw
