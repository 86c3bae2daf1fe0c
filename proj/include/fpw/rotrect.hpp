#pragma once

#include <array>
#include <vector>

#include "fpw/geometry.hpp"

namespace fpw {

/// Axis-aligned box [x0, x1] x [y0, y1] (patch or composite frame).
struct AxisBox {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;

    static AxisBox from_xywh(double x, double y, double w, double h) { return {x, y, x + w, y + h}; }

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
    Vec2 center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }

    friend bool operator==(const AxisBox&, const AxisBox&) = default;
};

double iou_axis_aligned(const AxisBox& a, const AxisBox& b);

/// Rectangle in the fisheye frame whose height axis points along the radial
/// direction from the fisheye center and whose width axis is tangential.
/// The orientation is a function of the center, so it is never stored.
struct PolarBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;  // tangential extent
    double h = 0.0;  // radial extent

    friend bool operator==(const PolarBox&, const PolarBox&) = default;
};

/// [center_x, center_y, width, height], the form boxes are averaged in.
using BoxVec4 = Eigen::Vector4d;

inline BoxVec4 to_vec4(const PolarBox& b) { return {b.cx, b.cy, b.w, b.h}; }
inline PolarBox from_vec4(const BoxVec4& v) { return {v[0], v[1], v[2], v[3]}; }

/// Radial unit vector of a box centered at `box_center`, or nullopt when the
/// center coincides with the fisheye center.
std::optional<Vec2> radial_axis(const Vec2& box_center, const Vec2& fisheye_center);

/// Angle of the radial axis in image coordinates (atan2(dy, dx)); 0 when the
/// orientation is undefined.
double polar_angle(const PolarBox& box, const Vec2& fisheye_center);

using Quad = std::array<Vec2, 4>;

/// Corners in counter-clockwise order (positive shoelace area). Throws
/// DomainError when the box center coincides with the fisheye center.
Quad corners(const PolarBox& box, const Vec2& fisheye_center);
inline Quad corners(const PolarBox& box, const FisheyeCamera& cam) { return corners(box, cam.center()); }

/// As corners(), but a box centered exactly on the fisheye center is taken
/// with its height along the image y axis.
Quad corners_or_axis_aligned(const PolarBox& box, const Vec2& fisheye_center);

using Polygon = std::vector<Vec2>;

/// Signed shoelace area; positive for counter-clockwise vertices.
double signed_area(const Polygon& poly);

/// Intersection of two convex counter-clockwise polygons by sequential
/// half-plane clipping of `subject` against each edge of `clip`.
Polygon clip_convex(const Polygon& subject, const Polygon& clip);

double iou_rotated(const PolarBox& a, const PolarBox& b, const Vec2& fisheye_center);
inline double iou_rotated(const PolarBox& a, const PolarBox& b, const FisheyeCamera& cam) {
    return iou_rotated(a, b, cam.center());
}

}  // namespace fpw
