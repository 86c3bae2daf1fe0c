#include "fpw/rotrect.hpp"

#include <algorithm>
#include <cmath>

#include "fpw/error.hpp"

namespace fpw {

namespace {

constexpr double kClipEps = 1e-9;
constexpr double kDegenerateCenter = 1e-9;

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

Quad corners_with_axis(const PolarBox& box, const Vec2& u) {
    // Tangential axis chosen so that (t, u) keeps the corner order CCW.
    const Vec2 t(-u.y(), u.x());
    const Vec2 c(box.cx, box.cy);
    const Vec2 hu = 0.5 * box.h * u;
    const Vec2 wt = 0.5 * box.w * t;
    return {c - hu - wt, c + hu - wt, c + hu + wt, c - hu + wt};
}

}  // namespace

double iou_axis_aligned(const AxisBox& a, const AxisBox& b) {
    const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::optional<Vec2> radial_axis(const Vec2& box_center, const Vec2& fisheye_center) {
    const Vec2 d = box_center - fisheye_center;
    const double n = d.norm();
    if (n < kDegenerateCenter) return std::nullopt;
    return Vec2(d / n);
}

double polar_angle(const PolarBox& box, const Vec2& fisheye_center) {
    const Vec2 d = Vec2(box.cx, box.cy) - fisheye_center;
    if (d.norm() < kDegenerateCenter) return 0.0;
    return std::atan2(d.y(), d.x());
}

Quad corners(const PolarBox& box, const Vec2& fisheye_center) {
    const auto u = radial_axis({box.cx, box.cy}, fisheye_center);
    if (!u) throw DomainError("box orientation undefined at the fisheye center");
    return corners_with_axis(box, *u);
}

Quad corners_or_axis_aligned(const PolarBox& box, const Vec2& fisheye_center) {
    const auto u = radial_axis({box.cx, box.cy}, fisheye_center);
    return corners_with_axis(box, u.value_or(Vec2(0.0, 1.0)));
}

double signed_area(const Polygon& poly) {
    double s = 0.0;
    for (std::size_t i = 0, n = poly.size(); i < n; ++i) s += cross(poly[i], poly[(i + 1) % n]);
    return 0.5 * s;
}

Polygon clip_convex(const Polygon& subject, const Polygon& clip) {
    Polygon out = subject;
    Polygon in;
    for (std::size_t e = 0, n = clip.size(); e < n && !out.empty(); ++e) {
        const Vec2& a = clip[e];
        const Vec2 edge = clip[(e + 1) % n] - a;
        const double len = edge.norm();
        if (len == 0.0) continue;
        in.swap(out);
        out.clear();
        // Signed distance to the edge line, positive on the inner (left) side.
        auto side = [&](const Vec2& p) { return cross(edge, p - a) / len; };
        for (std::size_t i = 0, m = in.size(); i < m; ++i) {
            const Vec2& p = in[i];
            const Vec2& q = in[(i + 1) % m];
            const double sp = side(p);
            const double sq = side(q);
            const bool p_in = sp >= -kClipEps;
            const bool q_in = sq >= -kClipEps;
            if (p_in) out.push_back(p);
            if (p_in != q_in) {
                const double t = sp / (sp - sq);
                out.push_back(p + t * (q - p));
            }
        }
    }
    return out;
}

double iou_rotated(const PolarBox& a, const PolarBox& b, const Vec2& fisheye_center) {
    const double area_a = a.w * a.h;
    const double area_b = b.w * b.h;
    if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
    // Disjoint bounding circles: skip the clip.
    const double ra = 0.5 * std::hypot(a.w, a.h);
    const double rb = 0.5 * std::hypot(b.w, b.h);
    if (std::hypot(a.cx - b.cx, a.cy - b.cy) >= ra + rb) return 0.0;

    const Quad qa = corners_or_axis_aligned(a, fisheye_center);
    const Quad qb = corners_or_axis_aligned(b, fisheye_center);
    const Polygon inter = clip_convex(Polygon(qa.begin(), qa.end()), Polygon(qb.begin(), qb.end()));
    if (inter.size() < 3) return 0.0;
    const double ia = std::clamp(signed_area(inter), 0.0, std::min(area_a, area_b));
    const double uni = area_a + area_b - ia;
    return uni > 0.0 ? ia / uni : 0.0;
}

}  // namespace fpw
