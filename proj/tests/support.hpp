#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "fpw/geometry.hpp"
#include "fpw/rotrect.hpp"

namespace fpw::testing {

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("fpw-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Point-in-box test written directly from the box definition: the height
/// axis points from the fisheye center to the box center.
inline bool inside_polar_box(double x, double y, const PolarBox& b, const Vec2& c) {
    double ux = b.cx - c.x();
    double uy = b.cy - c.y();
    const double n = std::hypot(ux, uy);
    if (n == 0.0) {
        ux = 0.0;
        uy = 1.0;
    } else {
        ux /= n;
        uy /= n;
    }
    const double dx = x - b.cx;
    const double dy = y - b.cy;
    const double s = dx * ux + dy * uy;    // radial
    const double t = -dx * uy + dy * ux;   // tangential
    return std::abs(s) <= 0.5 * b.h && std::abs(t) <= 0.5 * b.w;
}

/// IOU by counting cell centers of a grid x grid raster laid over the union
/// of the two boxes' bounding circles.
inline double raster_iou(const PolarBox& a, const PolarBox& b, const Vec2& c, int grid = 2000) {
    const double ra = 0.5 * std::hypot(a.w, a.h);
    const double rb = 0.5 * std::hypot(b.w, b.h);
    const double x0 = std::min(a.cx - ra, b.cx - rb);
    const double x1 = std::max(a.cx + ra, b.cx + rb);
    const double y0 = std::min(a.cy - ra, b.cy - rb);
    const double y1 = std::max(a.cy + ra, b.cy + rb);
    const double sx = (x1 - x0) / grid;
    const double sy = (y1 - y0) / grid;
    long long in_a = 0, in_b = 0, both = 0;
    for (int j = 0; j < grid; ++j) {
        const double y = y0 + (j + 0.5) * sy;
        for (int i = 0; i < grid; ++i) {
            const double x = x0 + (i + 0.5) * sx;
            const bool pa = inside_polar_box(x, y, a, c);
            const bool pb = inside_polar_box(x, y, b, c);
            in_a += pa;
            in_b += pb;
            both += pa && pb;
        }
    }
    const long long uni = in_a + in_b - both;
    return uni == 0 ? 0.0 : static_cast<double>(both) / uni;
}

}  // namespace fpw::testing
