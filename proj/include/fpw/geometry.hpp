#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "fpw/image.hpp"

namespace fpw {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Equi-distance fisheye camera: image radius is proportional to the
/// incidence angle, R = R0 * theta / theta0.
///
/// Image coordinates are continuous: pixel (i, j) covers [i, i+1) x [j, j+1)
/// and has its center at (i + 0.5, j + 0.5). The camera frame has x along the
/// image columns, y along the image rows and z along the optical axis.
struct FisheyeCamera {
    double center_x = 0.0;
    double center_y = 0.0;
    double radius = 1.0;               // R0, pixels
    double max_angle = kPi / 2.0;      // theta0, radians
    int image_width = 0;               // source raster size the camera describes
    int image_height = 0;

    /// Camera whose circle is centered in a w x h image.
    static FisheyeCamera centered(int w, int h, double radius, double max_angle = kPi / 2.0);

    Vec2 center() const { return {center_x, center_y}; }
    void validate() const;

    friend bool operator==(const FisheyeCamera&, const FisheyeCamera&) = default;
};

/// theta = theta0 * r / R0. Throws DomainError for r outside [0, R0].
double incidence_angle(double r, const FisheyeCamera& cam);

/// Orthonormal right-handed axes of a perspective view, expressed in camera
/// coordinates.
struct ViewFrame {
    Vec3 x_axis;
    Vec3 y_axis;
    Vec3 z_axis;
};

/// Smallest accepted tilt of a view axis away from the optical axis; the
/// horizontal axis is undefined at phi1 = 0.
constexpr double kMinViewTilt = deg2rad(0.5);

/// View axis z = (sin phi1 cos phi2, sin phi1 sin phi2, cos phi1),
/// x = normalize(z_c x z), y = z x x.
ViewFrame view_frame(double phi1, double phi2);

struct PatchSpec {
    double phi1 = deg2rad(36.0);
    double phi2 = 0.0;
    double alpha_x = deg2rad(48.0);
    double alpha_y = deg2rad(96.0);
    int width_px = 152;
    int height_px = 304;

    void validate() const;
    friend bool operator==(const PatchSpec&, const PatchSpec&) = default;
};

/// Pixel coordinate (continuous, 0..size) to relative coordinate in [-1, 1].
inline double pixel_to_relative(double px, int size) { return 2.0 * px / size - 1.0; }
inline double relative_to_pixel(double rel, int size) { return (rel + 1.0) * 0.5 * size; }

enum class PatchHit { inside, outside, behind };

struct PatchPoint {
    double xp = 0.0;
    double yp = 0.0;
    PatchHit hit = PatchHit::behind;

    bool inside() const { return hit == PatchHit::inside; }
};

/// Cached frame and half-angle tangents for one perspective view. All the
/// per-view mappings go through this; the free functions below build one on
/// each call.
class PatchProjector {
public:
    explicit PatchProjector(const PatchSpec& spec);

    const PatchSpec& spec() const { return spec_; }
    const ViewFrame& frame() const { return frame_; }

    /// p_c = z_m + xp tan(ax/2) x_m + yp tan(ay/2) y_m, not normalized.
    Vec3 to_ray(double xp, double yp) const {
        return frame_.z_axis + (xp * tan_x_) * frame_.x_axis + (yp * tan_y_) * frame_.y_axis;
    }

    PatchPoint to_patch(const Vec3& ray) const {
        const double depth = ray.dot(frame_.z_axis);
        if (depth <= 0.0) return {0.0, 0.0, PatchHit::behind};
        const double xp = ray.dot(frame_.x_axis) / depth / tan_x_;
        const double yp = ray.dot(frame_.y_axis) / depth / tan_y_;
        const bool in = std::abs(xp) <= 1.0 && std::abs(yp) <= 1.0;
        return {xp, yp, in ? PatchHit::inside : PatchHit::outside};
    }

private:
    PatchSpec spec_;
    ViewFrame frame_;
    double tan_x_;
    double tan_y_;
};

Vec3 patch_pixel_to_ray(double xp, double yp, const PatchSpec& spec);
PatchPoint ray_to_patch_pixel(const Vec3& ray, const PatchSpec& spec);

/// Fisheye image point of a camera-frame direction. Returns nullopt when the
/// incidence angle exceeds theta0. Throws DomainError for a zero vector.
std::optional<Vec2> ray_to_fisheye(const Vec3& ray, const FisheyeCamera& cam);

/// Unit direction seen by fisheye point (x, y). Throws DomainError when the
/// point lies outside the fisheye circle.
Vec3 fisheye_to_ray(double x, double y, const FisheyeCamera& cam);

/// Per patch pixel source coordinates in the fisheye image.
///
/// Besides the float coordinates (the serialized form), the table keeps a
/// fixed-point bilinear tap per pixel so that warping is a gather plus four
/// multiply-adds. Taps whose source pixel lies outside the fisheye circle get
/// zero weight and the remaining weights are renormalized.
class WarpLut {
public:
    WarpLut() = default;
    WarpLut(int width, int height, const FisheyeCamera& cam, std::vector<float> coords);

    int width() const { return width_; }
    int height() const { return height_; }
    const FisheyeCamera& camera() const { return cam_; }

    /// Interleaved (x, y) source coordinates, NaN pair marks an invalid entry.
    const std::vector<float>& coords() const { return coords_; }
    bool valid(int px, int py) const;
    Vec2 source(int px, int py) const;

    static constexpr int kWeightBits = 14;
    struct Tap {
        std::int32_t offset = -1;  // pixel index of the top-left neighbor, -1 = invalid
        std::uint16_t weight[4] = {0, 0, 0, 0};  // tl, tr, bl, br; sum = 1 << kWeightBits
        std::int16_t dx = 1;       // column step to the right neighbors (0 at the image edge)
        std::int32_t dy = 0;       // pixel step to the lower neighbors
    };
    const std::vector<Tap>& taps() const { return taps_; }

    void save(const std::filesystem::path& path) const;
    static WarpLut load(const std::filesystem::path& path);

    friend bool operator==(const WarpLut& a, const WarpLut& b);

private:
    void prepare_taps();

    int width_ = 0;
    int height_ = 0;
    FisheyeCamera cam_;
    std::vector<float> coords_;
    std::vector<Tap> taps_;
};

WarpLut build_warp_lut(const PatchSpec& spec, const FisheyeCamera& cam);

/// Bilinear resampling of `image` through `lut`; invalid entries are black.
/// Throws DataError when the image size differs from the LUT's camera.
Image warp_patch(const Image& image, const WarpLut& lut);

/// Same as warp_patch but writes into a sub-rectangle of `dst` whose top-left
/// corner is (dst_x, dst_y).
void warp_patch_into(const Image& image, const WarpLut& lut, Image& dst, int dst_x, int dst_y);

}  // namespace fpw
