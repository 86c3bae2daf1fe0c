#include "fpw/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "fpw/error.hpp"

namespace fpw {

FisheyeCamera FisheyeCamera::centered(int w, int h, double radius, double max_angle) {
    FisheyeCamera cam;
    cam.center_x = 0.5 * w;
    cam.center_y = 0.5 * h;
    cam.radius = radius;
    cam.max_angle = max_angle;
    cam.image_width = w;
    cam.image_height = h;
    return cam;
}

void FisheyeCamera::validate() const {
    if (!(radius > 0.0)) throw ConfigError("fisheye radius must be positive");
    if (!(max_angle > 0.0 && max_angle <= kPi)) throw ConfigError("fisheye max angle must be in (0, pi]");
    if (image_width <= 0 || image_height <= 0) throw ConfigError("fisheye image size must be positive");
}

double incidence_angle(double r, const FisheyeCamera& cam) {
    if (!(r >= 0.0 && r <= cam.radius)) throw DomainError("radial distance outside the fisheye circle");
    return cam.max_angle * r / cam.radius;
}

ViewFrame view_frame(double phi1, double phi2) {
    if (!(phi1 >= kMinViewTilt && phi1 <= kPi - kMinViewTilt)) {
        throw DomainError("view axis too close to the optical axis");
    }
    ViewFrame f;
    const double s1 = std::sin(phi1);
    f.z_axis = Vec3(s1 * std::cos(phi2), s1 * std::sin(phi2), std::cos(phi1));
    f.x_axis = Vec3::UnitZ().cross(f.z_axis).normalized();
    f.y_axis = f.z_axis.cross(f.x_axis);
    return f;
}

void PatchSpec::validate() const {
    if (!(phi1 > 0.0 && phi1 < kPi)) throw ConfigError("phi1 must be in (0, pi)");
    if (!(alpha_x > 0.0 && alpha_x < kPi)) throw ConfigError("alpha_x must be in (0, pi)");
    if (!(alpha_y > 0.0 && alpha_y < kPi)) throw ConfigError("alpha_y must be in (0, pi)");
    if (width_px <= 0 || height_px <= 0) throw ConfigError("patch dimensions must be positive");
}

PatchProjector::PatchProjector(const PatchSpec& spec)
    : spec_(spec),
      frame_(view_frame(spec.phi1, spec.phi2)),
      tan_x_(std::tan(0.5 * spec.alpha_x)),
      tan_y_(std::tan(0.5 * spec.alpha_y)) {}

Vec3 patch_pixel_to_ray(double xp, double yp, const PatchSpec& spec) {
    return PatchProjector(spec).to_ray(xp, yp);
}

PatchPoint ray_to_patch_pixel(const Vec3& ray, const PatchSpec& spec) {
    return PatchProjector(spec).to_patch(ray);
}

std::optional<Vec2> ray_to_fisheye(const Vec3& ray, const FisheyeCamera& cam) {
    const double transverse = std::hypot(ray.x(), ray.y());
    if (transverse == 0.0 && ray.z() == 0.0) throw DomainError("zero direction vector");
    // atan2 agrees with the |z| form for forward rays and stays monotone past 90 degrees.
    const double theta = std::atan2(transverse, ray.z());
    if (theta > cam.max_angle) return std::nullopt;
    if (transverse == 0.0) return cam.center();
    const double r = cam.radius * theta / cam.max_angle;
    return Vec2(cam.center_x + r * ray.x() / transverse, cam.center_y + r * ray.y() / transverse);
}

Vec3 fisheye_to_ray(double x, double y, const FisheyeCamera& cam) {
    const double dx = x - cam.center_x;
    const double dy = y - cam.center_y;
    const double r = std::hypot(dx, dy);
    if (r > cam.radius) throw DomainError("point outside the fisheye circle");
    if (r == 0.0) return Vec3::UnitZ();
    const double theta = cam.max_angle * r / cam.radius;
    const double s = std::sin(theta) / r;
    return Vec3(dx * s, dy * s, std::cos(theta));
}

// ---------------------------------------------------------------------------
// WarpLut

WarpLut::WarpLut(int width, int height, const FisheyeCamera& cam, std::vector<float> coords)
    : width_(width), height_(height), cam_(cam), coords_(std::move(coords)) {
    if (coords_.size() != static_cast<std::size_t>(width_) * height_ * 2) {
        throw DataError("LUT coordinate count does not match its dimensions");
    }
    prepare_taps();
}

bool WarpLut::valid(int px, int py) const {
    return !std::isnan(coords_[2 * (static_cast<std::size_t>(py) * width_ + px)]);
}

Vec2 WarpLut::source(int px, int py) const {
    const std::size_t i = 2 * (static_cast<std::size_t>(py) * width_ + px);
    return {coords_[i], coords_[i + 1]};
}

void WarpLut::prepare_taps() {
    const int iw = cam_.image_width;
    const int ih = cam_.image_height;
    const double r2 = cam_.radius * cam_.radius;
    auto in_circle = [&](int ix, int iy) {
        const double dx = ix + 0.5 - cam_.center_x;
        const double dy = iy + 0.5 - cam_.center_y;
        return dx * dx + dy * dy <= r2;
    };
    constexpr double kOne = 1 << kWeightBits;

    taps_.assign(static_cast<std::size_t>(width_) * height_, Tap{});
    for (std::size_t i = 0; i < taps_.size(); ++i) {
        const float sx = coords_[2 * i];
        const float sy = coords_[2 * i + 1];
        if (std::isnan(sx)) continue;
        // Sample position in index space (pixel centers at integers).
        const double u = std::clamp(static_cast<double>(sx) - 0.5, 0.0, iw - 1.0);
        const double v = std::clamp(static_cast<double>(sy) - 0.5, 0.0, ih - 1.0);
        const int x0 = std::min(static_cast<int>(u), iw - 1);
        const int y0 = std::min(static_cast<int>(v), ih - 1);
        const int x1 = std::min(x0 + 1, iw - 1);
        const int y1 = std::min(y0 + 1, ih - 1);
        const double fx = u - x0;
        const double fy = v - y0;

        std::array<double, 4> w = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
        const std::array<std::array<int, 2>, 4> nb = {{{x0, y0}, {x1, y0}, {x0, y1}, {x1, y1}}};
        double total = 0.0;
        for (int k = 0; k < 4; ++k) {
            if (!in_circle(nb[k][0], nb[k][1])) w[k] = 0.0;
            total += w[k];
        }
        if (total <= 0.0) {
            // Every neighbor center is outside the circle: nearest neighbor.
            w = {0, 0, 0, 0};
            const int k = (fx < 0.5 ? 0 : 1) + (fy < 0.5 ? 0 : 2);
            w[k] = 1.0;
            total = 1.0;
        }
        Tap t;
        t.offset = y0 * iw + x0;
        t.dx = static_cast<std::int16_t>(x1 - x0);
        t.dy = (y1 - y0) * iw;
        int assigned = 0;
        int largest = 0;
        for (int k = 0; k < 4; ++k) {
            t.weight[k] = static_cast<std::uint16_t>(std::lround(w[k] / total * kOne));
            assigned += t.weight[k];
            if (w[k] > w[largest]) largest = k;
        }
        t.weight[largest] = static_cast<std::uint16_t>(t.weight[largest] + (static_cast<int>(kOne) - assigned));
        taps_[i] = t;
    }
}

bool operator==(const WarpLut& a, const WarpLut& b) {
    if (a.width_ != b.width_ || a.height_ != b.height_ || !(a.cam_ == b.cam_)) return false;
    return a.coords_.size() == b.coords_.size() &&
           std::memcmp(a.coords_.data(), b.coords_.data(), a.coords_.size() * sizeof(float)) == 0;
}

WarpLut build_warp_lut(const PatchSpec& spec, const FisheyeCamera& cam) {
    spec.validate();
    cam.validate();
    const PatchProjector proj(spec);
    const int w = spec.width_px;
    const int h = spec.height_px;
    std::vector<float> coords(static_cast<std::size_t>(w) * h * 2, std::numeric_limits<float>::quiet_NaN());
    for (int j = 0; j < h; ++j) {
        const double yp = pixel_to_relative(j + 0.5, h);
        for (int i = 0; i < w; ++i) {
            const double xp = pixel_to_relative(i + 0.5, w);
            const auto src = ray_to_fisheye(proj.to_ray(xp, yp), cam);
            if (!src) continue;
            const std::size_t k = 2 * (static_cast<std::size_t>(j) * w + i);
            coords[k] = static_cast<float>(src->x());
            coords[k + 1] = static_cast<float>(src->y());
            // Float rounding can push a boundary sample a hair outside.
            const double dx = coords[k] - cam.center_x;
            const double dy = coords[k + 1] - cam.center_y;
            if (dx * dx + dy * dy > cam.radius * cam.radius) {
                coords[k] = coords[k + 1] = std::numeric_limits<float>::quiet_NaN();
            }
        }
    }
    return WarpLut(w, h, cam, std::move(coords));
}

// ---------------------------------------------------------------------------
// Serialization: "FPLUT1", u32 width, u32 height, f64 cx, cy, R0, theta0,
// image width, image height, then width*height (x, y) f32 pairs. Little-endian.

namespace {

constexpr char kLutMagic[6] = {'F', 'P', 'L', 'U', 'T', '1'};

template <typename T>
void put_le(std::ostream& os, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U bits = std::bit_cast<U>(value);
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename T>
T get_le(std::istream& is) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    unsigned char buf[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw DataError("truncated LUT file");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(buf[i]) << (8 * i);
    return std::bit_cast<T>(bits);
}

}  // namespace

void WarpLut::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write LUT: " + path.string());
    os.write(kLutMagic, sizeof(kLutMagic));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(width_));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(height_));
    put_le<double>(os, cam_.center_x);
    put_le<double>(os, cam_.center_y);
    put_le<double>(os, cam_.radius);
    put_le<double>(os, cam_.max_angle);
    put_le<double>(os, static_cast<double>(cam_.image_width));
    put_le<double>(os, static_cast<double>(cam_.image_height));
    for (float c : coords_) put_le<float>(os, c);
    if (!os) throw DataError("LUT write failed: " + path.string());
}

WarpLut WarpLut::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open LUT: " + path.string());
    char magic[sizeof(kLutMagic)];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kLutMagic, sizeof(magic)) != 0) {
        throw DataError("not a FPLUT1 file: " + path.string());
    }
    const auto w = get_le<std::uint32_t>(is);
    const auto h = get_le<std::uint32_t>(is);
    if (w == 0 || h == 0 || w > 1u << 15 || h > 1u << 15) throw DataError("bad LUT dimensions");
    FisheyeCamera cam;
    cam.center_x = get_le<double>(is);
    cam.center_y = get_le<double>(is);
    cam.radius = get_le<double>(is);
    cam.max_angle = get_le<double>(is);
    cam.image_width = static_cast<int>(get_le<double>(is));
    cam.image_height = static_cast<int>(get_le<double>(is));
    std::vector<float> coords(static_cast<std::size_t>(w) * h * 2);
    for (float& c : coords) c = get_le<float>(is);
    return WarpLut(static_cast<int>(w), static_cast<int>(h), cam, std::move(coords));
}

// ---------------------------------------------------------------------------
// Warping

namespace {

template <int CH>
void warp_rows(const std::uint8_t* src, const WarpLut& lut, std::uint8_t* dst, std::size_t dst_row_stride, int ch) {
    constexpr int kShift = WarpLut::kWeightBits;
    constexpr std::uint32_t kRound = 1u << (kShift - 1);
    const int nch = CH > 0 ? CH : ch;
    const auto& taps = lut.taps();
    for (int j = 0; j < lut.height(); ++j) {
        const WarpLut::Tap* row = taps.data() + static_cast<std::size_t>(j) * lut.width();
        std::uint8_t* out = dst + static_cast<std::size_t>(j) * dst_row_stride;
        for (int i = 0; i < lut.width(); ++i, out += nch) {
            const WarpLut::Tap& t = row[i];
            if (t.offset < 0) {
                for (int c = 0; c < nch; ++c) out[c] = 0;
                continue;
            }
            const std::uint8_t* p00 = src + static_cast<std::size_t>(t.offset) * nch;
            const std::uint8_t* p01 = p00 + t.dx * nch;
            const std::uint8_t* p10 = p00 + static_cast<std::ptrdiff_t>(t.dy) * nch;
            const std::uint8_t* p11 = p10 + t.dx * nch;
            for (int c = 0; c < nch; ++c) {
                const std::uint32_t acc = t.weight[0] * p00[c] + t.weight[1] * p01[c] +
                                          t.weight[2] * p10[c] + t.weight[3] * p11[c];
                out[c] = static_cast<std::uint8_t>((acc + kRound) >> kShift);
            }
        }
    }
}

}  // namespace

void warp_patch_into(const Image& image, const WarpLut& lut, Image& dst, int dst_x, int dst_y) {
    const auto& cam = lut.camera();
    if (image.width != cam.image_width || image.height != cam.image_height) {
        throw DataError("image size does not match the LUT camera");
    }
    if (dst.channels != image.channels || dst_x < 0 || dst_y < 0 ||
        dst_x + lut.width() > dst.width || dst_y + lut.height() > dst.height) {
        throw DataError("warp destination does not fit the patch");
    }
    const int ch = image.channels;
    std::uint8_t* out = dst.data.data() + (static_cast<std::size_t>(dst_y) * dst.width + dst_x) * ch;
    switch (ch) {
        case 1: warp_rows<1>(image.data.data(), lut, out, dst.stride(), ch); break;
        case 3: warp_rows<3>(image.data.data(), lut, out, dst.stride(), ch); break;
        default: warp_rows<0>(image.data.data(), lut, out, dst.stride(), ch); break;
    }
}

Image warp_patch(const Image& image, const WarpLut& lut) {
    Image out(lut.width(), lut.height(), image.channels);
    warp_patch_into(image, lut, out, 0, 0);
    return out;
}

}  // namespace fpw
