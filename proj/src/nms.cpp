#include "fpw/nms.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fpw/error.hpp"

namespace fpw {

Stage2Method parse_stage2_method(const std::string& name) {
    if (name == "hard" || name == "yolo") return Stage2Method::hard;
    if (name == "gnms" || name == "gaussian") return Stage2Method::gaussian;
    if (name == "bbr") return Stage2Method::bbr;
    throw ConfigError("unknown NMS method: " + name);
}

std::string to_string(Stage2Method m) {
    switch (m) {
        case Stage2Method::hard: return "hard";
        case Stage2Method::gaussian: return "gnms";
        case Stage2Method::bbr: return "bbr";
    }
    return "gnms";
}

void NmsConfig::validate() const {
    auto unit = [](double v) { return v > 0.0 && v <= 1.0; };
    if (!unit(stage1_iou) || !unit(hard_iou)) throw ConfigError("NMS IOU thresholds must be in (0, 1]");
    if (!(a_g > 0.0)) throw ConfigError("a_g must be positive");
    if (!(bbr_kernel_frac > 0.0)) throw ConfigError("BBR kernel fraction must be positive");
    if (!(score_floor >= 0.0 && score_floor < 1.0)) throw ConfigError("score floor must be in [0, 1)");
}

namespace {

template <typename Det>
std::vector<std::size_t> order_by_score(std::span<const Det> dets) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
        return dets[a].id < dets[b].id;
    });
    return order;
}

}  // namespace

std::vector<PatchDetection> stage1_nms(std::span<const PatchDetection> dets, double iou_thresh) {
    const auto order = order_by_score(dets);
    std::vector<PatchDetection> kept;
    for (std::size_t i : order) {
        const auto& d = dets[i];
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const PatchDetection& k) {
            return k.patch == d.patch && iou_axis_aligned(k.box, d.box) >= iou_thresh;
        });
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

std::vector<FisheyeDetection> hard_nms_fisheye(std::span<const FisheyeDetection> dets, const Vec2& fisheye_center,
                                               double iou_thresh) {
    const auto order = order_by_score(dets);
    std::vector<FisheyeDetection> kept;
    for (std::size_t i : order) {
        const auto& d = dets[i];
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const FisheyeDetection& k) {
            return iou_rotated(k.box, d.box, fisheye_center) >= iou_thresh;
        });
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

std::vector<FisheyeDetection> gaussian_soft_nms(std::span<const FisheyeDetection> dets,
                                                const Vec2& fisheye_center, double a_g, double score_floor) {
    std::vector<FisheyeDetection> pool(dets.begin(), dets.end());
    for (auto& d : pool) d.score = d.raw_score;
    std::vector<FisheyeDetection> out;
    out.reserve(pool.size());
    while (!pool.empty()) {
        auto best = pool.begin();
        for (auto it = pool.begin() + 1; it != pool.end(); ++it) {
            if (it->score > best->score || (it->score == best->score && it->id < best->id)) best = it;
        }
        const FisheyeDetection sel = *best;
        pool.erase(best);
        for (auto& d : pool) {
            const double iou = iou_rotated(d.box, sel.box, fisheye_center);
            d.score *= std::exp(-iou * iou / a_g);
        }
        out.push_back(sel);
    }
    std::erase_if(out, [&](const FisheyeDetection& d) { return d.score < score_floor; });
    return out;
}

namespace {

constexpr double kShiftTol = 0.01;
constexpr int kMaxShiftIters = 100;

}  // namespace

namespace {

/// Mean-shift mode seeking over a fixed set of centers; returns the members
/// of each non-empty cluster.
std::vector<std::vector<std::size_t>> mode_groups(const std::vector<Vec2>& pts, double kernel_radius) {
    const std::size_t n = pts.size();
    const double r2 = kernel_radius * kernel_radius;
    std::vector<Vec2> conv(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 x = pts[i];
        for (int it = 0; it < kMaxShiftIters; ++it) {
            Vec2 sum = Vec2::Zero();
            int cnt = 0;
            for (const auto& p : pts) {
                if ((p - x).squaredNorm() <= r2) {
                    sum += p;
                    ++cnt;
                }
            }
            const Vec2 next = sum / cnt;
            const double shift = (next - x).norm();
            x = next;
            if (shift < kShiftTol) break;
        }
        conv[i] = x;
    }

    // Distinct modes; a converged point within half a radius of a known mode
    // belongs to it.
    std::vector<Vec2> modes;
    for (const auto& c : conv) {
        const bool known = std::any_of(modes.begin(), modes.end(), [&](const Vec2& m) {
            return (m - c).norm() <= 0.5 * kernel_radius;
        });
        if (!known) modes.push_back(c);
    }
    std::vector<std::vector<std::size_t>> members(modes.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double best_d = (modes[0] - conv[i]).squaredNorm();
        for (std::size_t m = 1; m < modes.size(); ++m) {
            const double d = (modes[m] - conv[i]).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = m;
            }
        }
        members[best].push_back(i);
    }
    std::erase_if(members, [](const auto& g) { return g.empty(); });
    return members;
}

/// Score-weighted average box of the members, carrying the top member's
/// score and id. A single member is returned unchanged.
FisheyeDetection combine(std::span<const FisheyeDetection> dets, const std::vector<std::size_t>& group) {
    std::size_t top = group.front();
    for (std::size_t i : group) {
        const auto& d = dets[i];
        if (d.score > dets[top].score || (d.score == dets[top].score && d.id < dets[top].id)) top = i;
    }
    FisheyeDetection merged = dets[top];
    if (group.size() == 1) return merged;
    BoxVec4 acc = BoxVec4::Zero();
    double wsum = 0.0;
    for (std::size_t i : group) {
        acc += dets[i].score * to_vec4(dets[i].box);
        wsum += dets[i].score;
    }
    if (wsum > 0.0) {
        merged.box = from_vec4(acc / wsum);
    } else {
        BoxVec4 mean = BoxVec4::Zero();
        for (std::size_t i : group) mean += to_vec4(dets[i].box);
        merged.box = from_vec4(mean / static_cast<double>(group.size()));
    }
    return merged;
}

}  // namespace

std::vector<FisheyeDetection> bbr(std::span<const FisheyeDetection> dets, double kernel_radius) {
    if (dets.empty()) return {};
    // Clusters of input indices. Merged boxes can land within a kernel radius
    // of each other, so clustering repeats on the merged centers until nothing
    // merges; that fixed point makes a second pass a no-op.
    std::vector<std::vector<std::size_t>> clusters(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i) clusters[i] = {i};
    std::vector<FisheyeDetection> out(dets.begin(), dets.end());
    while (true) {
        std::vector<Vec2> pts(out.size());
        for (std::size_t i = 0; i < out.size(); ++i) pts[i] = {out[i].box.cx, out[i].box.cy};
        const auto groups = mode_groups(pts, kernel_radius);
        if (groups.size() == out.size()) break;
        std::vector<std::vector<std::size_t>> next;
        for (const auto& g : groups) {
            std::vector<std::size_t> merged;
            for (std::size_t c : g) merged.insert(merged.end(), clusters[c].begin(), clusters[c].end());
            next.push_back(std::move(merged));
        }
        clusters = std::move(next);
        out.clear();
        for (const auto& c : clusters) out.push_back(combine(dets, c));
    }
    std::stable_sort(out.begin(), out.end(), [](const FisheyeDetection& a, const FisheyeDetection& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    return out;
}

std::vector<FisheyeDetection> apply_stage2(std::span<const FisheyeDetection> dets, const NmsConfig& config,
                                           const FisheyeCamera& cam) {
    switch (config.method) {
        case Stage2Method::hard: return hard_nms_fisheye(dets, cam.center(), config.hard_iou);
        case Stage2Method::gaussian: return gaussian_soft_nms(dets, cam.center(), config.a_g, config.score_floor);
        case Stage2Method::bbr: return bbr(dets, config.bbr_kernel_frac * cam.image_width);
    }
    return {};
}

}  // namespace fpw
