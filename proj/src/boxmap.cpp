#include "fpw/boxmap.hpp"

#include <algorithm>

#include "fpw/error.hpp"

namespace fpw {

ConfidenceScaling parse_confidence_scaling(const std::string& name) {
    if (name == "none") return ConfidenceScaling::none;
    if (name == "containment" || name == "fc") return ConfidenceScaling::containment;
    if (name == "overlap" || name == "fov") return ConfidenceScaling::overlap;
    if (name == "both") return ConfidenceScaling::both;
    throw ConfigError("unknown confidence scaling mode: " + name);
}

std::string to_string(ConfidenceScaling mode) {
    switch (mode) {
        case ConfidenceScaling::none: return "none";
        case ConfidenceScaling::containment: return "containment";
        case ConfidenceScaling::overlap: return "overlap";
        case ConfidenceScaling::both: return "both";
    }
    return "both";
}

AxisBox patch_box_to_relative(const AxisBox& box, const PatchSpec& spec) {
    const double sx = 1.0 / spec.width_px;
    const double sy = 1.0 / spec.height_px;
    return {box.x0 * sx, box.y0 * sy, box.x1 * sx, box.y1 * sy};
}

ExemplarMatcher::ExemplarMatcher(const ExemplarSet& set) : set_(&set) {
    const std::size_t n = set.exemplars.size();
    x0_.resize(n);
    y0_.resize(n);
    x1_.resize(n);
    y1_.resize(n);
    area_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = set.exemplars[i].reference;
        x0_[i] = r.x0;
        y0_[i] = r.y0;
        x1_[i] = r.x1;
        y1_[i] = r.y1;
        area_[i] = r.area();
    }
}

std::vector<ExemplarMatch> ExemplarMatcher::select(const AxisBox& b, int k) const {
    if (k < 1) throw ConfigError("k_r must be at least 1");
    const std::size_t n = x0_.size();
    const double area_b = b.area();
    std::vector<ExemplarMatch> top;
    top.reserve(static_cast<std::size_t>(k) + 1);
    double floor_iou = 0.0;  // admission threshold once the list is full

    for (std::size_t i = 0; i < n; ++i) {
        const double iw = std::min(x1_[i], b.x1) - std::max(x0_[i], b.x0);
        const double ih = std::min(y1_[i], b.y1) - std::max(y0_[i], b.y0);
        if (iw <= 0.0 || ih <= 0.0) continue;
        const double inter = iw * ih;
        const double iou = inter / (area_[i] + area_b - inter);
        if (!(iou > floor_iou)) continue;
        // Insert keeping (overlap desc, index asc); later indices lose ties.
        auto pos = std::find_if(top.begin(), top.end(), [&](const ExemplarMatch& m) { return iou > m.overlap; });
        top.insert(pos, {i, iou, 0.0});
        if (top.size() > static_cast<std::size_t>(k)) top.pop_back();
        if (top.size() == static_cast<std::size_t>(k)) floor_iou = top.back().overlap;
    }
    double total = 0.0;
    for (const auto& m : top) total += m.overlap;
    for (auto& m : top) m.weight = m.overlap / total;
    return top;
}

std::vector<ExemplarMatch> select_exemplars(const PatchDetection& det, const ExemplarSet& set, int k_r) {
    return ExemplarMatcher(set).select(patch_box_to_relative(det.box, set.spec), k_r);
}

PolarBox map_box(std::span<const ExemplarMatch> matches, const ExemplarSet& set) {
    if (matches.empty()) throw DomainError("map_box needs at least one exemplar match");
    BoxVec4 acc = BoxVec4::Zero();
    for (const auto& m : matches) acc += m.weight * to_vec4(set.exemplars[m.exemplar].target);
    return from_vec4(acc);
}

MatchQuality match_quality(std::span<const ExemplarMatch> matches, const ExemplarSet& set) {
    MatchQuality q;
    for (const auto& m : matches) {
        q.containment += m.weight * set.exemplars[m.exemplar].containment;
        q.overlap += m.weight * m.overlap;
    }
    return q;
}

double scale_confidence(double score, std::span<const ExemplarMatch> matches, const ExemplarSet& set,
                        ConfidenceScaling mode) {
    if (mode == ConfidenceScaling::none) return score;
    const MatchQuality q = match_quality(matches, set);
    switch (mode) {
        case ConfidenceScaling::containment: return score * q.containment;
        case ConfidenceScaling::overlap: return score * q.overlap;
        default: return score * q.containment * q.overlap;
    }
}

BoxMapper::BoxMapper(std::span<const ExemplarSet> sets, int k_r, ConfidenceScaling mode)
    : k_r_(k_r), mode_(mode) {
    if (k_r < 1) throw ConfigError("k_r must be at least 1");
    matchers_.reserve(sets.size());
    for (const auto& s : sets) matchers_.emplace_back(s);
}

std::optional<FisheyeDetection> BoxMapper::map(const PatchDetection& det) const {
    if (det.patch < 0 || det.patch >= static_cast<int>(matchers_.size())) {
        throw DataError("detection refers to an unknown patch");
    }
    const auto& matcher = matchers_[det.patch];
    const auto matches = matcher.select(patch_box_to_relative(det.box, matcher.set().spec), k_r_);
    if (matches.empty()) return std::nullopt;
    const double s = scale_confidence(det.score, matches, matcher.set(), mode_);
    return FisheyeDetection::make(map_box(matches, matcher.set()), s, det.id);
}

std::vector<FisheyeDetection> BoxMapper::map_all(std::span<const PatchDetection> dets,
                                                 std::size_t* unmappable) const {
    std::vector<FisheyeDetection> out;
    out.reserve(dets.size());
    for (const auto& d : dets) {
        if (auto m = map(d)) {
            out.push_back(*m);
        } else if (unmappable) {
            ++*unmappable;
        }
    }
    return out;
}

}  // namespace fpw
