#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpw/exemplars.hpp"
#include "fpw/rotrect.hpp"

namespace fpw {

/// Detection in a patch, after cropping to the patch (patch pixels).
struct PatchDetection {
    int patch = 0;
    AxisBox box;
    double score = 0.0;
    std::size_t id = 0;  // ingestion order, used for deterministic tie-breaks
};

/// Detection mapped to the fisheye frame. `raw_score` is the score the
/// detection entered the fisheye-frame NMS with; rescoring NMS variants always
/// start from it, so `score` can be rewritten without losing the original.
struct FisheyeDetection {
    PolarBox box;
    double score = 0.0;
    double raw_score = 0.0;
    std::size_t id = 0;

    static FisheyeDetection make(const PolarBox& box, double score, std::size_t id = 0) {
        return {box, score, score, id};
    }
};

struct ExemplarMatch {
    std::size_t exemplar = 0;  // index into ExemplarSet::exemplars
    double overlap = 0.0;      // IOU of the detection with the reference box
    double weight = 0.0;       // overlap normalized over the match set
};

enum class ConfidenceScaling { none, containment, overlap, both };

ConfidenceScaling parse_confidence_scaling(const std::string& name);
std::string to_string(ConfidenceScaling mode);

/// Patch-pixel box to relative [0, 1]^2 patch coordinates.
AxisBox patch_box_to_relative(const AxisBox& box, const PatchSpec& spec);

/// Reference boxes of one exemplar set laid out for fast overlap scans.
class ExemplarMatcher {
public:
    explicit ExemplarMatcher(const ExemplarSet& set);

    const ExemplarSet& set() const { return *set_; }

    /// The up-to-k exemplars with the highest non-zero IOU against `rel_box`
    /// (relative coordinates), sorted by decreasing overlap with ties broken
    /// by exemplar index. Weights sum to one. Empty when nothing overlaps.
    std::vector<ExemplarMatch> select(const AxisBox& rel_box, int k) const;

private:
    const ExemplarSet* set_;
    std::vector<double> x0_, y0_, x1_, y1_, area_;
};

std::vector<ExemplarMatch> select_exemplars(const PatchDetection& det, const ExemplarSet& set, int k_r = 10);

/// Overlap-weighted average of the matched targets' [cx, cy, w, h].
PolarBox map_box(std::span<const ExemplarMatch> matches, const ExemplarSet& set);

/// Weighted containment and weighted overlap of the matches.
struct MatchQuality {
    double containment = 0.0;
    double overlap = 0.0;
};
MatchQuality match_quality(std::span<const ExemplarMatch> matches, const ExemplarSet& set);

/// score * f_c* * f_ov*, with factors dropped according to `mode`.
double scale_confidence(double score, std::span<const ExemplarMatch> matches, const ExemplarSet& set,
                        ConfidenceScaling mode);

/// Maps patch detections of one composite to the fisheye frame.
class BoxMapper {
public:
    BoxMapper(std::span<const ExemplarSet> sets, int k_r = 10, ConfidenceScaling mode = ConfidenceScaling::both);

    /// nullopt when no exemplar overlaps the detection.
    std::optional<FisheyeDetection> map(const PatchDetection& det) const;

    /// Maps all detections, skipping unmappable ones; their number is added to
    /// `*unmappable` when given.
    std::vector<FisheyeDetection> map_all(std::span<const PatchDetection> dets,
                                          std::size_t* unmappable = nullptr) const;

    int k_r() const { return k_r_; }
    ConfidenceScaling mode() const { return mode_; }

private:
    std::vector<ExemplarMatcher> matchers_;
    int k_r_;
    ConfidenceScaling mode_;
};

}  // namespace fpw
