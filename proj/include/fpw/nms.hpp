#pragma once

#include <span>
#include <string>
#include <vector>

#include "fpw/boxmap.hpp"

namespace fpw {

enum class Stage2Method { hard, gaussian, bbr };

Stage2Method parse_stage2_method(const std::string& name);  // "hard", "gnms", "bbr"
std::string to_string(Stage2Method m);

struct NmsConfig {
    bool stage1_enabled = true;
    double stage1_iou = 0.8;
    Stage2Method method = Stage2Method::gaussian;
    double hard_iou = 0.45;
    double a_g = 0.2;
    double bbr_kernel_frac = 0.04;  // of the fisheye image width
    double score_floor = 0.001;

    void validate() const;
};

/// Greedy patch-frame NMS, run independently per patch. A lower-scored box is
/// dropped when its axis-aligned IOU with a kept box reaches `iou_thresh`.
std::vector<PatchDetection> stage1_nms(std::span<const PatchDetection> dets, double iou_thresh = 0.8);

/// Greedy fisheye-frame NMS with exact rotated IOU.
std::vector<FisheyeDetection> hard_nms_fisheye(std::span<const FisheyeDetection> dets, const Vec2& fisheye_center,
                                               double iou_thresh = 0.45);

/// Gaussian soft NMS: repeatedly take the highest-scoring remaining detection
/// and multiply every other remaining score by exp(-IoU^2 / a_g). Scores start
/// from each detection's raw_score. Output is in selection order; detections
/// whose final score is below `score_floor` are dropped.
std::vector<FisheyeDetection> gaussian_soft_nms(std::span<const FisheyeDetection> dets,
                                                const Vec2& fisheye_center, double a_g = 0.2,
                                                double score_floor = 0.001);

/// Bounding box refinement: mean-shift on box centers with a flat disk kernel
/// of `kernel_radius` px, then one score-weighted average box per cluster
/// carrying the cluster's maximum score. Output sorted by score.
std::vector<FisheyeDetection> bbr(std::span<const FisheyeDetection> dets, double kernel_radius);

std::vector<FisheyeDetection> apply_stage2(std::span<const FisheyeDetection> dets, const NmsConfig& config,
                                           const FisheyeCamera& cam);

}  // namespace fpw
