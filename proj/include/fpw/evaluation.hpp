#pragma once

#include <span>
#include <string>
#include <vector>

#include "fpw/boxmap.hpp"
#include "fpw/rotrect.hpp"

namespace fpw {

struct GroundTruth {
    std::string image_id;
    std::vector<PolarBox> boxes;
};

/// A scored detection after matching: true positive or false positive.
struct LabeledDetection {
    double score = 0.0;
    bool true_positive = false;
};

struct ImageMatch {
    std::vector<LabeledDetection> labels;  // in decreasing score order
    std::vector<int> matched_gt;           // per label, GT index or -1
    int n_gt = 0;
    int false_negatives = 0;
};

/// Greedy matching in decreasing score order: each detection takes the
/// unmatched ground-truth box with the highest rotated IOU >= iou_thresh.
ImageMatch match(std::span<const FisheyeDetection> dets, const GroundTruth& gt, const Vec2& fisheye_center,
                 double iou_thresh = 0.5);

enum class ApInterpolation { all_point, eleven_point };
enum class LamrAveraging { arithmetic, geometric };

/// Area under the precision envelope. Tied scores enter the curve together.
/// Throws DomainError when total_gt is zero.
double average_precision(std::span<const LabeledDetection> labels, int total_gt,
                         ApInterpolation mode = ApInterpolation::all_point);

/// Mean miss rate at 10 FPPI values log-spaced over [0.01, 1]. At each FPPI
/// value the lowest miss rate reachable without exceeding it is used.
/// Throws DomainError when total_gt is zero.
double lamr(std::span<const LabeledDetection> labels, int n_images, int total_gt,
            LamrAveraging mode = LamrAveraging::arithmetic);

/// The 10 FPPI sample points.
std::vector<double> lamr_fppi_samples();

struct CurvePoint {
    double x = 0.0;
    double y = 0.0;
};

struct EvalResult {
    double ap = 0.0;
    double lamr = 1.0;
    std::vector<CurvePoint> pr;      // (recall, precision)
    std::vector<CurvePoint> mr_fppi; // (fppi, miss rate)
    int tp = 0;
    int fp = 0;
    int fn = 0;
    double report_threshold = 0.0;
    int n_images = 0;
    int n_gt = 0;
    int n_detections = 0;
};

struct EvalOptions {
    double iou_thresh = 0.5;
    double report_threshold = 0.2;  // score cutoff for the TP/FP/FN counts
    ApInterpolation ap_mode = ApInterpolation::all_point;
    LamrAveraging lamr_mode = LamrAveraging::arithmetic;
};

struct ImageDetections {
    std::string image_id;
    std::vector<FisheyeDetection> dets;
};

/// Evaluates every ground-truth image; images without detections count as
/// having none. Detections for images without ground truth are false positives.
EvalResult evaluate(std::span<const ImageDetections> dets, std::span<const GroundTruth> gt,
                    const Vec2& fisheye_center, const EvalOptions& options = {});

/// Averages AP and LAMR of several runs (the two composite offsets).
EvalResult average_results(std::span<const EvalResult> runs);

std::string eval_report_json(const EvalResult& r);

/// Minimal SVG line plot of a curve; log-scaled x axis when `log_x`.
std::string curve_svg(std::span<const CurvePoint> pts, const std::string& title, const std::string& x_label,
                      const std::string& y_label, bool log_x);

}  // namespace fpw
