#include "fpw/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "fpw/error.hpp"

namespace fpw {

ImageMatch match(std::span<const FisheyeDetection> dets, const GroundTruth& gt, const Vec2& fisheye_center,
                 double iou_thresh) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
        return dets[a].id < dets[b].id;
    });

    ImageMatch out;
    out.n_gt = static_cast<int>(gt.boxes.size());
    std::vector<bool> taken(gt.boxes.size(), false);
    for (std::size_t i : order) {
        int best = -1;
        double best_iou = iou_thresh;
        for (std::size_t g = 0; g < gt.boxes.size(); ++g) {
            if (taken[g]) continue;
            const double iou = iou_rotated(dets[i].box, gt.boxes[g], fisheye_center);
            if (iou >= best_iou && (best < 0 || iou > best_iou)) {
                best = static_cast<int>(g);
                best_iou = iou;
            }
        }
        if (best >= 0) taken[best] = true;
        out.labels.push_back({dets[i].score, best >= 0});
        out.matched_gt.push_back(best);
    }
    out.false_negatives = static_cast<int>(std::count(taken.begin(), taken.end(), false));
    return out;
}

namespace {

/// Cumulative (tp, fp) after each distinct score, highest score first.
struct SweepPoint {
    double score;
    int tp;
    int fp;
};

std::vector<SweepPoint> sweep(std::span<const LabeledDetection> labels) {
    std::vector<LabeledDetection> sorted(labels.begin(), labels.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const LabeledDetection& a, const LabeledDetection& b) { return a.score > b.score; });
    std::vector<SweepPoint> pts;
    int tp = 0;
    int fp = 0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        (sorted[i].true_positive ? tp : fp)++;
        if (i + 1 == sorted.size() || sorted[i + 1].score != sorted[i].score) {
            pts.push_back({sorted[i].score, tp, fp});
        }
    }
    return pts;
}

}  // namespace

double average_precision(std::span<const LabeledDetection> labels, int total_gt, ApInterpolation mode) {
    if (total_gt <= 0) throw DomainError("average precision is undefined without ground truth");
    const auto pts = sweep(labels);
    std::vector<double> recall(pts.size());
    std::vector<double> precision(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        recall[i] = static_cast<double>(pts[i].tp) / total_gt;
        precision[i] = static_cast<double>(pts[i].tp) / (pts[i].tp + pts[i].fp);
    }
    // Precision envelope: best precision at this recall or beyond.
    for (std::size_t i = pts.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

    if (mode == ApInterpolation::eleven_point) {
        double ap = 0.0;
        for (int k = 0; k <= 10; ++k) {
            const double r = k / 10.0;
            double p = 0.0;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                if (recall[i] >= r) {
                    p = precision[i];
                    break;
                }
            }
            ap += p / 11.0;
        }
        return ap;
    }
    double ap = 0.0;
    double prev_r = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        ap += (recall[i] - prev_r) * precision[i];
        prev_r = recall[i];
    }
    return ap;
}

std::vector<double> lamr_fppi_samples() {
    std::vector<double> s(10);
    for (int i = 0; i < 10; ++i) s[i] = std::pow(10.0, -2.0 + 2.0 * i / 9.0);
    return s;
}

double lamr(std::span<const LabeledDetection> labels, int n_images, int total_gt, LamrAveraging mode) {
    if (total_gt <= 0) throw DomainError("miss rate is undefined without ground truth");
    if (n_images <= 0) throw DomainError("FPPI needs at least one image");
    const auto pts = sweep(labels);
    double acc = 0.0;
    for (double f : lamr_fppi_samples()) {
        double mr = 1.0;  // threshold above every score
        for (const auto& p : pts) {
            if (static_cast<double>(p.fp) / n_images <= f) {
                mr = std::min(mr, 1.0 - static_cast<double>(p.tp) / total_gt);
            }
        }
        acc += mode == LamrAveraging::geometric ? std::log(std::max(mr, 1e-10)) : mr;
    }
    return mode == LamrAveraging::geometric ? std::exp(acc / 10.0) : acc / 10.0;
}

EvalResult evaluate(std::span<const ImageDetections> dets, std::span<const GroundTruth> gt,
                    const Vec2& fisheye_center, const EvalOptions& options) {
    std::map<std::string, const ImageDetections*> by_id;
    for (const auto& d : dets) by_id[d.image_id] = &d;
    std::map<std::string, bool> seen;

    EvalResult r;
    r.report_threshold = options.report_threshold;
    std::vector<LabeledDetection> all;
    auto account = [&](const ImageMatch& m) {
        r.n_gt += m.n_gt;
        for (std::size_t i = 0; i < m.labels.size(); ++i) all.push_back(m.labels[i]);
        // Counts at the reporting threshold.
        int tp = 0;
        for (const auto& l : m.labels) {
            if (l.score < options.report_threshold) continue;
            (l.true_positive ? tp : r.fp)++;
        }
        r.tp += tp;
        r.fn += m.n_gt - tp;
    };
    for (const auto& g : gt) {
        auto it = by_id.find(g.image_id);
        std::span<const FisheyeDetection> ds;
        if (it != by_id.end()) ds = it->second->dets;
        account(match(ds, g, fisheye_center, options.iou_thresh));
        seen[g.image_id] = true;
        ++r.n_images;
    }
    for (const auto& d : dets) {
        if (seen.count(d.image_id)) continue;
        seen[d.image_id] = true;
        account(match(d.dets, GroundTruth{d.image_id, {}}, fisheye_center, options.iou_thresh));
        ++r.n_images;
    }
    r.n_detections = static_cast<int>(all.size());
    if (r.n_gt == 0) throw DomainError("evaluation needs at least one ground-truth box");

    r.ap = average_precision(all, r.n_gt, options.ap_mode);
    r.lamr = lamr(all, r.n_images, r.n_gt, options.lamr_mode);
    r.mr_fppi.push_back({0.0, 1.0});
    for (const auto& p : sweep(all)) {
        r.pr.push_back({static_cast<double>(p.tp) / r.n_gt, static_cast<double>(p.tp) / (p.tp + p.fp)});
        r.mr_fppi.push_back({static_cast<double>(p.fp) / r.n_images, 1.0 - static_cast<double>(p.tp) / r.n_gt});
    }
    return r;
}

EvalResult average_results(std::span<const EvalResult> runs) {
    if (runs.empty()) throw DomainError("nothing to average");
    EvalResult out = runs.front();
    out.ap = 0.0;
    out.lamr = 0.0;
    for (const auto& r : runs) {
        out.ap += r.ap / runs.size();
        out.lamr += r.lamr / runs.size();
    }
    return out;
}

std::string eval_report_json(const EvalResult& r) {
    nlohmann::json j;
    j["ap"] = r.ap;
    j["lamr"] = r.lamr;
    j["tp"] = r.tp;
    j["fp"] = r.fp;
    j["fn"] = r.fn;
    j["report_threshold"] = r.report_threshold;
    j["n_images"] = r.n_images;
    j["n_gt"] = r.n_gt;
    j["n_detections"] = r.n_detections;
    auto curve = [](const std::vector<CurvePoint>& pts) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& p : pts) a.push_back({p.x, p.y});
        return a;
    };
    j["pr"] = curve(r.pr);
    j["mr_fppi"] = curve(r.mr_fppi);
    return j.dump(2);
}

std::string curve_svg(std::span<const CurvePoint> pts, const std::string& title, const std::string& x_label,
                      const std::string& y_label, bool log_x) {
    constexpr double W = 480, H = 360, M = 50;
    auto fx = [&](double x) {
        double t = x;
        if (log_x) t = (std::log10(std::clamp(x, 1e-3, 10.0)) + 3.0) / 4.0;
        return M + std::clamp(t, 0.0, 1.0) * (W - 2 * M);
    };
    auto fy = [&](double y) { return H - M - std::clamp(y, 0.0, 1.0) * (H - 2 * M); };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
       << "<rect x=\"" << M << "\" y=\"" << M << "\" width=\"" << W - 2 * M << "\" height=\"" << H - 2 * M
       << "\" fill=\"none\" stroke=\"black\"/>\n"
       << "<text x=\"" << W / 2 << "\" y=\"" << M / 2 << "\" text-anchor=\"middle\">" << title << "</text>\n"
       << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << x_label << "</text>\n"
       << "<text x=\"12\" y=\"" << H / 2 << "\" transform=\"rotate(-90 12 " << H / 2
       << ")\" text-anchor=\"middle\">" << y_label << "</text>\n"
       << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (const auto& p : pts) os << fx(p.x) << ',' << fy(p.y) << ' ';
    os << "\"/>\n</svg>\n";
    return os.str();
}

}  // namespace fpw
