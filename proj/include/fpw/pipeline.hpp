#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpw/boxmap.hpp"
#include "fpw/compositor.hpp"
#include "fpw/evaluation.hpp"
#include "fpw/exemplars.hpp"
#include "fpw/nms.hpp"
#include "fpw/serialization.hpp"

namespace fpw {

/// Every tunable of the system. Angles are radians in memory and degrees in
/// the JSON form.
struct PipelineConfig {
    FisheyeCamera camera = FisheyeCamera::centered(800, 800, 400.0);
    CompositeLayout layout;
    std::vector<double> phi2_offsets{0.0, deg2rad(22.5)};  // one composite per offset

    double overlap = 0.8;
    ExemplarParams exemplar_params;
    std::vector<TargetParams> target_grid = default_target_grid();
    std::filesystem::path cache_dir = "fpw_cache";
    bool build_missing_cache = true;

    int k_r = 10;
    ConfidenceScaling scaling = ConfidenceScaling::both;
    double min_score = 0.05;
    std::string detection_class = "person";

    NmsConfig nms;
    bool tta = false;
    EvalOptions eval;
    double min_visible = 0.3;  // perfect detector
    unsigned workers = 0;      // 0 = hardware concurrency

    /// Missing keys keep their defaults; unknown keys are a ConfigError.
    static PipelineConfig from_json(const Json& j);
    static PipelineConfig load(const std::filesystem::path& path);
    /// `path` if given, else $FPW_CONFIG if set, else defaults.
    static PipelineConfig resolve(const std::optional<std::filesystem::path>& path);
    Json to_json() const;

    void validate() const;

    int n_composites() const { return static_cast<int>(phi2_offsets.size()); }
    CompositeLayout composite_layout(int composite) const;
};

/// Milliseconds per frame. The detector time is whatever the caller reports
/// (the external command's wall time, or zero for file input).
struct TimingReport {
    double warp_ms = 0.0;
    double detector_ms = 0.0;
    double mapping_ms = 0.0;
    double nms_ms = 0.0;

    double total_ms() const { return warp_ms + detector_ms + mapping_ms + nms_ms; }
};

struct FrameResult {
    std::vector<FisheyeDetection> detections;
    TimingReport timing;
    std::size_t ingested = 0;    // detections accepted from the input
    std::size_t unmappable = 0;  // detections no exemplar overlapped
};

/// Composite detections of one frame, per composite.
using CompositeInputs = std::vector<std::vector<CompositeDetection>>;

class Pipeline {
public:
    explicit Pipeline(PipelineConfig config);

    const PipelineConfig& config() const { return config_; }
    const CompositeLayout& layout(int composite) const { return layouts_.at(composite); }

    std::filesystem::path exemplar_cache_path(int composite) const;

    /// Exemplar sets of a composite, loaded from the cache directory or built
    /// (and saved) on first use. Throws DataError when the cache is missing and
    /// building is disabled.
    const std::vector<ExemplarSet>& exemplars(int composite);

    /// Warp tables live in memory and under <cache_dir>/luts.
    CompositeImage warp(const Image& fisheye, int composite);
    LutCache& luts() { return luts_; }

    /// Keeps detections of the configured class with score >= min_score,
    /// assigns them to patches and orders them canonically (patch, box,
    /// score) before numbering, so the result does not depend on input order.
    std::vector<PatchDetection> ingest(std::span<const CompositeDetection> dets, int composite) const;

    /// Stage-1 NMS and exemplar mapping, without the fisheye-frame NMS.
    std::vector<FisheyeDetection> map(std::span<const PatchDetection> dets, int composite,
                                      std::size_t* unmappable = nullptr);

    /// One composite end to end. `image` may be null when only detections are
    /// available; the warp stage is then skipped.
    FrameResult run_frame(const Image* image, std::span<const CompositeDetection> dets, int composite = 0);

    /// All composites, mapped detections pooled before a single stage-2 NMS.
    FrameResult run_frame_tta(const Image* image, const CompositeInputs& dets);

    /// Same as run_frame / run_frame_tta for detections already in patch
    /// coordinates (the perfect detector); `per_composite[k]` feeds composite
    /// k, and `composites` lists which ones take part.
    FrameResult run_patch_detections(const Image* image, const std::vector<std::vector<PatchDetection>>& per_composite,
                                     std::span<const int> composites);

private:
    PipelineConfig config_;
    std::vector<CompositeLayout> layouts_;
    LutCache luts_;
    std::mutex mu_;
    std::optional<std::vector<TargetBoxSet>> targets_;
    std::vector<std::unique_ptr<std::vector<ExemplarSet>>> sets_;
    std::vector<std::unique_ptr<BoxMapper>> mappers_;

    const BoxMapper& mapper(int composite);
};

/// Canonical order used for ingestion: patch, then box corners, then score.
void canonical_sort(std::vector<PatchDetection>& dets);

/// Runs `command` with the composite PNG path and composite id appended as
/// arguments and parses its stdout as composite detection lines. The wall
/// time is stored in `*elapsed_ms` when given. Throws DataError when the
/// command fails.
std::vector<CompositeDetection> run_detector_command(const std::string& command, const Image& composite,
                                                     const std::string& composite_id,
                                                     double* elapsed_ms = nullptr);

}  // namespace fpw
