#include "fpw/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <sys/wait.h>
#include <unistd.h>

#include "fpw/error.hpp"

namespace fpw {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// Rejects keys of `j` outside `allowed`.
void check_keys(const Json& j, const std::string& section, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(section + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
        if (!ok.count(key)) throw ConfigError(section + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void read_deg(const Json& j, const char* key, double& out_rad) {
    if (j.contains(key)) out_rad = deg2rad(j.at(key).get<double>());
}

ApInterpolation parse_ap_mode(const std::string& s) {
    if (s == "all_point") return ApInterpolation::all_point;
    if (s == "11_point" || s == "eleven_point") return ApInterpolation::eleven_point;
    throw ConfigError("unknown AP interpolation '" + s + "'");
}

LamrAveraging parse_lamr_mode(const std::string& s) {
    if (s == "arithmetic") return LamrAveraging::arithmetic;
    if (s == "geometric") return LamrAveraging::geometric;
    throw ConfigError("unknown LAMR averaging '" + s + "'");
}

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const Json& j) {
    PipelineConfig c;
    try {
        check_keys(j, "config", {"camera", "layout", "exemplars", "mapping", "nms", "tta", "eval", "synth", "workers"});
        if (j.contains("camera")) {
            const Json& cj = j.at("camera");
            check_keys(cj, "camera", {"width", "height", "center", "radius", "max_angle_deg"});
            int w = c.camera.image_width;
            int h = c.camera.image_height;
            read(cj, "width", w);
            read(cj, "height", h);
            double radius = c.camera.radius;
            read(cj, "radius", radius);
            double theta0 = c.camera.max_angle;
            read_deg(cj, "max_angle_deg", theta0);
            c.camera = FisheyeCamera::centered(w, h, radius, theta0);
            if (cj.contains("center")) {
                c.camera.center_x = cj.at("center").at(0).get<double>();
                c.camera.center_y = cj.at("center").at(1).get<double>();
            }
        }
        if (j.contains("layout")) {
            const Json& lj = j.at("layout");
            check_keys(lj, "layout", {"patches", "columns", "rows", "patch_w", "patch_h", "composite_size",
                                      "phi1_deg", "alpha_x_deg", "alpha_y_deg", "phi2_base_deg", "phi2_step_deg",
                                      "phi2_offsets_deg"});
            auto& l = c.layout;
            read(lj, "patches", l.n_patches);
            read(lj, "columns", l.columns);
            read(lj, "rows", l.rows);
            read(lj, "patch_w", l.patch_w);
            read(lj, "patch_h", l.patch_h);
            read(lj, "composite_size", l.composite_size);
            read_deg(lj, "phi1_deg", l.phi1);
            read_deg(lj, "alpha_x_deg", l.alpha_x);
            read_deg(lj, "alpha_y_deg", l.alpha_y);
            read_deg(lj, "phi2_base_deg", l.phi2_base);
            if (lj.contains("patches") && !lj.contains("phi2_step_deg")) {
                l.phi2_step = 2.0 * kPi / l.n_patches;
            }
            read_deg(lj, "phi2_step_deg", l.phi2_step);
            if (lj.contains("phi2_offsets_deg")) {
                c.phi2_offsets.clear();
                for (const auto& v : lj.at("phi2_offsets_deg")) c.phi2_offsets.push_back(deg2rad(v.get<double>()));
            }
        }
        if (j.contains("exemplars")) {
            const Json& ej = j.at("exemplars");
            check_keys(ej, "exemplars", {"overlap", "min_containment", "min_target_height", "max_samples", "grid",
                                         "cache_dir", "build_missing"});
            read(ej, "overlap", c.overlap);
            read(ej, "min_containment", c.exemplar_params.min_containment);
            read(ej, "min_target_height", c.exemplar_params.min_target_height);
            read(ej, "max_samples", c.exemplar_params.max_samples);
            if (ej.contains("cache_dir")) c.cache_dir = ej.at("cache_dir").get<std::string>();
            read(ej, "build_missing", c.build_missing_cache);
            if (ej.contains("grid")) {
                const Json& gj = ej.at("grid");
                check_keys(gj, "exemplars.grid", {"person_heights", "diameters", "camera_heights"});
                c.target_grid.clear();
                for (double cam_h : gj.at("camera_heights").get<std::vector<double>>()) {
                    for (double h : gj.at("person_heights").get<std::vector<double>>()) {
                        for (double d : gj.at("diameters").get<std::vector<double>>()) {
                            c.target_grid.push_back({SceneParams{cam_h}, PersonTemplate{h, d}});
                        }
                    }
                }
            }
        }
        if (j.contains("mapping")) {
            const Json& mj = j.at("mapping");
            check_keys(mj, "mapping", {"k_r", "confidence_scaling", "min_score", "class"});
            read(mj, "k_r", c.k_r);
            if (mj.contains("confidence_scaling")) {
                c.scaling = parse_confidence_scaling(mj.at("confidence_scaling").get<std::string>());
            }
            read(mj, "min_score", c.min_score);
            read(mj, "class", c.detection_class);
        }
        if (j.contains("nms")) {
            const Json& nj = j.at("nms");
            check_keys(nj, "nms", {"stage1", "stage1_iou", "method", "hard_iou", "a_g", "bbr_kernel_frac",
                                   "score_floor"});
            read(nj, "stage1", c.nms.stage1_enabled);
            read(nj, "stage1_iou", c.nms.stage1_iou);
            if (nj.contains("method")) c.nms.method = parse_stage2_method(nj.at("method").get<std::string>());
            read(nj, "hard_iou", c.nms.hard_iou);
            read(nj, "a_g", c.nms.a_g);
            read(nj, "bbr_kernel_frac", c.nms.bbr_kernel_frac);
            read(nj, "score_floor", c.nms.score_floor);
        }
        read(j, "tta", c.tta);
        if (j.contains("eval")) {
            const Json& vj = j.at("eval");
            check_keys(vj, "eval", {"iou", "report_threshold", "ap", "lamr"});
            read(vj, "iou", c.eval.iou_thresh);
            read(vj, "report_threshold", c.eval.report_threshold);
            if (vj.contains("ap")) c.eval.ap_mode = parse_ap_mode(vj.at("ap").get<std::string>());
            if (vj.contains("lamr")) c.eval.lamr_mode = parse_lamr_mode(vj.at("lamr").get<std::string>());
        }
        if (j.contains("synth")) {
            const Json& sj = j.at("synth");
            check_keys(sj, "synth", {"min_visible"});
            read(sj, "min_visible", c.min_visible);
        }
        read(j, "workers", c.workers);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const DomainError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path.string());
    Json j;
    try {
        j = Json::parse(is);
    } catch (const Json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

PipelineConfig PipelineConfig::resolve(const std::optional<std::filesystem::path>& path) {
    if (path) return load(*path);
    if (const char* env = std::getenv("FPW_CONFIG"); env && *env) return load(env);
    return {};
}

Json PipelineConfig::to_json() const {
    Json offsets = Json::array();
    for (double o : phi2_offsets) offsets.push_back(rad2deg(o));
    std::set<double> heights, diameters, cam_heights;
    for (const auto& g : target_grid) {
        heights.insert(g.person.height);
        diameters.insert(g.person.diameter);
        cam_heights.insert(g.scene.camera_height);
    }
    const auto& l = layout;
    return {
        {"camera",
         {{"width", camera.image_width},
          {"height", camera.image_height},
          {"center", {camera.center_x, camera.center_y}},
          {"radius", camera.radius},
          {"max_angle_deg", rad2deg(camera.max_angle)}}},
        {"layout",
         {{"patches", l.n_patches},
          {"columns", l.columns},
          {"rows", l.rows},
          {"patch_w", l.patch_w},
          {"patch_h", l.patch_h},
          {"composite_size", l.composite_size},
          {"phi1_deg", rad2deg(l.phi1)},
          {"alpha_x_deg", rad2deg(l.alpha_x)},
          {"alpha_y_deg", rad2deg(l.alpha_y)},
          {"phi2_base_deg", rad2deg(l.phi2_base)},
          {"phi2_step_deg", rad2deg(l.phi2_step)},
          {"phi2_offsets_deg", offsets}}},
        {"exemplars",
         {{"overlap", overlap},
          {"min_containment", exemplar_params.min_containment},
          {"min_target_height", exemplar_params.min_target_height},
          {"max_samples", exemplar_params.max_samples},
          {"grid",
           {{"person_heights", std::vector<double>(heights.begin(), heights.end())},
            {"diameters", std::vector<double>(diameters.begin(), diameters.end())},
            {"camera_heights", std::vector<double>(cam_heights.begin(), cam_heights.end())}}},
          {"cache_dir", cache_dir.string()},
          {"build_missing", build_missing_cache}}},
        {"mapping",
         {{"k_r", k_r}, {"confidence_scaling", to_string(scaling)}, {"min_score", min_score},
          {"class", detection_class}}},
        {"nms",
         {{"stage1", nms.stage1_enabled},
          {"stage1_iou", nms.stage1_iou},
          {"method", to_string(nms.method)},
          {"hard_iou", nms.hard_iou},
          {"a_g", nms.a_g},
          {"bbr_kernel_frac", nms.bbr_kernel_frac},
          {"score_floor", nms.score_floor}}},
        {"tta", tta},
        {"eval",
         {{"iou", eval.iou_thresh},
          {"report_threshold", eval.report_threshold},
          {"ap", eval.ap_mode == ApInterpolation::all_point ? "all_point" : "11_point"},
          {"lamr", eval.lamr_mode == LamrAveraging::arithmetic ? "arithmetic" : "geometric"}}},
        {"synth", {{"min_visible", min_visible}}},
        {"workers", workers}};
}

void PipelineConfig::validate() const {
    try {
        camera.validate();
        layout.validate();
        nms.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    if (phi2_offsets.empty()) throw ConfigError("at least one composite offset is required");
    if (!(overlap > 0.0 && overlap < 1.0)) throw ConfigError("exemplar overlap must be in (0, 1)");
    if (target_grid.empty()) throw ConfigError("empty target parameter grid");
    for (const auto& g : target_grid) {
        if (!(g.person.height > 0.0 && g.person.diameter > 0.0 && g.scene.camera_height > g.person.height)) {
            throw ConfigError("target grid entry " + target_param_id(g.scene, g.person) + " is not valid");
        }
    }
    if (!(exemplar_params.min_containment >= 0.0 && exemplar_params.min_containment <= 1.0)) {
        throw ConfigError("min_containment must be in [0, 1]");
    }
    if (exemplar_params.max_samples < 0) throw ConfigError("max_samples must be >= 0");
    if (k_r < 1) throw ConfigError("k_r must be >= 1");
    if (!(min_score >= 0.0 && min_score <= 1.0)) throw ConfigError("min_score must be in [0, 1]");
    if (!(eval.iou_thresh > 0.0 && eval.iou_thresh <= 1.0)) throw ConfigError("eval iou must be in (0, 1]");
    if (!(min_visible >= 0.0 && min_visible <= 1.0)) throw ConfigError("min_visible must be in [0, 1]");
}

CompositeLayout PipelineConfig::composite_layout(int composite) const {
    CompositeLayout l = layout;
    l.phi2_base = layout.phi2_base + phi2_offsets.at(composite);
    return l;
}

void canonical_sort(std::vector<PatchDetection>& dets) {
    std::stable_sort(dets.begin(), dets.end(), [](const PatchDetection& a, const PatchDetection& b) {
        return std::tie(a.patch, a.box.x0, a.box.y0, a.box.x1, a.box.y1, a.score) <
               std::tie(b.patch, b.box.x0, b.box.y0, b.box.x1, b.box.y1, b.score);
    });
    for (std::size_t i = 0; i < dets.size(); ++i) dets[i].id = i;
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)), luts_(config_.cache_dir / "luts") {
    config_.validate();
    for (int k = 0; k < config_.n_composites(); ++k) layouts_.push_back(config_.composite_layout(k));
    sets_.resize(layouts_.size());
    mappers_.resize(layouts_.size());
}

std::filesystem::path Pipeline::exemplar_cache_path(int composite) const {
    const auto h = exemplar_config_hash(config_.camera, layouts_.at(composite), config_.overlap, config_.target_grid,
                                        config_.exemplar_params);
    return config_.cache_dir / ("exemplars_" + hex64(h) + ".jsonl");
}

const std::vector<ExemplarSet>& Pipeline::exemplars(int composite) {
    std::lock_guard lock(mu_);
    auto& slot = sets_.at(composite);
    if (slot) return *slot;
    const auto& layout = layouts_[composite];
    const auto hash = exemplar_config_hash(config_.camera, layout, config_.overlap, config_.target_grid,
                                           config_.exemplar_params);
    const auto path = exemplar_cache_path(composite);
    if (std::filesystem::exists(path)) {
        slot = std::make_unique<std::vector<ExemplarSet>>(load_exemplar_cache(path, hash, layout));
        return *slot;
    }
    if (!config_.build_missing_cache) {
        throw DataError("exemplar cache missing: " + path.string() + " (run `fpw exemplars build`)");
    }
    if (!targets_) {
        targets_ = generate_target_grid(config_.camera, config_.overlap, config_.target_grid,
                                        config_.exemplar_params.min_target_height);
    }
    auto sets = build_exemplar_sets(layout, *targets_, config_.camera, config_.exemplar_params, config_.workers);
    std::filesystem::create_directories(config_.cache_dir);
    save_exemplar_cache(path, sets, hash);
    slot = std::make_unique<std::vector<ExemplarSet>>(std::move(sets));
    return *slot;
}

const BoxMapper& Pipeline::mapper(int composite) {
    const auto& sets = exemplars(composite);
    std::lock_guard lock(mu_);
    auto& slot = mappers_.at(composite);
    if (!slot) slot = std::make_unique<BoxMapper>(sets, config_.k_r, config_.scaling);
    return *slot;
}

CompositeImage Pipeline::warp(const Image& fisheye, int composite) {
    if (fisheye.width != config_.camera.image_width || fisheye.height != config_.camera.image_height) {
        throw DataError("image is " + std::to_string(fisheye.width) + "x" + std::to_string(fisheye.height) +
                        " but the camera describes " + std::to_string(config_.camera.image_width) + "x" +
                        std::to_string(config_.camera.image_height));
    }
    return build_composite(fisheye, layouts_.at(composite), config_.camera, luts_);
}

std::vector<PatchDetection> Pipeline::ingest(std::span<const CompositeDetection> dets, int composite) const {
    const auto& layout = layouts_.at(composite);
    std::vector<PatchDetection> out;
    for (const auto& d : dets) {
        if (d.cls != config_.detection_class || d.score < config_.min_score) continue;
        PatchBox pb;
        try {
            pb = composite_box_to_patch(d.box, layout);
        } catch (const DataError& e) {
            throw DataError("detection line " + std::to_string(d.line) + ": " + e.what());
        }
        out.push_back({pb.patch, pb.box, d.score, 0});
    }
    canonical_sort(out);
    return out;
}

std::vector<FisheyeDetection> Pipeline::map(std::span<const PatchDetection> dets, int composite,
                                            std::size_t* unmappable) {
    const BoxMapper& m = mapper(composite);
    if (config_.nms.stage1_enabled) {
        const auto kept = stage1_nms(dets, config_.nms.stage1_iou);
        return m.map_all(kept, unmappable);
    }
    return m.map_all(dets, unmappable);
}

FrameResult Pipeline::run_patch_detections(const Image* image,
                                           const std::vector<std::vector<PatchDetection>>& per_composite,
                                           std::span<const int> composites) {
    FrameResult res;
    std::vector<FisheyeDetection> pooled;
    for (int k : composites) {
        // Load exemplars before timing so a first-use build is not charged to mapping.
        mapper(k);
        if (image) {
            const auto t0 = Clock::now();
            warp(*image, k);
            res.timing.warp_ms += ms_since(t0);
        }
        const auto& dets = per_composite.at(k);
        res.ingested += dets.size();
        auto t0 = Clock::now();
        std::vector<PatchDetection> kept(dets.begin(), dets.end());
        if (config_.nms.stage1_enabled) kept = stage1_nms(kept, config_.nms.stage1_iou);
        res.timing.nms_ms += ms_since(t0);
        t0 = Clock::now();
        auto mapped = mapper(k).map_all(kept, &res.unmappable);
        res.timing.mapping_ms += ms_since(t0);
        pooled.insert(pooled.end(), mapped.begin(), mapped.end());
    }
    for (std::size_t i = 0; i < pooled.size(); ++i) pooled[i].id = i;
    const auto t0 = Clock::now();
    res.detections = apply_stage2(pooled, config_.nms, config_.camera);
    res.timing.nms_ms += ms_since(t0);
    return res;
}

FrameResult Pipeline::run_frame(const Image* image, std::span<const CompositeDetection> dets, int composite) {
    std::vector<std::vector<PatchDetection>> per(layouts_.size());
    per.at(composite) = ingest(dets, composite);
    const int ks[] = {composite};
    return run_patch_detections(image, per, ks);
}

FrameResult Pipeline::run_frame_tta(const Image* image, const CompositeInputs& dets) {
    if (dets.size() != layouts_.size()) {
        throw DataError("expected detections for " + std::to_string(layouts_.size()) + " composites, got " +
                        std::to_string(dets.size()));
    }
    std::vector<std::vector<PatchDetection>> per(layouts_.size());
    std::vector<int> ks;
    for (std::size_t k = 0; k < dets.size(); ++k) {
        per[k] = ingest(dets[k], static_cast<int>(k));
        ks.push_back(static_cast<int>(k));
    }
    return run_patch_detections(image, per, ks);
}

std::vector<CompositeDetection> run_detector_command(const std::string& command, const Image& composite,
                                                     const std::string& composite_id, double* elapsed_ms) {
    char tmpl[] = "/tmp/fpw-composite-XXXXXX";
    const int fd = mkstemp(tmpl);
    if (fd < 0) throw DataError("cannot create a temporary file for the detector");
    close(fd);
    const std::filesystem::path png = std::string(tmpl) + ".png";
    std::filesystem::rename(tmpl, png);
    write_png(png, composite);

    auto quote = [](const std::string& s) {
        std::string q = "'";
        for (char ch : s) q += ch == '\'' ? std::string("'\\''") : std::string(1, ch);
        return q + "'";
    };
    const std::string cmd = command + " " + quote(png.string()) + " " + quote(composite_id);
    const auto t0 = Clock::now();
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        std::filesystem::remove(png);
        throw DataError("cannot start detector: " + command);
    }
    std::string output;
    std::array<char, 4096> buf;
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) output.append(buf.data(), n);
    const int status = pclose(pipe);
    if (elapsed_ms) *elapsed_ms = ms_since(t0);
    std::filesystem::remove(png);
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        throw DataError("detector command failed: " + command);
    }
    std::istringstream is(output);
    auto dets = read_composite_detections(is, "detector stdout");
    for (auto& d : dets) {
        if (d.composite_id != composite_id) d.composite_id = composite_id;
    }
    return dets;
}

}  // namespace fpw
