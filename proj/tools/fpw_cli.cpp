// fpw: command-line front end.
//
//   fpw [global options] <command> ...
//
// Exit status: 0 success, 1 unexpected failure, 2 configuration error,
// 3 data error.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "fpw/error.hpp"
#include "fpw/parallel.hpp"
#include "fpw/pipeline.hpp"
#include "fpw/synth.hpp"

namespace fs = std::filesystem;
using namespace fpw;

namespace {

struct Overrides {
    std::string config;
    std::optional<unsigned> workers;
    std::string cache_dir;
    bool no_build_cache = false;
    std::string nms;
    std::optional<double> a_g;
    std::optional<double> stage1_iou;
    std::optional<double> hard_iou;
    bool no_stage1 = false;
    std::optional<int> k_r;
    std::string scaling;
    std::optional<double> min_score;
    bool tta = false;
};

PipelineConfig load_config(const Overrides& o) {
    PipelineConfig c = PipelineConfig::resolve(o.config.empty() ? std::nullopt : std::optional<fs::path>(o.config));
    if (o.workers) c.workers = *o.workers;
    if (!o.cache_dir.empty()) c.cache_dir = o.cache_dir;
    if (o.no_build_cache) c.build_missing_cache = false;
    if (!o.nms.empty()) c.nms.method = parse_stage2_method(o.nms);
    if (o.a_g) c.nms.a_g = *o.a_g;
    if (o.stage1_iou) c.nms.stage1_iou = *o.stage1_iou;
    if (o.hard_iou) c.nms.hard_iou = *o.hard_iou;
    if (o.no_stage1) c.nms.stage1_enabled = false;
    if (o.k_r) c.k_r = *o.k_r;
    if (!o.scaling.empty()) c.scaling = parse_confidence_scaling(o.scaling);
    if (o.min_score) c.min_score = *o.min_score;
    if (o.tta) c.tta = true;
    c.validate();
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    if (!is) throw DataError("cannot open " + p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Json read_json_file(const fs::path& p) {
    try {
        return Json::parse(slurp(p));
    } catch (const Json::exception& e) {
        throw DataError(p.string() + ": " + e.what());
    }
}

void write_output(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
    } else {
        write_file_atomic(path, content);
    }
}

std::string fisheye_dets_text(const std::vector<ImageDetections>& dets, const FisheyeCamera& cam) {
    std::ostringstream os;
    write_fisheye_detections(os, dets, cam.center());
    return os.str();
}

Json timing_json(const TimingReport& t) {
    return {{"warp_ms", t.warp_ms}, {"detector_ms", t.detector_ms}, {"mapping_ms", t.mapping_ms},
            {"nms_ms", t.nms_ms}, {"total_ms", t.total_ms()}};
}

Json summary_stats(std::vector<double> v) {
    if (v.empty()) return nullptr;
    std::sort(v.begin(), v.end());
    double mean = 0.0;
    for (double x : v) mean += x / v.size();
    auto pct = [&](double p) { return v[std::min(v.size() - 1, static_cast<std::size_t>(p * (v.size() - 1) + 0.5))]; };
    return {{"mean", mean}, {"p50", pct(0.5)}, {"p90", pct(0.9)}, {"p99", pct(0.99)}, {"max", v.back()}};
}

/// Composites a run takes part in: all of them with TTA, else the selected one.
std::vector<int> active_composites(const PipelineConfig& c, int selected) {
    if (c.tta) {
        std::vector<int> ks(c.n_composites());
        for (int k = 0; k < c.n_composites(); ++k) ks[k] = k;
        return ks;
    }
    if (selected < 0 || selected >= c.n_composites()) throw ConfigError("composite index out of range");
    return {selected};
}

std::string eval_and_report(const std::vector<ImageDetections>& dets, const std::vector<GroundTruth>& gt,
                            const PipelineConfig& c, const std::string& report_path) {
    const EvalResult r = evaluate(dets, gt, c.camera.center(), c.eval);
    const std::string text = eval_report_json(r);
    if (!report_path.empty()) write_file_atomic(report_path, text + "\n");
    return text;
}

// ---- commands ----

int cmd_luts_build(const PipelineConfig& c, const std::string& out_dir) {
    const fs::path dir = out_dir.empty() ? c.cache_dir / "luts" : fs::path(out_dir);
    LutCache luts(dir);
    for (int k = 0; k < c.n_composites(); ++k) {
        const auto layout = c.composite_layout(k);
        for (const auto& spec : layout_patch_specs(layout)) luts.get(spec, c.camera);
        fs::create_directories(dir);
        write_file_atomic(dir / ("composite_" + std::to_string(k) + ".json"), patch_sidecar_json(layout));
    }
    std::cout << Json{{"directory", dir.string()}, {"luts", luts.size()}}.dump() << '\n';
    return 0;
}

int cmd_warp(const PipelineConfig& c, const std::string& image_path, const std::string& out, int composite) {
    if (composite < 0 || composite >= c.n_composites()) throw ConfigError("composite index out of range");
    Pipeline p(c);
    const Image img = read_png(image_path);
    const CompositeImage comp = p.warp(img, composite);
    write_png(out, comp.raster);
    write_file_atomic(out + ".json", patch_sidecar_json(p.layout(composite)));
    return 0;
}

int cmd_exemplars_build(const PipelineConfig& cfg, bool force) {
    PipelineConfig c = cfg;
    c.build_missing_cache = true;
    Pipeline p(c);
    Json report = Json::array();
    for (int k = 0; k < c.n_composites(); ++k) {
        const auto path = p.exemplar_cache_path(k);
        if (force && fs::exists(path)) fs::remove(path);
        const auto t0 = std::chrono::steady_clock::now();
        const auto& sets = p.exemplars(k);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::vector<std::size_t> counts;
        for (const auto& s : sets) counts.push_back(s.size());
        report.push_back({{"composite", k}, {"cache", path.string()}, {"per_patch", counts}, {"seconds", secs}});
    }
    std::cout << report.dump(2) << '\n';
    return 0;
}

/// Composite detections grouped by image id, then by composite index.
std::map<std::string, CompositeInputs> group_by_image(const std::vector<CompositeDetection>& dets, int n_composites) {
    std::map<std::string, CompositeInputs> out;
    for (const auto& d : dets) {
        auto [image_id, k] = split_composite_id(d.composite_id);
        if (k >= n_composites) {
            throw DataError("detection line " + std::to_string(d.line) + ": composite " + std::to_string(k) +
                            " is not configured");
        }
        auto& slot = out[image_id];
        slot.resize(n_composites);
        slot[k].push_back(d);
    }
    return out;
}

int cmd_map(const PipelineConfig& c, const std::string& dets_path, const std::string& out) {
    Pipeline p(c);
    const auto grouped = group_by_image(read_composite_detections(fs::path(dets_path)), c.n_composites());
    std::vector<ImageDetections> result;
    for (const auto& [image_id, per] : grouped) {
        ImageDetections img{image_id, {}};
        for (int k = 0; k < c.n_composites(); ++k) {
            if (per[k].empty()) continue;
            const auto mapped = p.map(p.ingest(per[k], k), k);
            img.dets.insert(img.dets.end(), mapped.begin(), mapped.end());
        }
        result.push_back(std::move(img));
    }
    write_output(out, fisheye_dets_text(result, c.camera));
    return 0;
}

int cmd_nms(const PipelineConfig& c, const std::string& dets_path, const std::string& out) {
    auto dets = read_fisheye_detections(fs::path(dets_path));
    for (auto& img : dets) img.dets = apply_stage2(img.dets, c.nms, c.camera);
    write_output(out, fisheye_dets_text(dets, c.camera));
    return 0;
}

int cmd_eval(const PipelineConfig& c, const std::string& dets_path, const std::string& gt_path,
             const std::string& report, const std::string& svg_prefix) {
    const auto dets = read_fisheye_detections(fs::path(dets_path));
    const auto gt = read_ground_truth(fs::path(gt_path));
    const EvalResult r = evaluate(dets, gt, c.camera.center(), c.eval);
    if (!report.empty()) write_file_atomic(report, eval_report_json(r) + "\n");
    if (!svg_prefix.empty()) {
        write_file_atomic(svg_prefix + "_pr.svg", curve_svg(r.pr, "Precision / recall", "recall", "precision", false));
        write_file_atomic(svg_prefix + "_mr_fppi.svg",
                          curve_svg(r.mr_fppi, "Miss rate / FPPI", "FPPI", "miss rate", true));
    }
    std::cout << Json{{"ap", r.ap}, {"lamr", r.lamr}, {"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn},
                      {"n_images", r.n_images}, {"n_gt", r.n_gt}}
                     .dump()
              << '\n';
    return 0;
}

struct RunArgs {
    std::vector<std::string> images;
    std::vector<std::string> scenes;
    std::string dets;
    std::string detector_cmd;
    bool perfect = false;
    int composite = 0;
    std::string out;
    std::string gt;
    std::string report;
    std::string timing;
};

int cmd_run(const PipelineConfig& c, const RunArgs& a) {
    const int modes = !a.dets.empty() + !a.detector_cmd.empty() + a.perfect;
    if (modes != 1) throw ConfigError("run needs exactly one of --dets, --detector-cmd, --perfect-detector");
    const auto ks = active_composites(c, a.composite);
    Pipeline p(c);
    for (int k : ks) p.exemplars(k);  // load or build before going parallel

    struct Frame {
        std::string image_id;
        std::optional<Image> image;
        SyntheticScene scene;
        CompositeInputs inputs;
        FrameResult result;
        GroundTruth gt;
    };
    std::vector<Frame> frames;
    std::vector<GroundTruth> gt;

    if (a.perfect) {
        if (a.scenes.empty()) throw ConfigError("--perfect-detector needs at least one --scene");
        for (const auto& s : a.scenes) {
            Frame f;
            f.image_id = fs::path(s).stem().string();
            f.scene = scene_from_json(read_json_file(s));
            frames.push_back(std::move(f));
        }
    } else {
        std::map<std::string, std::string> image_paths;
        for (const auto& path : a.images) image_paths[fs::path(path).stem().string()] = path;
        if (!a.dets.empty()) {
            for (auto& [image_id, per] : group_by_image(read_composite_detections(fs::path(a.dets)),
                                                       c.n_composites())) {
                Frame f;
                f.image_id = image_id;
                f.inputs = std::move(per);
                frames.push_back(std::move(f));
            }
            for (auto& f : frames) {
                if (auto it = image_paths.find(f.image_id); it != image_paths.end()) f.image = read_png(it->second);
            }
        } else {
            if (a.images.empty()) throw ConfigError("--detector-cmd needs at least one --image");
            for (const auto& [image_id, path] : image_paths) {
                Frame f;
                f.image_id = image_id;
                f.image = read_png(path);
                frames.push_back(std::move(f));
            }
        }
    }

    parallel_for(frames.size(), c.workers, [&](std::size_t i) {
        Frame& f = frames[i];
        if (a.perfect) {
            const RenderedScene r = render_fisheye(f.scene, c.camera, f.image_id);
            f.gt = r.gt;
            std::vector<std::vector<PatchDetection>> per(c.n_composites());
            for (int k : ks) {
                per[k] = perfect_detections(f.scene, c.camera, p.layout(k), c.min_visible);
                canonical_sort(per[k]);
            }
            f.result = p.run_patch_detections(&r.image, per, ks);
            return;
        }
        const Image* img = f.image ? &*f.image : nullptr;
        double detector_ms = 0.0;
        if (!a.detector_cmd.empty()) {
            f.inputs.assign(c.n_composites(), {});
            for (int k : ks) {
                double ms = 0.0;
                f.inputs[k] = run_detector_command(a.detector_cmd, p.warp(*img, k).raster,
                                                   make_composite_id(f.image_id, k), &ms);
                detector_ms += ms;
            }
        }
        f.inputs.resize(c.n_composites());
        std::vector<std::vector<PatchDetection>> per(c.n_composites());
        for (int k : ks) per[k] = p.ingest(f.inputs[k], k);
        f.result = p.run_patch_detections(img, per, ks);
        f.result.timing.detector_ms = detector_ms;
    });

    std::vector<ImageDetections> result;
    Json timing = Json::array();
    for (auto& f : frames) {
        result.push_back({f.image_id, f.result.detections});
        timing.push_back({{"image_id", f.image_id},
                          {"ingested", f.result.ingested},
                          {"unmappable", f.result.unmappable},
                          {"timing", timing_json(f.result.timing)}});
        if (a.perfect) gt.push_back(f.gt);
    }
    write_output(a.out, fisheye_dets_text(result, c.camera));
    if (!a.timing.empty()) write_file_atomic(a.timing, timing.dump(2) + "\n");

    if (!a.gt.empty()) gt = read_ground_truth(fs::path(a.gt));
    if (!gt.empty()) {
        const std::string report = eval_and_report(result, gt, c, a.report);
        if (!a.out.empty() && a.out != "-") std::cout << report << '\n';
    }
    return 0;
}

int cmd_synth_render(const PipelineConfig& c, const std::string& scene_path, const std::string& out_image,
                     const std::string& out_gt, std::string image_id, const std::string& out_dets) {
    const SyntheticScene scene = scene_from_json(read_json_file(scene_path));
    if (image_id.empty()) image_id = fs::path(scene_path).stem().string();
    const RenderedScene r = render_fisheye(scene, c.camera, image_id);
    write_png(out_image, r.image);
    if (!out_gt.empty()) {
        std::ostringstream os;
        write_ground_truth(os, {r.gt}, c.camera.center());
        write_file_atomic(out_gt, os.str());
    }
    if (!out_dets.empty()) {
        std::vector<CompositeDetection> dets;
        for (int k = 0; k < c.n_composites(); ++k) {
            const auto layout = c.composite_layout(k);
            for (const auto& d : perfect_detections(scene, c.camera, layout, c.min_visible)) {
                dets.push_back({make_composite_id(image_id, k), patch_box_to_composite(d, layout), d.score,
                                c.detection_class, 0});
            }
        }
        std::ostringstream os;
        write_composite_detections(os, dets);
        write_file_atomic(out_dets, os.str());
    }
    std::cout << Json{{"image_id", image_id}, {"persons", scene.persons.size()}, {"gt_boxes", r.gt.boxes.size()},
                      {"seed", scene.seed}}
                     .dump()
              << '\n';
    return 0;
}

int cmd_bench(const PipelineConfig& c, int frames, std::uint64_t seed, int composite) {
    if (frames < 1) throw ConfigError("--frames must be positive");
    const auto ks = active_composites(c, composite);
    Pipeline p(c);
    for (int k : ks) p.exemplars(k);
    // Warm the warp tables so their one-off construction is not timed.
    const Image blank(c.camera.image_width, c.camera.image_height, 1, 0);
    for (int k : ks) p.warp(blank, k);

    std::vector<double> warp, mapping, nms, total;
    std::vector<double> dets_in;
    for (int i = 0; i < frames; ++i) {
        const SyntheticScene scene = random_scene(seed + i);
        const RenderedScene r = render_fisheye(scene, c.camera);
        std::vector<std::vector<PatchDetection>> per(c.n_composites());
        std::size_t n = 0;
        for (int k : ks) {
            per[k] = perfect_detections(scene, c.camera, p.layout(k), c.min_visible);
            canonical_sort(per[k]);
            n += per[k].size();
        }
        const FrameResult res = p.run_patch_detections(&r.image, per, ks);
        warp.push_back(res.timing.warp_ms);
        mapping.push_back(res.timing.mapping_ms);
        nms.push_back(res.timing.nms_ms);
        total.push_back(res.timing.total_ms());
        dets_in.push_back(static_cast<double>(n));
    }
    std::cout << Json{{"frames", frames},
                      {"seed", seed},
                      {"composites", ks.size()},
                      {"detections_per_frame", summary_stats(dets_in)},
                      {"warp_ms", summary_stats(warp)},
                      {"detector_ms", "external; not measured"},
                      {"mapping_ms", summary_stats(mapping)},
                      {"nms_ms", summary_stats(nms)},
                      {"total_ms", summary_stats(total)}}
                     .dump(2)
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fisheye person detection through perspective composites"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    app.add_option("--config", o.config, "JSON config file (default: $FPW_CONFIG)");
    app.add_option("--workers", o.workers, "worker threads (0 = all cores)");
    app.add_option("--cache-dir", o.cache_dir, "directory for exemplar and LUT caches");
    app.add_flag("--no-build-cache", o.no_build_cache, "fail instead of building a missing exemplar cache");
    app.add_option("--nms", o.nms, "fisheye-frame NMS: hard | gnms | bbr");
    app.add_option("--ag", o.a_g, "Gaussian NMS spread");
    app.add_option("--stage1-iou", o.stage1_iou, "patch-frame NMS threshold");
    app.add_option("--hard-iou", o.hard_iou, "hard NMS threshold");
    app.add_flag("--no-stage1", o.no_stage1, "skip the patch-frame NMS");
    app.add_option("--k-r", o.k_r, "exemplars per mapped box");
    app.add_option("--scaling", o.scaling, "confidence scaling: none | containment | overlap | both");
    app.add_option("--min-score", o.min_score, "drop detections scoring below this");
    app.add_flag("--tta", o.tta, "use every configured composite offset");

    std::function<int(const PipelineConfig&)> action;

    auto* luts = app.add_subcommand("luts", "warp tables")->require_subcommand(1);
    std::string luts_out;
    auto* luts_build = luts->add_subcommand("build", "build and store the warp tables");
    luts_build->add_option("--out", luts_out, "output directory (default: <cache-dir>/luts)");
    luts_build->callback([&] { action = [&](const PipelineConfig& c) { return cmd_luts_build(c, luts_out); }; });

    std::string warp_image, warp_out;
    int warp_composite = 0;
    auto* warp = app.add_subcommand("warp", "build a composite image");
    warp->add_option("image", warp_image, "fisheye PNG")->required();
    warp->add_option("--out", warp_out, "composite PNG (a .json sidecar is written next to it)")->required();
    warp->add_option("--composite", warp_composite, "composite index");
    warp->callback([&] {
        action = [&](const PipelineConfig& c) { return cmd_warp(c, warp_image, warp_out, warp_composite); };
    });

    auto* ex = app.add_subcommand("exemplars", "mapping exemplars")->require_subcommand(1);
    bool ex_force = false;
    auto* ex_build = ex->add_subcommand("build", "build the exemplar caches");
    ex_build->add_flag("--force", ex_force, "rebuild even if a cache exists");
    ex_build->callback([&] { action = [&](const PipelineConfig& c) { return cmd_exemplars_build(c, ex_force); }; });

    std::string map_dets, map_out;
    auto* map = app.add_subcommand("map", "map composite detections to the fisheye frame (no fisheye NMS)");
    map->add_option("--dets", map_dets, "composite detections (JSON lines)")->required();
    map->add_option("--out", map_out, "fisheye detections (default: stdout)");
    map->callback([&] { action = [&](const PipelineConfig& c) { return cmd_map(c, map_dets, map_out); }; });

    std::string nms_dets, nms_out;
    auto* nms = app.add_subcommand("nms", "fisheye-frame NMS on mapped detections");
    nms->add_option("--dets", nms_dets, "fisheye detections (JSON lines)")->required();
    nms->add_option("--out", nms_out, "output (default: stdout)");
    nms->callback([&] { action = [&](const PipelineConfig& c) { return cmd_nms(c, nms_dets, nms_out); }; });

    std::string ev_dets, ev_gt, ev_report, ev_svg;
    auto* ev = app.add_subcommand("eval", "AP and LAMR of fisheye detections");
    ev->add_option("--dets", ev_dets, "fisheye detections")->required();
    ev->add_option("--gt", ev_gt, "ground truth")->required();
    ev->add_option("--out", ev_report, "full report JSON");
    ev->add_option("--svg", ev_svg, "write <prefix>_pr.svg and <prefix>_mr_fppi.svg");
    ev->callback([&] {
        action = [&](const PipelineConfig& c) { return cmd_eval(c, ev_dets, ev_gt, ev_report, ev_svg); };
    });

    RunArgs ra;
    auto* run = app.add_subcommand("run", "full pipeline");
    run->add_option("--image", ra.images, "fisheye PNG; its stem is the image id");
    run->add_option("--scene", ra.scenes, "scene JSON (with --perfect-detector)");
    run->add_option("--dets", ra.dets, "composite detections (JSON lines)");
    run->add_option("--detector-cmd", ra.detector_cmd, "command run as: CMD <composite.png> <composite_id>");
    run->add_flag("--perfect-detector", ra.perfect, "detect from the scene geometry");
    run->add_option("--composite", ra.composite, "composite index without --tta");
    run->add_option("--out", ra.out, "fisheye detections (default: stdout)");
    run->add_option("--gt", ra.gt, "ground truth; enables the evaluation report");
    run->add_option("--report", ra.report, "evaluation report JSON");
    run->add_option("--timing", ra.timing, "per-frame timing JSON");
    run->callback([&] { action = [&](const PipelineConfig& c) { return cmd_run(c, ra); }; });

    auto* synth = app.add_subcommand("synth", "synthetic scenes")->require_subcommand(1);
    std::string sc_path, sc_image, sc_gt, sc_id, sc_dets;
    auto* render = synth->add_subcommand("render", "render a scene");
    render->add_option("scene", sc_path, "scene JSON")->required();
    render->add_option("--out-image", sc_image, "fisheye PNG")->required();
    render->add_option("--out-gt", sc_gt, "ground truth JSON lines");
    render->add_option("--out-dets", sc_dets, "perfect-detector composite detections");
    render->add_option("--image-id", sc_id, "image id (default: scene file stem)");
    render->callback([&] {
        action = [&](const PipelineConfig& c) { return cmd_synth_render(c, sc_path, sc_image, sc_gt, sc_id, sc_dets); };
    });

    int bench_frames = 100;
    std::uint64_t bench_seed = 1;
    int bench_composite = 0;
    auto* bench = app.add_subcommand("bench", "per-stage timing on random synthetic frames");
    bench->add_option("--frames", bench_frames, "frame count");
    bench->add_option("--seed", bench_seed, "first scene seed");
    bench->add_option("--composite", bench_composite, "composite index without --tta");
    bench->callback([&] {
        action = [&](const PipelineConfig& c) { return cmd_bench(c, bench_frames, bench_seed, bench_composite); };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const PipelineConfig config = load_config(o);
        return action(config);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const DomainError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
