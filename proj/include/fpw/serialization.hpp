#pragma once

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fpw/boxmap.hpp"
#include "fpw/evaluation.hpp"
#include "fpw/person_model.hpp"
#include "fpw/synth.hpp"

namespace fpw {

using Json = nlohmann::json;

/// {"cx", "cy", "w", "h", "angle_rad"}; angle_rad is informational and
/// ignored when reading.
Json polar_box_to_json(const PolarBox& box, const Vec2& fisheye_center);
PolarBox polar_box_from_json(const Json& j);

/// One line of an external detector's output, in composite pixels.
struct CompositeDetection {
    std::string composite_id;
    AxisBox box;
    double score = 0.0;
    std::string cls = "person";
    std::size_t line = 0;
};

/// Reads {composite_id, x, y, w, h, score, class} lines; (x, y) is the
/// top-left corner. Throws DataError naming the offending line.
std::vector<CompositeDetection> read_composite_detections(std::istream& is, const std::string& source = "<stream>");
std::vector<CompositeDetection> read_composite_detections(const std::filesystem::path& path);
void write_composite_detections(std::ostream& os, const std::vector<CompositeDetection>& dets);

/// composite ids have the form "<image_id>:<composite index>"; a bare id is
/// composite 0.
std::pair<std::string, int> split_composite_id(const std::string& composite_id);
std::string make_composite_id(const std::string& image_id, int composite);

/// Fisheye-frame detections as JSON lines: a header line
/// {"type": "header", "fisheye_center": [cx, cy]} followed by
/// {"image_id", "cx", "cy", "w", "h", "angle_rad", "score"} lines.
void write_fisheye_detections(std::ostream& os, const std::vector<ImageDetections>& dets, const Vec2& fisheye_center);
std::vector<ImageDetections> read_fisheye_detections(std::istream& is, const std::string& source = "<stream>");
std::vector<ImageDetections> read_fisheye_detections(const std::filesystem::path& path);

/// {image_id, boxes: [...]} lines. Boxes given as axis-aligned {x, y, w, h}
/// are converted to a polar box at the same center with the same sides.
void write_ground_truth(std::ostream& os, const std::vector<GroundTruth>& gt, const Vec2& fisheye_center);
std::vector<GroundTruth> read_ground_truth(std::istream& is, const std::string& source = "<stream>");
std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path);

/// Header line with the parameter set, then one polar box per line.
void write_target_set(std::ostream& os, const TargetBoxSet& set, const Vec2& fisheye_center);

/// {camera_height, persons: [{x, y, height, diameter, gray}], background,
///  noise_sigma, seed}
SyntheticScene scene_from_json(const Json& j);
Json scene_to_json(const SyntheticScene& scene);

/// Writes `content` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace fpw
