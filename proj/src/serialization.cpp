#include "fpw/serialization.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fpw/error.hpp"

namespace fpw {

Json polar_box_to_json(const PolarBox& box, const Vec2& fisheye_center) {
    return {{"cx", box.cx}, {"cy", box.cy}, {"w", box.w}, {"h", box.h},
            {"angle_rad", polar_angle(box, fisheye_center)}};
}

PolarBox polar_box_from_json(const Json& j) {
    PolarBox b{j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("w").get<double>(),
               j.at("h").get<double>()};
    if (!(b.w > 0.0 && b.h > 0.0)) throw DataError("polar box with non-positive size");
    return b;
}

namespace {

template <typename Fn>
void for_each_json_line(std::istream& is, const std::string& source, Fn&& fn) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const Json j = Json::parse(line);
            if (j.is_object() && j.value("type", "") == "header") continue;
            fn(j, line_no);
        } catch (const Json::exception& e) {
            throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    return is;
}

}  // namespace

std::vector<CompositeDetection> read_composite_detections(std::istream& is, const std::string& source) {
    std::vector<CompositeDetection> out;
    for_each_json_line(is, source, [&](const Json& j, std::size_t line_no) {
        CompositeDetection d;
        const Json& id = j.at("composite_id");
        d.composite_id = id.is_string() ? id.get<std::string>() : id.dump();
        d.box = AxisBox::from_xywh(j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(),
                                   j.at("h").get<double>());
        d.score = j.at("score").get<double>();
        d.cls = j.value("class", std::string("person"));
        d.line = line_no;
        if (!(d.score >= 0.0 && d.score <= 1.0)) throw DataError("score outside [0, 1]");
        out.push_back(std::move(d));
    });
    return out;
}

std::vector<CompositeDetection> read_composite_detections(const std::filesystem::path& path) {
    auto is = open_input(path);
    return read_composite_detections(is, path.string());
}

void write_composite_detections(std::ostream& os, const std::vector<CompositeDetection>& dets) {
    for (const auto& d : dets) {
        Json j = {{"composite_id", d.composite_id}, {"x", d.box.x0}, {"y", d.box.y0}, {"w", d.box.width()},
                  {"h", d.box.height()}, {"score", d.score}, {"class", d.cls}};
        os << j.dump() << '\n';
    }
}

std::pair<std::string, int> split_composite_id(const std::string& composite_id) {
    const auto pos = composite_id.rfind(':');
    if (pos == std::string::npos) return {composite_id, 0};
    const std::string tail = composite_id.substr(pos + 1);
    if (tail.empty() || tail.find_first_not_of("0123456789") != std::string::npos) return {composite_id, 0};
    return {composite_id.substr(0, pos), std::stoi(tail)};
}

std::string make_composite_id(const std::string& image_id, int composite) {
    return image_id + ":" + std::to_string(composite);
}

void write_fisheye_detections(std::ostream& os, const std::vector<ImageDetections>& dets,
                              const Vec2& fisheye_center) {
    os << Json{{"type", "header"}, {"fisheye_center", {fisheye_center.x(), fisheye_center.y()}}}.dump() << '\n';
    for (const auto& img : dets) {
        for (const auto& d : img.dets) {
            Json j = polar_box_to_json(d.box, fisheye_center);
            j["image_id"] = img.image_id;
            j["score"] = d.score;
            os << j.dump() << '\n';
        }
    }
}

std::vector<ImageDetections> read_fisheye_detections(std::istream& is, const std::string& source) {
    std::vector<ImageDetections> out;
    std::map<std::string, std::size_t> index;
    std::size_t next_id = 0;
    for_each_json_line(is, source, [&](const Json& j, std::size_t) {
        const std::string id = j.at("image_id").get<std::string>();
        auto [it, inserted] = index.emplace(id, out.size());
        if (inserted) out.push_back({id, {}});
        out[it->second].dets.push_back(
            FisheyeDetection::make(polar_box_from_json(j), j.at("score").get<double>(), next_id++));
    });
    return out;
}

std::vector<ImageDetections> read_fisheye_detections(const std::filesystem::path& path) {
    auto is = open_input(path);
    return read_fisheye_detections(is, path.string());
}

void write_ground_truth(std::ostream& os, const std::vector<GroundTruth>& gt, const Vec2& fisheye_center) {
    for (const auto& g : gt) {
        Json boxes = Json::array();
        for (const auto& b : g.boxes) boxes.push_back(polar_box_to_json(b, fisheye_center));
        os << Json{{"image_id", g.image_id}, {"boxes", boxes}}.dump() << '\n';
    }
}

std::vector<GroundTruth> read_ground_truth(std::istream& is, const std::string& source) {
    std::vector<GroundTruth> out;
    for_each_json_line(is, source, [&](const Json& j, std::size_t) {
        GroundTruth g;
        g.image_id = j.at("image_id").get<std::string>();
        for (const auto& b : j.at("boxes")) {
            if (b.contains("cx")) {
                g.boxes.push_back(polar_box_from_json(b));
            } else {
                const auto ab = AxisBox::from_xywh(b.at("x").get<double>(), b.at("y").get<double>(),
                                                   b.at("w").get<double>(), b.at("h").get<double>());
                if (!(ab.width() > 0.0 && ab.height() > 0.0)) throw DataError("GT box with non-positive size");
                g.boxes.push_back({ab.center().x(), ab.center().y(), ab.width(), ab.height()});
            }
        }
        out.push_back(std::move(g));
    });
    return out;
}

std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path) {
    auto is = open_input(path);
    return read_ground_truth(is, path.string());
}

void write_target_set(std::ostream& os, const TargetBoxSet& set, const Vec2& fisheye_center) {
    os << Json{{"type", "header"},
               {"param_id", set.param_id},
               {"camera_height", set.scene.camera_height},
               {"person_height", set.person.height},
               {"person_diameter", set.person.diameter},
               {"count", set.boxes.size()}}
              .dump()
       << '\n';
    for (const auto& b : set.boxes) os << polar_box_to_json(b, fisheye_center).dump() << '\n';
}

SyntheticScene scene_from_json(const Json& j) {
    SyntheticScene s;
    try {
        s.scene.camera_height = j.value("camera_height", 3.0);
        s.background = static_cast<std::uint8_t>(j.value("background", 90));
        s.noise_sigma = j.value("noise_sigma", 0.0);
        s.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("resolution")) {
            const auto& r = j.at("resolution");
            s.width = r.is_array() ? r.at(0).get<int>() : r.get<int>();
            s.height = r.is_array() ? r.at(1).get<int>() : r.get<int>();
        }
        for (const auto& p : j.value("persons", Json::array())) {
            ScenePerson sp;
            sp.person.ground_x = p.at("x").get<double>();
            sp.person.ground_y = p.at("y").get<double>();
            sp.person.height = p.value("height", 1.7);
            sp.person.diameter = p.value("diameter", 0.5);
            sp.gray = static_cast<std::uint8_t>(p.value("gray", 220));
            if (!(sp.person.height > 0.0 && sp.person.diameter > 0.0)) throw DataError("person size must be positive");
            if (!(sp.person.height < s.scene.camera_height)) throw DataError("person taller than the camera height");
            for (std::size_t i = 0; i < s.persons.size(); ++i) {
                const auto& o = s.persons[i];
                const double gap = std::hypot(o.person.ground_x - sp.person.ground_x,
                                              o.person.ground_y - sp.person.ground_y);
                if (gap < 0.5 * (o.person.diameter + sp.person.diameter)) {
                    throw DataError("persons " + std::to_string(i) + " and " +
                                    std::to_string(s.persons.size()) + " intersect on the ground");
                }
            }
            s.persons.push_back(sp);
        }
    } catch (const Json::exception& e) {
        throw DataError(std::string("bad scene description: ") + e.what());
    }
    return s;
}

Json scene_to_json(const SyntheticScene& s) {
    Json persons = Json::array();
    for (const auto& p : s.persons) {
        persons.push_back({{"x", p.person.ground_x}, {"y", p.person.ground_y}, {"height", p.person.height},
                           {"diameter", p.person.diameter}, {"gray", p.gray}});
    }
    return {{"camera_height", s.scene.camera_height}, {"persons", persons}, {"background", s.background},
            {"noise_sigma", s.noise_sigma}, {"seed", s.seed}, {"resolution", {s.width, s.height}}};
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw DataError("cannot write " + path.string());
        os << content;
        if (!os) throw DataError("write failed: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace fpw
