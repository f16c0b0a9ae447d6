#pragma once

// Line-delimited JSON annotation manifests: one object per image, UTF-8, keys
// image_id / width / height / anode / cathode / shot / clarity / attributes /
// difficulty / stack_axis. Coordinates are [x, y] pairs in pixel units.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pbd/annotation.hpp"
#include "pbd/core.hpp"

namespace pbd {

using json = nlohmann::json;

inline json annotation_to_json(const EndpointAnnotation& a) {
    json pts_an = json::array(), pts_ca = json::array();
    for (const auto& p : a.anode) pts_an.push_back({p.x, p.y});
    for (const auto& p : a.cathode) pts_ca.push_back({p.x, p.y});
    json attrs = json::array();
    for (Attr at : a.attributes) attrs.push_back(to_string(at));
    return json{{"image_id", a.image_id},
                {"width", a.width},
                {"height", a.height},
                {"anode", pts_an},
                {"cathode", pts_ca},
                {"shot", to_string(a.shot)},
                {"clarity", to_string(a.clarity)},
                {"attributes", attrs},
                {"difficulty", to_string(a.difficulty)},
                {"stack_axis", to_string(a.stack_axis)}};
}

inline EndpointAnnotation annotation_from_json(const json& j) {
    EndpointAnnotation a;
    a.image_id = j.at("image_id").get<std::string>();
    a.width = j.at("width").get<int>();
    a.height = j.at("height").get<int>();
    auto read_pts = [&](const char* key) {
        std::vector<Pt> pts;
        for (const auto& item : j.at(key)) {
            require(item.is_array() && item.size() == 2, std::string(key) + ": points must be [x, y]");
            pts.push_back({item[0].get<double>(), item[1].get<double>()});
        }
        return pts;
    };
    a.anode = read_pts("anode");
    a.cathode = read_pts("cathode");
    a.shot = shot_from_string(j.at("shot").get<std::string>());
    a.clarity = clarity_from_string(j.at("clarity").get<std::string>());
    for (const auto& s : j.at("attributes")) a.attributes.insert(attr_from_string(s.get<std::string>()));
    a.difficulty = difficulty_from_string(j.at("difficulty").get<std::string>());
    a.stack_axis = stack_axis_from_string(j.at("stack_axis").get<std::string>());
    return a;
}

inline std::vector<EndpointAnnotation> read_manifest(const std::string& path,
                                                     bool validate_records = true) {
    std::ifstream f(path);
    require(f.good(), "read_manifest: cannot open " + path);
    std::vector<EndpointAnnotation> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        EndpointAnnotation a;
        try {
            a = annotation_from_json(json::parse(line));
            if (validate_records) validate(a);
        } catch (const std::exception& e) {
            std::ostringstream os;
            os << "read_manifest: " << path << " line " << line_no << ": " << e.what();
            throw Error(os.str());
        }
        out.push_back(std::move(a));
    }
    return out;
}

inline void write_manifest(const std::string& path,
                           const std::vector<EndpointAnnotation>& anns) {
    std::ofstream f(path, std::ios::binary);  // binary: byte-stable line endings
    require(f.good(), "write_manifest: cannot open " + path);
    for (const auto& a : anns) f << annotation_to_json(a).dump() << "\n";
    require(f.good(), "write_manifest: write failed for " + path);
}

}  // namespace pbd
