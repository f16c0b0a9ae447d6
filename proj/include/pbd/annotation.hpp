#pragma once

// Endpoint annotation record for one radiograph: per-polarity electrode-plate
// endpoint coordinates plus capture metadata.

#include <algorithm>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pbd/core.hpp"

namespace pbd {

enum class Shot { CS, MS, LS };                      // close / medium / long shot
enum class Clarity { Clear, Blur };
enum class Difficulty { Regular, Difficult, Tough };
enum class StackAxis { X, Y };                       // axis along which plates are stacked

// Image attributes. P marks a pure-plate image (no interference, clear view) and
// is exclusive with everything else. The rest mark interference/deformation:
// tilted plates (T), aberrant plates (A), uneven illumination (II), partly
// visible second stack (PI), branched plate tip (BI), border tape/appendix
// rectangles (TRI/TAI), separator membrane lines (SI).
enum class Attr { P, T, A, II, PI, BI, TRI, TAI, SI };

inline const char* to_string(Shot s) {
    switch (s) {
        case Shot::CS: return "CS";
        case Shot::MS: return "MS";
        default: return "LS";
    }
}
inline const char* to_string(Clarity c) { return c == Clarity::Clear ? "clear" : "blur"; }
inline const char* to_string(Difficulty d) {
    switch (d) {
        case Difficulty::Regular: return "regular";
        case Difficulty::Difficult: return "difficult";
        default: return "tough";
    }
}
inline const char* to_string(StackAxis a) { return a == StackAxis::X ? "x" : "y"; }
inline const char* to_string(Attr a) {
    switch (a) {
        case Attr::P: return "P";
        case Attr::T: return "T";
        case Attr::A: return "A";
        case Attr::II: return "II";
        case Attr::PI: return "PI";
        case Attr::BI: return "BI";
        case Attr::TRI: return "TRI";
        case Attr::TAI: return "TAI";
        default: return "SI";
    }
}

inline Shot shot_from_string(const std::string& s) {
    if (s == "CS") return Shot::CS;
    if (s == "MS") return Shot::MS;
    if (s == "LS") return Shot::LS;
    throw Error("unknown shot: " + s);
}
inline Clarity clarity_from_string(const std::string& s) {
    if (s == "clear") return Clarity::Clear;
    if (s == "blur") return Clarity::Blur;
    throw Error("unknown clarity: " + s);
}
inline Difficulty difficulty_from_string(const std::string& s) {
    if (s == "regular") return Difficulty::Regular;
    if (s == "difficult") return Difficulty::Difficult;
    if (s == "tough") return Difficulty::Tough;
    throw Error("unknown difficulty: " + s);
}
inline StackAxis stack_axis_from_string(const std::string& s) {
    if (s == "x") return StackAxis::X;
    if (s == "y") return StackAxis::Y;
    throw Error("unknown stack_axis: " + s);
}
inline Attr attr_from_string(const std::string& s) {
    static const std::pair<const char*, Attr> table[] = {
        {"P", Attr::P},   {"T", Attr::T},     {"A", Attr::A},
        {"II", Attr::II}, {"PI", Attr::PI},   {"BI", Attr::BI},
        {"TRI", Attr::TRI}, {"TAI", Attr::TAI}, {"SI", Attr::SI}};
    for (auto& [name, val] : table)
        if (s == name) return val;
    throw Error("unknown attribute: " + s);
}

inline double stack_coord(const Pt& p, StackAxis axis) {
    return axis == StackAxis::X ? p.x : p.y;
}
inline double cross_coord(const Pt& p, StackAxis axis) {
    return axis == StackAxis::X ? p.y : p.x;
}

// Sort along the stack axis; ties fall back to the other axis so the order is total.
inline void sort_by_stack_axis(std::vector<Pt>& pts, StackAxis axis) {
    std::sort(pts.begin(), pts.end(), [axis](const Pt& a, const Pt& b) {
        double sa = stack_coord(a, axis), sb = stack_coord(b, axis);
        if (sa != sb) return sa < sb;
        return cross_coord(a, axis) < cross_coord(b, axis);
    });
}

struct EndpointAnnotation {
    std::string image_id;
    int width = 0;
    int height = 0;
    std::vector<Pt> anode;    // sorted by stack-axis coordinate, strictly increasing
    std::vector<Pt> cathode;  // likewise
    Shot shot = Shot::MS;
    Clarity clarity = Clarity::Clear;
    std::set<Attr> attributes;
    Difficulty difficulty = Difficulty::Regular;
    StackAxis stack_axis = StackAxis::Y;
};

inline std::vector<std::string> validation_errors(const EndpointAnnotation& a) {
    std::vector<std::string> errs;
    if (a.image_id.empty()) errs.push_back("image_id is empty");
    if (a.width < 1 || a.height < 1) errs.push_back("image dimensions must be >= 1");
    if (a.anode.empty()) errs.push_back("anode list is empty");
    if (a.cathode.empty()) errs.push_back("cathode list is empty");
    auto check_list = [&](const std::vector<Pt>& pts, const char* name) {
        for (size_t i = 0; i < pts.size(); ++i) {
            const Pt& p = pts[i];
            if (!(p.x >= 0.0 && p.x < a.width && p.y >= 0.0 && p.y < a.height)) {
                std::ostringstream os;
                os << name << "[" << i << "] out of bounds: (" << p.x << ", " << p.y << ")";
                errs.push_back(os.str());
            }
            if (i > 0 && !(stack_coord(pts[i - 1], a.stack_axis) < stack_coord(p, a.stack_axis))) {
                std::ostringstream os;
                os << name << " not strictly sorted by stack axis at index " << i;
                errs.push_back(os.str());
            }
        }
    };
    check_list(a.anode, "anode");
    check_list(a.cathode, "cathode");
    if (a.attributes.count(Attr::P) && a.attributes.size() != 1)
        errs.push_back("attribute P excludes all other attributes");
    return errs;
}

inline void validate(const EndpointAnnotation& a) {
    auto errs = validation_errors(a);
    if (errs.empty()) return;
    std::string msg = "invalid annotation '" + a.image_id + "':";
    for (auto& e : errs) msg += " " + e + ";";
    throw Error(msg);
}

// --- geometric transforms used by augmentation ---

inline EndpointAnnotation hflip(const EndpointAnnotation& a) {
    EndpointAnnotation out = a;
    auto flip_list = [&](std::vector<Pt>& pts) {
        for (auto& p : pts) p.x = (a.width - 1) - p.x;
        sort_by_stack_axis(pts, out.stack_axis);
    };
    flip_list(out.anode);
    flip_list(out.cathode);
    return out;
}

inline EndpointAnnotation resize(const EndpointAnnotation& a, int new_w, int new_h) {
    EndpointAnnotation out = a;
    out.width = new_w;
    out.height = new_h;
    for (auto* list : {&out.anode, &out.cathode})
        for (auto& p : *list) p = map_point(p, a.width, a.height, new_w, new_h);
    return out;
}

}  // namespace pbd
