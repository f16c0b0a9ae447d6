#pragma once

// Training-label synthesis from endpoint annotations (distance-adaptive point
// disks, polyline masks, component counts) and the inverse step that recovers
// point coordinates from predicted maps.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "pbd/annotation.hpp"
#include "pbd/core.hpp"

namespace pbd {

enum class Polarity { Anode, Cathode };

struct RadiusPolicy {
    enum class Kind { Const, Adaptive };
    Kind kind = Kind::Adaptive;
    double value = 0.3;  // Const: radius in px. Adaptive: fraction of neighbor distance.

    static RadiusPolicy constant(double radius) {
        require(radius > 0.0, "constant radius must be positive");
        return {Kind::Const, radius};
    }
    static RadiusPolicy adaptive(double fraction) {
        require(fraction > 0.0 && fraction <= 1.0, "adaptive fraction must be in (0, 1]");
        return {Kind::Adaptive, fraction};
    }
    // Accepts "const-3", "const-1.5", "ada-0.3".
    static RadiusPolicy parse(const std::string& s) {
        auto dash = s.find('-');
        require(dash != std::string::npos, "radius policy must look like const-<r> or ada-<f>: " + s);
        std::string head = s.substr(0, dash);
        double val = std::stod(s.substr(dash + 1));
        if (head == "const") return constant(val);
        if (head == "ada") return adaptive(val);
        throw Error("unknown radius policy: " + s);
    }
    std::string str() const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s-%g", kind == Kind::Const ? "const" : "ada", value);
        return buf;
    }
};

constexpr double kAdaptiveFallbackRadius = 3.0;  // single point: no neighbor distance to adapt to

// Disk radius per point. Adaptive: diameter = fraction * min distance to the
// previous/next same-polarity point, radius = max(1, round(d/2)). Both policies
// are then capped at (d_min - 1.5)/2 so neighboring rasterized disks can never
// become 8-connected: pixels of two disks are at least d - r_a - r_b apart and
// 8-adjacency needs a gap <= sqrt(2) < 1.5. Floor 0.5 keeps the center pixel.
inline std::vector<double> point_radii(const std::vector<Pt>& pts, const RadiusPolicy& policy,
                                       bool* fallback_used = nullptr) {
    require(!pts.empty(), "point list is empty");
    size_t n = pts.size();
    std::vector<double> r(n);
    std::vector<double> dmin(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        double prev = i > 0 ? dist(pts[i], pts[i - 1]) : 0.0;
        double next = i + 1 < n ? dist(pts[i], pts[i + 1]) : 0.0;
        if (i == 0) dmin[i] = next;
        else if (i + 1 == n) dmin[i] = prev;
        else dmin[i] = std::min(prev, next);
    }
    for (size_t i = 0; i < n; ++i) {
        if (policy.kind == RadiusPolicy::Kind::Const) {
            r[i] = policy.value;
        } else if (n == 1) {
            r[i] = kAdaptiveFallbackRadius;
            if (fallback_used) *fallback_used = true;
        } else {
            double diameter = policy.value * dmin[i];
            r[i] = std::max(1.0, std::round(diameter / 2.0));
        }
        if (n > 1) r[i] = std::min(r[i], std::max(0.5, (dmin[i] - 1.5) / 2.0));
    }
    return r;
}

inline void stamp_disk(MaskU8& mask, const Pt& c, double radius) {
    int r0 = std::max(0, static_cast<int>(std::floor(c.y - radius)));
    int r1 = std::min(mask.h - 1, static_cast<int>(std::ceil(c.y + radius)));
    int c0 = std::max(0, static_cast<int>(std::floor(c.x - radius)));
    int c1 = std::min(mask.w - 1, static_cast<int>(std::ceil(c.x + radius)));
    double rr = radius * radius;
    for (int r = r0; r <= r1; ++r)
        for (int col = c0; col <= c1; ++col) {
            double dy = r - c.y, dx = col - c.x;
            if (dx * dx + dy * dy <= rr) mask.at(r, col) = 1;
        }
}

inline const std::vector<Pt>& polarity_points(const EndpointAnnotation& a, Polarity p) {
    return p == Polarity::Anode ? a.anode : a.cathode;
}

inline MaskU8 generate_point_mask(const EndpointAnnotation& ann, Polarity pol,
                                  const RadiusPolicy& policy, bool* fallback_used = nullptr) {
    validate(ann);
    const auto& pts = polarity_points(ann, pol);
    require(!pts.empty(), "cannot build a point mask from an empty point list");
    auto radii = point_radii(pts, policy, fallback_used);
    MaskU8 mask(ann.height, ann.width, 0);
    for (size_t i = 0; i < pts.size(); ++i) stamp_disk(mask, pts[i], radii[i]);
    return mask;
}

// --- line rasterization ---

inline void bresenham(MaskU8& mask, int x0, int y0, int x1, int y1) {
    int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        if (mask.inside(y0, x0)) mask.at(y0, x0) = 1;
        if (x0 == x1 && y0 == y1) break;
        int e2 = 2 * err;
        if (e2 >= dy) { err += dy; x0 += sx; }
        if (e2 <= dx) { err += dx; y0 += sy; }
    }
}

inline MaskU8 dilate_chebyshev(const MaskU8& mask, int radius) {
    if (radius <= 0) return mask;
    MaskU8 out(mask.h, mask.w, 0);
    for (int r = 0; r < mask.h; ++r)
        for (int c = 0; c < mask.w; ++c) {
            if (!mask.at(r, c)) continue;
            for (int dr = -radius; dr <= radius; ++dr)
                for (int dc = -radius; dc <= radius; ++dc)
                    if (out.inside(r + dr, c + dc)) out.at(r + dr, c + dc) = 1;
        }
    return out;
}

// Polyline through the sorted endpoints of one polarity, dilated to the given
// thickness (Chebyshev radius floor((t-1)/2); thickness 1 leaves the raw path).
inline MaskU8 generate_line_mask(const EndpointAnnotation& ann, Polarity pol, int thickness = 1) {
    validate(ann);
    require(thickness >= 1, "line thickness must be >= 1");
    const auto& pts = polarity_points(ann, pol);
    require(!pts.empty(), "cannot build a line mask from an empty point list");
    MaskU8 mask(ann.height, ann.width, 0);
    auto px = [](double v) { return static_cast<int>(std::lround(v)); };
    if (pts.size() == 1) {
        if (mask.inside(px(pts[0].y), px(pts[0].x))) mask.at(px(pts[0].y), px(pts[0].x)) = 1;
    } else {
        for (size_t i = 0; i + 1 < pts.size(); ++i)
            bresenham(mask, px(pts[i].x), px(pts[i].y), px(pts[i + 1].x), px(pts[i + 1].y));
    }
    return dilate_chebyshev(mask, (thickness - 1) / 2);
}

// --- connected components (8-connectivity) ---

struct ComponentStats {
    int min_r = 0, max_r = 0, min_c = 0, max_c = 0;
    int area = 0;
    Pt bbox_center() const { return {(min_c + max_c) / 2.0, (min_r + max_r) / 2.0}; }
};

inline int label_components(const MaskU8& mask, Grid<int>* labels_out = nullptr,
                            std::vector<ComponentStats>* stats_out = nullptr) {
    Grid<int> labels(mask.h, mask.w, 0);
    std::vector<ComponentStats> stats;
    std::vector<int> stack;
    constexpr int dr[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
    constexpr int dc[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
    int next = 0;
    for (int r = 0; r < mask.h; ++r)
        for (int c = 0; c < mask.w; ++c) {
            if (!mask.at(r, c) || labels.at(r, c)) continue;
            ++next;
            ComponentStats cs{r, r, c, c, 0};
            stack.push_back(r * mask.w + c);
            labels.at(r, c) = next;
            while (!stack.empty()) {
                int idx = stack.back();
                stack.pop_back();
                int cr = idx / mask.w, cc = idx % mask.w;
                ++cs.area;
                cs.min_r = std::min(cs.min_r, cr);
                cs.max_r = std::max(cs.max_r, cr);
                cs.min_c = std::min(cs.min_c, cc);
                cs.max_c = std::max(cs.max_c, cc);
                for (int k = 0; k < 8; ++k) {
                    int nr = cr + dr[k], nc = cc + dc[k];
                    if (mask.inside(nr, nc) && mask.at(nr, nc) && !labels.at(nr, nc)) {
                        labels.at(nr, nc) = next;
                        stack.push_back(nr * mask.w + nc);
                    }
                }
            }
            stats.push_back(cs);
        }
    if (labels_out) *labels_out = std::move(labels);
    if (stats_out) *stats_out = std::move(stats);
    return next;
}

inline int derive_count_label(const MaskU8& mask) { return label_components(mask); }

inline MaskU8 binarize(const MapF& map, double threshold = 0.5) {
    require(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0, 1)");
    MaskU8 out(map.h, map.w, 0);
    for (size_t i = 0; i < map.v.size(); ++i) out.v[i] = map.v[i] > threshold ? 1 : 0;
    return out;
}

// Connected components of the thresholded map -> bounding-box centers, sorted
// along the stack axis (tie-break on the other axis).
inline std::vector<Pt> extract_points(const MapF& map, double threshold = 0.5,
                                      StackAxis axis = StackAxis::Y) {
    MaskU8 bin = binarize(map, threshold);
    std::vector<ComponentStats> stats;
    label_components(bin, nullptr, &stats);
    std::vector<Pt> pts;
    pts.reserve(stats.size());
    for (const auto& s : stats) pts.push_back(s.bbox_center());
    sort_by_stack_axis(pts, axis);
    return pts;
}

inline std::vector<Pt> extract_points(const MaskU8& mask, StackAxis axis = StackAxis::Y) {
    std::vector<ComponentStats> stats;
    label_components(mask, nullptr, &stats);
    std::vector<Pt> pts;
    pts.reserve(stats.size());
    for (const auto& s : stats) pts.push_back(s.bbox_center());
    sort_by_stack_axis(pts, axis);
    return pts;
}

// Full label bundle for one annotated image.
struct LabelSet {
    MaskU8 point_anode, point_cathode;
    MaskU8 line_anode, line_cathode;
    int count_anode = 0;
    int count_cathode = 0;
    bool adaptive_fallback = false;  // single-point polarity hit the fixed-radius fallback
};

inline LabelSet generate_labels(const EndpointAnnotation& ann, const RadiusPolicy& policy,
                                int line_thickness = 1) {
    LabelSet ls;
    ls.point_anode = generate_point_mask(ann, Polarity::Anode, policy, &ls.adaptive_fallback);
    ls.point_cathode = generate_point_mask(ann, Polarity::Cathode, policy, &ls.adaptive_fallback);
    ls.line_anode = generate_line_mask(ann, Polarity::Anode, line_thickness);
    ls.line_cathode = generate_line_mask(ann, Polarity::Cathode, line_thickness);
    ls.count_anode = static_cast<int>(ann.anode.size());
    ls.count_cathode = static_cast<int>(ann.cathode.size());
    return ls;
}

}  // namespace pbd
