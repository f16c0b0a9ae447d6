#pragma once

// Synthetic battery radiographs: an alternating anode/cathode plate stack
// rendered as bright strokes on a dark background, with optional interference
// structures, then blur and sensor noise. Rendering order is fixed (structure,
// interference, blur, noise) and every random draw comes from the scene seed,
// so a spec renders to identical bytes on every call.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "pbd/annotation.hpp"
#include "pbd/core.hpp"
#include "pbd/image_io.hpp"
#include "pbd/manifest.hpp"

namespace pbd {

struct SceneSpec {
    uint64_t seed = 0;
    int width = 96;
    int height = 96;
    int n_cathode = 4;            // plates = 2*n_cathode + 1, anodes outermost
    double plate_len = 0.55;      // cathode length as a fraction of the cross extent
    double overhang_mean = 4.0;   // anode tips extend past cathode tips by ~this many px
    double overhang_std = 1.0;
    double tilt_deg = 0.0;
    std::set<Attr> interference;  // subset of {II, PI, BI, TRI, TAI, SI}
    double noise_std = 2.0;
    double blur_sigma = 0.6;      // >= 1.0 renders (and labels) as a blurred shot
    StackAxis stack_axis = StackAxis::Y;
    Shot shot = Shot::MS;
};

struct Scene {
    ImageU8 image;
    EndpointAnnotation annotation;
};

namespace synth_detail {

inline void stamp_thick_px(MapF& canvas, int r, int c, int thickness, double intensity) {
    int lo = -(thickness / 2), hi = (thickness - 1) / 2;
    for (int dr = lo; dr <= hi; ++dr)
        for (int dc = lo; dc <= hi; ++dc)
            if (canvas.inside(r + dr, c + dc))
                canvas.at(r + dr, c + dc) = std::max(canvas.at(r + dr, c + dc), intensity);
}

// Thick Bresenham stroke; endpoint pixels land exactly on the rounded endpoints.
inline void draw_segment(MapF& canvas, Pt a, Pt b, double intensity, int thickness,
                         double fade_from = -1.0) {
    int x0 = (int)std::lround(a.x), y0 = (int)std::lround(a.y);
    int x1 = (int)std::lround(b.x), y1 = (int)std::lround(b.y);
    int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    double total = std::max(1.0, std::hypot(double(x1 - x0), double(y1 - y0)));
    while (true) {
        double ity = intensity;
        if (fade_from >= 0.0) {
            double t = std::hypot(double(x0 - std::lround(a.x)), double(y0 - std::lround(a.y))) / total;
            if (t > fade_from) ity *= std::max(0.0, 1.0 - (t - fade_from) / (1.0 - fade_from));
        }
        stamp_thick_px(canvas, y0, x0, thickness, ity);
        if (x0 == x1 && y0 == y1) break;
        int e2 = 2 * err;
        if (e2 >= dy) { err += dy; x0 += sx; }
        if (e2 <= dx) { err += dx; y0 += sy; }
    }
}

inline void gaussian_blur(MapF& img, double sigma) {
    if (sigma <= 0.05) return;
    int radius = std::max(1, (int)std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double s = 0;
    for (int i = -radius; i <= radius; ++i) s += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : k) v /= s;
    MapF tmp(img.h, img.w);
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * img.at(r, std::clamp(c + i, 0, img.w - 1));
            tmp.at(r, c) = acc;
        }
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * tmp.at(std::clamp(r + i, 0, img.h - 1), c);
            img.at(r, c) = acc;
        }
}

inline void blend_rect(MapF& canvas, int r0, int c0, int r1, int c1, double intensity,
                       double alpha) {
    for (int r = std::max(0, r0); r <= std::min(canvas.h - 1, r1); ++r)
        for (int c = std::max(0, c0); c <= std::min(canvas.w - 1, c1); ++c)
            canvas.at(r, c) = (1 - alpha) * canvas.at(r, c) + alpha * intensity;
}

}  // namespace synth_detail

inline Scene render_scene(const SceneSpec& spec) {
    using namespace synth_detail;
    require(spec.width >= 32 && spec.height >= 32, "render_scene: image too small");
    require(spec.n_cathode >= 1, "render_scene: need at least one cathode");
    for (Attr a : spec.interference)
        require(a != Attr::P && a != Attr::T && a != Attr::A,
                "render_scene: interference set may only contain II/PI/BI/TRI/TAI/SI");

    Rng rng(spec.seed);
    // Work in a y-stacked frame; transpose at the end for x-stacked scenes.
    int W = spec.stack_axis == StackAxis::Y ? spec.width : spec.height;
    int H = spec.stack_axis == StackAxis::Y ? spec.height : spec.width;
    int n_plates = 2 * spec.n_cathode + 1;

    double margin = std::max(6.0, 0.07 * H);
    double spacing = (H - 2 * margin) / (n_plates - 1);
    require(spacing >= 4.0, "render_scene: too many plates for this image height");

    double tip_x = (1.0 - spec.plate_len) * (W - 1);
    tip_x = std::clamp(tip_x, margin + spec.overhang_mean + 4.0 * spec.overhang_std + 2.0,
                       W - 1 - margin);
    double body_x = W - 1.0;  // plates run off the right edge (cell continues)

    double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
    double th = spec.tilt_deg * M_PI / 180.0;
    double cos_t = std::cos(th), sin_t = std::sin(th);
    auto rotate = [&](Pt p) -> Pt {
        double dx = p.x - cx, dy = p.y - cy;
        return {cx + cos_t * dx - sin_t * dy, cy + sin_t * dx + cos_t * dy};
    };

    MapF canvas(H, W);
    double bg = rng.uniform(30.0, 42.0);
    double grad = rng.uniform(-6.0, 6.0);
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) canvas.at(r, c) = bg + grad * (r / double(H - 1) - 0.5);

    EndpointAnnotation ann;
    ann.width = W;
    ann.height = H;
    ann.stack_axis = StackAxis::Y;
    struct Plate {
        Pt tip, body;
        bool anode;
        double intensity;
        int thickness;
    };
    std::vector<Plate> plates;
    for (int i = 0; i < n_plates; ++i) {
        bool anode = i % 2 == 0;
        double y = margin + i * spacing + rng.uniform(-0.5, 0.5);
        double tx = tip_x;
        if (anode)
            tx -= rng.normal_clipped(spec.overhang_mean, spec.overhang_std, 1.0,
                                     spec.overhang_mean + 4.0 * spec.overhang_std);
        else
            tx += rng.uniform(-0.8, 0.8);
        Plate p;
        p.tip = rotate({tx, y});
        p.body = rotate({body_x, y});
        p.anode = anode;
        p.intensity = anode ? rng.uniform(200.0, 232.0) : rng.uniform(150.0, 180.0);
        p.thickness = anode ? 2 : 1;
        plates.push_back(p);
        if (anode) ann.anode.push_back(p.tip);
        else ann.cathode.push_back(p.tip);
    }
    for (const auto& p : plates) draw_segment(canvas, p.tip, p.body, p.intensity, p.thickness);

    // --- interference, drawn over the structure ---
    if (spec.interference.count(Attr::SI)) {
        for (int i = 0; i + 1 < n_plates; ++i) {
            double y = margin + (i + 0.5) * spacing;
            draw_segment(canvas, rotate({tip_x + 2.0, y}), rotate({body_x, y}), bg + 16.0, 1);
        }
    }
    if (spec.interference.count(Attr::BI)) {
        // short fork diverging from an anode a few px behind its tip
        const Plate& host = plates[2 * rng.uniform_int(0, spec.n_cathode)];
        double ux = host.body.x - host.tip.x, uy = host.body.y - host.tip.y;
        double len = std::max(1.0, std::hypot(ux, uy));
        ux /= len;
        uy /= len;
        double back = rng.uniform(5.0, 10.0);
        double fwd = rng.uniform(2.0, back - 1.0);
        double lat = (rng.coin() ? 1.0 : -1.0) * rng.uniform(3.0, 6.0);
        Pt root{host.tip.x + ux * back, host.tip.y + uy * back};
        Pt end{root.x - ux * fwd - uy * lat, root.y - uy * fwd + ux * lat};
        draw_segment(canvas, root, end, host.intensity, 1);
    }
    if (spec.interference.count(Attr::PI)) {
        int n_ghost = rng.uniform_int(3, 5);
        double gx = rng.uniform(0.10, 0.18) * W;
        for (int i = 0; i < n_ghost; ++i) {
            double y = margin + (i + rng.uniform(0.2, 0.6)) * spacing * 1.4;
            if (y > H - margin) break;
            draw_segment(canvas, {0.0, y}, {gx, y}, rng.uniform(150.0, 200.0), 1, 0.55);
        }
    }
    if (spec.interference.count(Attr::TRI)) {
        int side = rng.uniform_int(0, 1);  // top or bottom strip
        int strip = rng.uniform_int(3, 5);
        int c0 = rng.uniform_int(0, W / 2), c1 = c0 + rng.uniform_int(W / 4, W / 2);
        if (side == 0) blend_rect(canvas, 0, c0, strip, c1, 238.0, 0.55);
        else blend_rect(canvas, H - 1 - strip, c0, H - 1, c1, 238.0, 0.55);
    }
    if (spec.interference.count(Attr::TAI)) {
        int sz = rng.uniform_int(4, 7);
        int r0 = rng.uniform_int(0, H - 1 - sz);
        bool left = rng.coin();
        int c0 = left ? 0 : W - 1 - sz;
        blend_rect(canvas, r0, c0, r0 + sz, c0 + sz, 228.0, 0.6);
    }
    if (spec.interference.count(Attr::II)) {
        bool dir = rng.coin();
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                double t = c / double(W - 1);
                if (!dir) t = 1.0 - t;
                canvas.at(r, c) *= 0.55 + 0.9 * t;
            }
    }

    gaussian_blur(canvas, spec.blur_sigma);
    if (spec.noise_std > 0)
        for (auto& v : canvas.v) v += rng.normal(0.0, spec.noise_std);

    // Transpose back for x-stacked scenes (swap coordinate roles everywhere).
    ImageU8 img(spec.height, spec.width);
    if (spec.stack_axis == StackAxis::Y) {
        for (size_t i = 0; i < canvas.v.size(); ++i)
            img.v[i] = (uint8_t)std::clamp(std::lround(canvas.v[i]), 0L, 255L);
    } else {
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c)
                img.at(c, r) = (uint8_t)std::clamp(std::lround(canvas.at(r, c)), 0L, 255L);
        auto swap_xy = [](std::vector<Pt>& pts) {
            for (auto& p : pts) std::swap(p.x, p.y);
        };
        swap_xy(ann.anode);
        swap_xy(ann.cathode);
        ann.width = spec.width;
        ann.height = spec.height;
        ann.stack_axis = StackAxis::X;
    }

    ann.image_id = "scene_" + std::to_string(spec.seed);
    ann.shot = spec.shot;
    ann.clarity = spec.blur_sigma >= 1.0 ? Clarity::Blur : Clarity::Clear;
    bool tilted = std::abs(spec.tilt_deg) >= 1.5;
    ann.attributes = spec.interference;
    if (tilted) ann.attributes.insert(Attr::T);
    if (ann.attributes.empty() && ann.clarity == Clarity::Clear) ann.attributes = {Attr::P};
    sort_by_stack_axis(ann.anode, ann.stack_axis);
    sort_by_stack_axis(ann.cathode, ann.stack_axis);
    validate(ann);
    return {std::move(img), std::move(ann)};
}

// --- dataset assembly ---

struct DatasetConfig {
    uint64_t seed = 7;
    int n_train = 24;
    int n_test = 16;  // 6:4 against n_train by default
    int width = 96;
    int height = 96;
    int min_cathode = 3;
    int max_cathode = 5;
    double pure_fraction = 0.25;       // at least 3 pure-plate prompt images in train
    double blur_fraction = 0.2;
    double tilt_fraction = 0.2;
    int regular_max_interference = 0;  // difficulty thresholds, monotone
    int regular_max_plates = 9;
    int tough_min_interference = 2;
    int tough_min_plates = 13;
    StackAxis stack_axis = StackAxis::Y;
    double overhang_mean = 4.0;
    double overhang_std = 1.0;
    double noise_std = 2.0;
};

inline Difficulty assign_difficulty(const DatasetConfig& cfg, int interference_count,
                                    int n_plates) {
    if (interference_count >= cfg.tough_min_interference || n_plates >= cfg.tough_min_plates)
        return Difficulty::Tough;
    if (interference_count <= cfg.regular_max_interference && n_plates <= cfg.regular_max_plates)
        return Difficulty::Regular;
    return Difficulty::Difficult;
}

struct DatasetSummary {
    int train = 0, train_pure = 0;
    int test_regular = 0, test_difficult = 0, test_tough = 0;
    std::string dir;
};

inline SceneSpec sample_scene(Rng& rng, const DatasetConfig& cfg, bool pure) {
    SceneSpec s;
    s.seed = rng.eng();
    s.width = cfg.width;
    s.height = cfg.height;
    s.n_cathode = rng.uniform_int(cfg.min_cathode, cfg.max_cathode);
    int tercile = (3 * (s.n_cathode - cfg.min_cathode)) /
                  std::max(1, cfg.max_cathode - cfg.min_cathode + 1);
    s.shot = tercile == 0 ? Shot::CS : tercile == 1 ? Shot::MS : Shot::LS;
    s.plate_len = rng.uniform(0.5, 0.62);
    s.overhang_mean = cfg.overhang_mean;
    s.overhang_std = cfg.overhang_std;
    s.noise_std = cfg.noise_std;
    s.stack_axis = cfg.stack_axis;
    if (pure) {
        s.blur_sigma = rng.uniform(0.4, 0.7);
        return s;
    }
    s.blur_sigma = rng.coin(cfg.blur_fraction) ? rng.uniform(1.2, 2.0) : rng.uniform(0.4, 0.8);
    if (rng.coin(cfg.tilt_fraction)) s.tilt_deg = rng.uniform(1.5, 3.0) * (rng.coin() ? 1 : -1);
    static const Attr pool[] = {Attr::II, Attr::PI, Attr::BI, Attr::TRI, Attr::TAI, Attr::SI};
    double roll = rng.uniform();
    int n_interf = roll < 0.35 ? 0 : roll < 0.65 ? 1 : roll < 0.85 ? 2 : 3;
    std::vector<Attr> bag(std::begin(pool), std::end(pool));
    rng.shuffle(bag);
    for (int i = 0; i < n_interf; ++i) s.interference.insert(bag[i]);
    return s;
}

inline DatasetSummary make_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
    require(cfg.n_train >= 1 && cfg.n_test >= 0, "make_dataset: bad split sizes");
    require(cfg.regular_max_interference < cfg.tough_min_interference,
            "make_dataset: interference thresholds must be monotone");
    require(cfg.regular_max_plates < cfg.tough_min_plates,
            "make_dataset: plate-count thresholds must be monotone");
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "images");

    Rng rng(cfg.seed);
    int n_pure = std::min(cfg.n_train,
                          std::max(3, (int)std::lround(cfg.pure_fraction * cfg.n_train)));
    std::vector<int> pure_slots(cfg.n_train, 0);
    for (int i = 0; i < n_pure; ++i) pure_slots[i] = 1;
    rng.shuffle(pure_slots);

    DatasetSummary sum;
    sum.dir = out_dir;
    std::vector<EndpointAnnotation> train;
    std::vector<EndpointAnnotation> test_reg, test_dif, test_tgh;
    char name[64];
    for (int i = 0; i < cfg.n_train; ++i) {
        auto spec = sample_scene(rng, cfg, pure_slots[i] != 0);
        auto scene = render_scene(spec);
        std::snprintf(name, sizeof name, "train_%04d", i);
        scene.annotation.image_id = name;
        int interf = (int)spec.interference.size();
        scene.annotation.difficulty = assign_difficulty(cfg, interf, 2 * spec.n_cathode + 1);
        write_pgm((fs::path(out_dir) / "images" / (std::string(name) + ".pgm")).string(),
                  scene.image);
        sum.train_pure += scene.annotation.attributes.count(Attr::P) ? 1 : 0;
        train.push_back(std::move(scene.annotation));
    }
    for (int i = 0; i < cfg.n_test; ++i) {
        auto spec = sample_scene(rng, cfg, false);
        auto scene = render_scene(spec);
        std::snprintf(name, sizeof name, "test_%04d", i);
        scene.annotation.image_id = name;
        int interf = (int)spec.interference.size();
        auto diff = assign_difficulty(cfg, interf, 2 * spec.n_cathode + 1);
        scene.annotation.difficulty = diff;
        write_pgm((fs::path(out_dir) / "images" / (std::string(name) + ".pgm")).string(),
                  scene.image);
        if (diff == Difficulty::Regular) test_reg.push_back(std::move(scene.annotation));
        else if (diff == Difficulty::Difficult) test_dif.push_back(std::move(scene.annotation));
        else test_tgh.push_back(std::move(scene.annotation));
    }
    write_manifest((fs::path(out_dir) / "train.jsonl").string(), train);
    write_manifest((fs::path(out_dir) / "test_regular.jsonl").string(), test_reg);
    write_manifest((fs::path(out_dir) / "test_difficult.jsonl").string(), test_dif);
    write_manifest((fs::path(out_dir) / "test_tough.jsonl").string(), test_tgh);
    sum.train = cfg.n_train;
    sum.test_regular = (int)test_reg.size();
    sum.test_difficult = (int)test_dif.size();
    sum.test_tough = (int)test_tgh.size();
    return sum;
}

}  // namespace pbd
