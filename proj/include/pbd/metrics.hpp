#pragma once

// Coordinate-level detection metrics (count error/accuracy, localization,
// overhang), pixel-level segmentation metrics, and split aggregation.
//
// Qualification rules: localization error is only measured on images whose
// count for that polarity is exact; overhang additionally needs both counts
// exact and the alternating-stack shape n_anode = n_cathode + 1. Counts come
// from list lengths. Predicted points are paired to ground truth positionally
// after stack-axis sorting; no assignment problem is solved.

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pbd/annotation.hpp"
#include "pbd/core.hpp"
#include "pbd/labels.hpp"

namespace pbd {

enum class MetricMode { Pixel, Paper };

inline const char* to_string(MetricMode m) { return m == MetricMode::Pixel ? "pixel" : "paper"; }
inline MetricMode metric_mode_from_string(const std::string& s) {
    if (s == "pixel") return MetricMode::Pixel;
    if (s == "paper") return MetricMode::Paper;
    throw Error("unknown metric mode: " + s);
}

struct ImageResult {
    std::vector<Pt> pred_anode;    // sorted by gt.stack_axis
    std::vector<Pt> pred_cathode;  // sorted by gt.stack_axis
    EndpointAnnotation gt;
    // Optional raw maps + rendered ground-truth masks for segmentation metrics.
    std::optional<MapF> map_anode, map_cathode;
    std::optional<MaskU8> gt_mask_anode, gt_mask_cathode;
    MetricMode mode = MetricMode::Pixel;
};

struct SegReport {
    double pa = 0.0;     // pixel accuracy
    double miou = 0.0;   // IoU averaged over present classes {fg, bg}
    double mdice = 0.0;  // Dice averaged over present classes
    double ber = 0.0;    // 1 - mean(TPR, TNR) over present classes
    double mae = 0.0;    // mean absolute error of the raw map
    bool fg_empty = false;
    bool bg_empty = false;
};

struct MetricReport {
    double an_mae = 0.0, cn_mae = 0.0;
    double an_acc = 0.0, cn_acc = 0.0, pn_acc = 0.0;
    std::optional<double> al_mae, cl_mae, oh_mae;
    double n = 0;            // images scored
    double n_p = 0;          // images with both counts exact
    int oh_excluded = 0;     // count-correct images whose gt is not an alternating stack
    std::optional<SegReport> seg;
};

// --- count metrics ---

inline double count_mae(const std::vector<std::pair<int, int>>& pairs) {
    require(!pairs.empty(), "count_mae: empty list");
    double acc = 0.0;
    for (auto& [pred, gt] : pairs) acc += std::abs(pred - gt);
    return acc / static_cast<double>(pairs.size());
}

inline double count_acc(const std::vector<std::pair<int, int>>& pairs) {
    require(!pairs.empty(), "count_acc: empty list");
    int hits = 0;
    for (auto& [pred, gt] : pairs)
        if (pred == gt) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

inline std::vector<std::pair<int, int>> count_pairs(const std::vector<ImageResult>& results,
                                                    Polarity pol) {
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(results.size());
    for (const auto& r : results) {
        if (pol == Polarity::Anode)
            pairs.emplace_back(static_cast<int>(r.pred_anode.size()),
                               static_cast<int>(r.gt.anode.size()));
        else
            pairs.emplace_back(static_cast<int>(r.pred_cathode.size()),
                               static_cast<int>(r.gt.cathode.size()));
    }
    return pairs;
}

// Image counts as correct only if anode and cathode counts are both exact.
inline double pair_acc(const std::vector<ImageResult>& results) {
    if (results.empty()) return 0.0;
    int hits = 0;
    for (const auto& r : results)
        if (r.pred_anode.size() == r.gt.anode.size() &&
            r.pred_cathode.size() == r.gt.cathode.size())
            ++hits;
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

// --- localization ---

namespace detail {
inline void require_sorted(const std::vector<Pt>& pts, StackAxis axis, const char* what) {
    for (size_t i = 1; i < pts.size(); ++i) {
        double a = stack_coord(pts[i - 1], axis), b = stack_coord(pts[i], axis);
        if (a > b || (a == b && cross_coord(pts[i - 1], axis) > cross_coord(pts[i], axis)))
            throw Error(std::string("localization input not sorted by stack axis: ") + what);
    }
}
}  // namespace detail

inline std::optional<double> localization_mae(const std::vector<ImageResult>& results,
                                              Polarity pol, MetricMode mode) {
    double total = 0.0;
    int qualifying = 0;
    for (const auto& r : results) {
        const auto& pred = pol == Polarity::Anode ? r.pred_anode : r.pred_cathode;
        const auto& gt = polarity_points(r.gt, pol);
        detail::require_sorted(pred, r.gt.stack_axis, "pred");
        detail::require_sorted(gt, r.gt.stack_axis, "gt");
        if (pred.size() != gt.size() || gt.empty()) continue;
        double err = 0.0;
        for (size_t j = 0; j < gt.size(); ++j) err += dist(pred[j], gt[j]);
        err /= static_cast<double>(gt.size());
        if (mode == MetricMode::Paper)
            err /= static_cast<double>(r.gt.width) * static_cast<double>(r.gt.height);
        total += err;
        ++qualifying;
    }
    if (qualifying == 0) return std::nullopt;
    return total / qualifying;
}

// Overhang of cathode j inside the anode stack: the stack-axis gap to the
// anode before plus the gap to the anode after. Valid only for alternating
// stacks (n_an = n_ca + 1).
inline std::vector<double> overhang_values(const std::vector<Pt>& anode,
                                           const std::vector<Pt>& cathode, StackAxis axis) {
    require(anode.size() == cathode.size() + 1, "overhang needs n_anode = n_cathode + 1");
    std::vector<double> o(cathode.size());
    for (size_t j = 0; j < cathode.size(); ++j) {
        double c = stack_coord(cathode[j], axis);
        o[j] = std::abs(c - stack_coord(anode[j], axis)) +
               std::abs(c - stack_coord(anode[j + 1], axis));
    }
    return o;
}

inline std::optional<double> overhang_mae(const std::vector<ImageResult>& results,
                                          MetricMode mode, int* excluded_out = nullptr) {
    double total = 0.0;
    int qualifying = 0, excluded = 0;
    for (const auto& r : results) {
        if (r.pred_anode.size() != r.gt.anode.size() ||
            r.pred_cathode.size() != r.gt.cathode.size())
            continue;
        if (r.gt.anode.size() != r.gt.cathode.size() + 1 || r.gt.cathode.empty()) {
            ++excluded;  // counts matched but the stack shape admits no overhang
            continue;
        }
        auto o_gt = overhang_values(r.gt.anode, r.gt.cathode, r.gt.stack_axis);
        auto o_pred = overhang_values(r.pred_anode, r.pred_cathode, r.gt.stack_axis);
        double err = 0.0;
        for (size_t j = 0; j < o_gt.size(); ++j) err += std::abs(o_pred[j] - o_gt[j]);
        err /= static_cast<double>(o_gt.size());
        if (mode == MetricMode::Paper)
            err /= static_cast<double>(r.gt.width) * static_cast<double>(r.gt.height);
        total += err;
        ++qualifying;
    }
    if (excluded_out) *excluded_out = excluded;
    if (qualifying == 0) return std::nullopt;
    return total / qualifying;
}

// --- segmentation metrics ---

inline SegReport seg_metrics(const MapF& pred, const MaskU8& gt) {
    require(pred.h == gt.h && pred.w == gt.w, "seg_metrics: shape mismatch");
    require(pred.h > 0 && pred.w > 0, "seg_metrics: empty input");
    double tp = 0, tn = 0, fp = 0, fn = 0, abs_err = 0;
    for (size_t i = 0; i < pred.v.size(); ++i) {
        bool p = pred.v[i] > 0.5;
        bool g = gt.v[i] != 0;
        tp += p && g;
        tn += !p && !g;
        fp += p && !g;
        fn += !p && g;
        abs_err += std::abs(pred.v[i] - static_cast<double>(gt.v[i]));
    }
    double total = static_cast<double>(pred.v.size());
    SegReport s;
    s.pa = (tp + tn) / total;
    s.mae = abs_err / total;
    s.fg_empty = (tp + fn) == 0;
    s.bg_empty = (tn + fp) == 0;
    double iou_sum = 0, dice_sum = 0, rate_sum = 0;
    int classes = 0;
    if (!s.fg_empty) {
        iou_sum += tp / (tp + fp + fn);
        dice_sum += 2 * tp / (2 * tp + fp + fn);
        rate_sum += tp / (tp + fn);
        ++classes;
    }
    if (!s.bg_empty) {
        iou_sum += tn / (tn + fn + fp);
        dice_sum += 2 * tn / (2 * tn + fn + fp);
        rate_sum += tn / (tn + fp);
        ++classes;
    }
    require(classes > 0, "seg_metrics: ground truth has no pixels");
    s.miou = iou_sum / classes;
    s.mdice = dice_sum / classes;
    s.ber = 1.0 - rate_sum / classes;
    return s;
}

// --- per-split report assembly ---

inline MetricReport compute_report(const std::vector<ImageResult>& results, MetricMode mode) {
    require(!results.empty(), "compute_report: no results");
    MetricReport rep;
    rep.n = static_cast<double>(results.size());
    rep.an_mae = count_mae(count_pairs(results, Polarity::Anode));
    rep.cn_mae = count_mae(count_pairs(results, Polarity::Cathode));
    rep.an_acc = count_acc(count_pairs(results, Polarity::Anode));
    rep.cn_acc = count_acc(count_pairs(results, Polarity::Cathode));
    rep.pn_acc = pair_acc(results);
    for (const auto& r : results)
        if (r.pred_anode.size() == r.gt.anode.size() &&
            r.pred_cathode.size() == r.gt.cathode.size())
            rep.n_p += 1;
    rep.al_mae = localization_mae(results, Polarity::Anode, mode);
    rep.cl_mae = localization_mae(results, Polarity::Cathode, mode);
    rep.oh_mae = overhang_mae(results, mode, &rep.oh_excluded);

    // segmentation block: averaged over every (image, polarity) carrying maps
    SegReport acc;
    int seg_n = 0;
    for (const auto& r : results) {
        auto add = [&](const std::optional<MapF>& map, const std::optional<MaskU8>& mask) {
            if (!map || !mask) return;
            SegReport s = seg_metrics(*map, *mask);
            acc.pa += s.pa;
            acc.miou += s.miou;
            acc.mdice += s.mdice;
            acc.ber += s.ber;
            acc.mae += s.mae;
            acc.fg_empty |= s.fg_empty;
            acc.bg_empty |= s.bg_empty;
            ++seg_n;
        };
        add(r.map_anode, r.gt_mask_anode);
        add(r.map_cathode, r.gt_mask_cathode);
    }
    if (seg_n > 0) {
        acc.pa /= seg_n;
        acc.miou /= seg_n;
        acc.mdice /= seg_n;
        acc.ber /= seg_n;
        acc.mae /= seg_n;
        rep.seg = acc;
    }
    return rep;
}

// Unweighted mean over the three test splits; any undefined entry makes the
// aggregate entry undefined. Optional weights switch to a weighted mean.
inline MetricReport aggregate_splits(const std::map<std::string, MetricReport>& reports,
                                     const std::map<std::string, double>* weights = nullptr) {
    for (const char* split : {"regular", "difficult", "tough"})
        require(reports.count(split) == 1, std::string("aggregate_splits: missing split ") + split);
    require(reports.size() == 3, "aggregate_splits: expects exactly the three test splits");
    double wsum = 0.0;
    std::vector<std::pair<const MetricReport*, double>> items;
    for (auto& [name, rep] : reports) {
        double w = 1.0;
        if (weights) {
            auto it = weights->find(name);
            require(it != weights->end(), "aggregate_splits: missing weight for " + name);
            w = it->second;
        }
        items.push_back({&rep, w});
        wsum += w;
    }
    require(wsum > 0.0, "aggregate_splits: zero total weight");
    MetricReport out;
    auto mean_of = [&](auto field) {
        double acc = 0.0;
        for (auto& [rep, w] : items) acc += w * (rep->*field);
        return acc / wsum;
    };
    out.an_mae = mean_of(&MetricReport::an_mae);
    out.cn_mae = mean_of(&MetricReport::cn_mae);
    out.an_acc = mean_of(&MetricReport::an_acc);
    out.cn_acc = mean_of(&MetricReport::cn_acc);
    out.pn_acc = mean_of(&MetricReport::pn_acc);
    out.n = mean_of(&MetricReport::n);
    out.n_p = mean_of(&MetricReport::n_p);
    auto mean_opt = [&](auto field) -> std::optional<double> {
        double acc = 0.0;
        for (auto& [rep, w] : items) {
            if (!(rep->*field)) return std::nullopt;
            acc += w * *(rep->*field);
        }
        return acc / wsum;
    };
    out.al_mae = mean_opt(&MetricReport::al_mae);
    out.cl_mae = mean_opt(&MetricReport::cl_mae);
    out.oh_mae = mean_opt(&MetricReport::oh_mae);
    for (auto& [rep, w] : items) out.oh_excluded += rep->oh_excluded;
    bool all_seg = true;
    for (auto& [rep, w] : items) all_seg = all_seg && rep->seg.has_value();
    if (all_seg) {
        SegReport s;
        for (auto& [rep, w] : items) {
            s.pa += w * rep->seg->pa;
            s.miou += w * rep->seg->miou;
            s.mdice += w * rep->seg->mdice;
            s.ber += w * rep->seg->ber;
            s.mae += w * rep->seg->mae;
            s.fg_empty |= rep->seg->fg_empty;
            s.bg_empty |= rep->seg->bg_empty;
        }
        s.pa /= wsum;
        s.miou /= wsum;
        s.mdice /= wsum;
        s.ber /= wsum;
        s.mae /= wsum;
        out.seg = s;
    }
    return out;
}

// Unavailable metrics render as a dash.
inline std::string metric_str(const std::optional<double>& v, int precision = 4) {
    if (!v) return "—";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, *v);
    return buf;
}

}  // namespace pbd
