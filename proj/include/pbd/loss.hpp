#pragma once

// Training objective: pixel-weighted BCE + IoU on the point and line maps
// (weights emphasize pixels where a 31x31 local mean disagrees with the
// ground truth, i.e. boundaries), plus an L1 term on the two plate counts.

#include "pbd/labels.hpp"
#include "pbd/model.hpp"

namespace pbd {

struct LossWeights {
    double l1 = 1.0;   // refined points
    double l2 = 1.0;   // coarse points
    double l3 = 0.05;  // counts
    double l4 = 0.5;   // lines
};

inline double combine(double refine, double coarse, double count, double line,
                      const LossWeights& w = {}) {
    return w.l1 * refine + w.l2 * coarse + w.l3 * count + w.l4 * line;
}

inline Tensor mask_to_tensor(const MaskU8& m) {
    Tensor t({m.h, m.w, 1});
    for (size_t i = 0; i < m.v.size(); ++i) t[(int64_t)i] = m.v[i] ? 1.0 : 0.0;
    return t;
}

// 31x31 stride-1 local mean with zero padding and a fixed 1/961 denominator.
inline Tensor box_mean31(const Tensor& gt) {
    require(gt.shape.size() == 3 && gt.shape[2] == 1, "box_mean31: map must be [H, W, 1]");
    int h = gt.shape[0], w = gt.shape[1], r = 15;
    Tensor row({h, w, 1}), out({h, w, 1});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0;
            for (int k = std::max(0, x - r); k <= std::min(w - 1, x + r); ++k)
                s += gt[(int64_t)y * w + k];
            row[(int64_t)y * w + x] = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0;
            for (int k = std::max(0, y - r); k <= std::min(h - 1, y + r); ++k)
                s += row[(int64_t)k * w + x];
            out[(int64_t)y * w + x] = s / 961.0;
        }
    return out;
}

// pred is a probability map in [0,1]; gt is binary. Probabilities are pulled
// into [eps, 1-eps] by an affine squeeze so the log stays finite without
// killing gradients at saturation.
inline Var structure_loss(const Var& pred, const Tensor& gt) {
    require(pred->val.shape == gt.shape, "structure_loss: shape mismatch");
    require(gt.shape.size() == 3 && gt.shape[2] == 1, "structure_loss: map must be [H, W, 1]");
    for (double t : gt.v) require(t == 0.0 || t == 1.0, "structure_loss: gt must be binary");
    Tensor weit_t = box_mean31(gt);
    for (int64_t i = 0; i < weit_t.size(); ++i)
        weit_t[i] = 1.0 + 5.0 * std::abs(weit_t[i] - gt[i]);

    const double eps = 1e-7;
    Var p = affine(pred, 1.0 - 2.0 * eps, eps);
    Var g = constant(gt);
    Var weit = constant(std::move(weit_t));
    Var one = constant(Tensor(gt.shape, 1.0));

    Var bce = neg(add(mul(g, log_op(p)), mul(sub(one, g), log_op(sub(one, p)))));
    Var wbce = div(sum_all(mul(weit, bce)), sum_all(weit));

    Var inter = sum_all(mul(weit, mul(p, g)));
    Var uni = sum_all(mul(weit, add(p, g)));
    Var wiou = affine(div(affine(inter, 1.0, 1.0), affine(sub(uni, inter), 1.0, 1.0)), -1.0,
                      1.0);
    return add(wbce, wiou);
}

struct TrainingLabels {
    Tensor pt_an, pt_ca, ln_an, ln_ca;  // [H, W, 1] binary
    double n_an = 0, n_ca = 0;
};

inline TrainingLabels to_training_labels(const LabelSet& ls) {
    TrainingLabels t;
    t.pt_an = mask_to_tensor(ls.point_anode);
    t.pt_ca = mask_to_tensor(ls.point_cathode);
    t.ln_an = mask_to_tensor(ls.line_anode);
    t.ln_ca = mask_to_tensor(ls.line_cathode);
    t.n_an = ls.count_anode;
    t.n_ca = ls.count_cathode;
    return t;
}

struct LossBreakdown {
    Var total, refine, coarse, count, line;
};

// total = λ1·L_refine + λ2·L_coarse + λ3·L_count + λ4·L_line; the point and
// line terms sum structure_loss over both polarity channels, the count term
// sums the absolute errors of the two scalars.
inline LossBreakdown total_loss(const ModelOutput& out, const TrainingLabels& lb,
                                const LossWeights& w = {}) {
    auto both = [&](const Var& map2, const Tensor& gt_an, const Tensor& gt_ca) {
        return add(structure_loss(slice_last(map2, 0, 1), gt_an),
                   structure_loss(slice_last(map2, 1, 2), gt_ca));
    };
    LossBreakdown r;
    r.refine = both(out.refined, lb.pt_an, lb.pt_ca);
    r.coarse = both(out.coarse, lb.pt_an, lb.pt_ca);
    r.line = both(out.lines, lb.ln_an, lb.ln_ca);
    Var gt_an = constant(Tensor({1, 1}, lb.n_an)), gt_ca = constant(Tensor({1, 1}, lb.n_ca));
    r.count = add(sum_all(abs_op(sub(out.n_anode, gt_an))),
                  sum_all(abs_op(sub(out.n_cathode, gt_ca))));
    r.total = add(add(scale(r.refine, w.l1), scale(r.coarse, w.l2)),
                  add(scale(r.count, w.l3), scale(r.line, w.l4)));
    return r;
}

}  // namespace pbd
