#pragma once

// Shared generators for randomized test inputs. Oracles stay in the test files
// that use them so each suite checks the library against an independent path.

#include <algorithm>
#include <vector>

#include "pbd/annotation.hpp"
#include "pbd/core.hpp"

namespace testutil {

// Alternating anode/cathode endpoints along the stack axis (anode first and
// last), consecutive plates at least min_step apart, everything in bounds.
inline pbd::EndpointAnnotation random_annotation(pbd::Rng& rng, int width, int height,
                                                 int n_cathode,
                                                 pbd::StackAxis axis = pbd::StackAxis::Y,
                                                 double min_step = 4.0) {
    using namespace pbd;
    EndpointAnnotation ann;
    ann.image_id = "rand";
    ann.width = width;
    ann.height = height;
    ann.stack_axis = axis;
    int n_plates = 2 * n_cathode + 1;
    int n_steps = n_plates - 1;
    double extent = axis == StackAxis::Y ? height : width;
    double cross_extent = axis == StackAxis::Y ? width : height;
    double usable = extent - 6.0;
    require(usable > n_steps * min_step + 2.0, "image too small for requested plate count");
    double max_step = std::min(2.5 * min_step, n_steps ? (usable - 2.0) / n_steps : min_step);
    max_step = std::max(max_step, min_step);
    double pos = rng.uniform(2.0, 4.0);
    double cross_base = rng.uniform(0.3, 0.7) * cross_extent;
    for (int i = 0; i < n_plates; ++i) {
        if (i > 0) pos += rng.uniform(min_step, max_step);
        double cross = cross_base + rng.uniform(-3.0, 3.0);
        cross = std::min(cross_extent - 1.5, std::max(0.5, cross));
        Pt p = axis == StackAxis::Y ? Pt{cross, pos} : Pt{pos, cross};
        if (i % 2 == 0) ann.anode.push_back(p);
        else ann.cathode.push_back(p);
    }
    return ann;
}

}  // namespace testutil

#ifdef PBD_TESTUTIL_AUTODIFF
#include <functional>

#include "pbd/tensor.hpp"

namespace testutil {

// Central-difference check: rebuilds the scalar graph with each parameter
// element nudged by ±h and compares against the analytic gradient. Returns
// the worst guarded relative error over all probed elements.
inline double fd_check(const std::function<pbd::Var()>& build,
                       const std::vector<pbd::Var>& params, double h = 1e-6) {
    using namespace pbd;
    zero_grad(params);
    Var root = build();
    require(root->val.size() == 1, "fd_check: graph must produce a scalar");
    backward(root);
    double worst = 0.0;
    for (const auto& p : params)
        for (int64_t i = 0; i < p->val.size(); ++i) {
            double keep = p->val[i];
            p->val[i] = keep + h;
            double fp = build()->val[0];
            p->val[i] = keep - h;
            double fm = build()->val[0];
            p->val[i] = keep;
            double num = (fp - fm) / (2.0 * h);
            double ana = p->grad[i];
            double denom = std::max({1.0, std::abs(num), std::abs(ana)});
            worst = std::max(worst, std::abs(num - ana) / denom);
        }
    return worst;
}

inline pbd::Var random_param(pbd::Rng& rng, std::vector<int> shape, double lo = -1.0,
                             double hi = 1.0) {
    pbd::Tensor t(std::move(shape));
    for (auto& v : t.v) v = rng.uniform(lo, hi);
    return pbd::param(std::move(t));
}

}  // namespace testutil
#endif  // PBD_TESTUTIL_AUTODIFF
