#pragma once

// Annotation-pipeline utilities: near-duplicate detection over pooled feature
// vectors, activation-spread uncertainty routing, and multi-annotator fusion
// with a single bounded voting round.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "pbd/annotation.hpp"
#include "pbd/core.hpp"
#include "pbd/model.hpp"

namespace pbd {

// --- near-duplicate clustering ---

struct DedupInput {
    std::string image_id;
    std::vector<double> feature;
};

struct DedupResult {
    // clusters are disjoint, cover every input, and are listed by ascending
    // representative id; members are index lists into the input
    std::vector<std::vector<int>> clusters;
    std::vector<int> representatives;  // one input index per cluster, smallest image_id
    std::vector<int> cluster_of;       // input index -> cluster index
};

inline double euclid(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size(), "dedup: feature dimensionality mismatch");
    double sq = 0;
    for (size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(sq);
}

// Connects any two inputs whose features sit closer than the threshold and
// returns the connected components of that graph.
inline DedupResult dedup_features(const std::vector<DedupInput>& inputs, double threshold) {
    require(threshold >= 0, "dedup: threshold must be non-negative");
    int n = (int)inputs.size();
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (euclid(inputs[i].feature, inputs[j].feature) < threshold)
                parent[find(i)] = find(j);

    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < n; ++i) groups[find(i)].push_back(i);

    DedupResult res;
    res.cluster_of.assign(n, -1);
    for (auto& [root, members] : groups) {
        std::sort(members.begin(), members.end(), [&](int a, int b) {
            return inputs[a].image_id < inputs[b].image_id;
        });
        res.clusters.push_back(members);
    }
    std::sort(res.clusters.begin(), res.clusters.end(), [&](const auto& a, const auto& b) {
        return inputs[a.front()].image_id < inputs[b.front()].image_id;
    });
    for (int c = 0; c < (int)res.clusters.size(); ++c) {
        res.representatives.push_back(res.clusters[c].front());
        for (int i : res.clusters[c]) res.cluster_of[i] = c;
    }
    return res;
}

// Pooled level-5 encoder features; any fixed-dimension embedding works for
// dedup_features, this is the built-in extractor.
inline std::vector<double> embed_image(EndpointNet& net, const Tensor& image) {
    auto feats = net.encode(constant(image));
    Var pooled = gap_hw(feats[4]);
    return pooled->val.v;
}

// --- uncertainty routing ---

inline double uncertainty(const MapF& pred) {
    require(pred.h > 0 && pred.w > 0, "uncertainty: empty map");
    auto [lo, hi] = std::minmax_element(pred.v.begin(), pred.v.end());
    return *hi - *lo;
}

struct UncertaintySplit {
    std::vector<int> uncertain;  // spread strictly above the threshold
    std::vector<int> confident;
};

inline UncertaintySplit route_by_uncertainty(const std::vector<MapF>& maps, double tau) {
    UncertaintySplit s;
    for (int i = 0; i < (int)maps.size(); ++i)
        (uncertainty(maps[i]) > tau ? s.uncertain : s.confident).push_back(i);
    return s;
}

// --- multi-annotator fusion ---

enum class CountRule { All, Majority };

inline CountRule count_rule_from_string(const std::string& s) {
    if (s == "all") return CountRule::All;
    if (s == "majority") return CountRule::Majority;
    throw Error("count rule must be all or majority: " + s);
}

struct AnnotationBundle {
    std::string image_id;
    std::vector<EndpointAnnotation> annotations;  // >= 1, same image
    bool consistent = false;     // averaging path succeeded
    bool vote_resolved = false;  // fused came out of the voting round
    bool single = false;         // only one annotator, passed through
    std::optional<EndpointAnnotation> fused;
};

namespace fuse_detail {

inline std::pair<int, int> counts(const EndpointAnnotation& a) {
    return {(int)a.anode.size(), (int)a.cathode.size()};
}

// Total deviation between two annotations over sorted-index point pairs; a
// count disagreement dwarfs any coordinate distance.
inline double deviation(const EndpointAnnotation& a, const EndpointAnnotation& b) {
    constexpr double kCountPenalty = 1e6;
    double d = kCountPenalty * (std::abs((double)a.anode.size() - (double)b.anode.size()) +
                                std::abs((double)a.cathode.size() - (double)b.cathode.size()));
    for (size_t i = 0; i < std::min(a.anode.size(), b.anode.size()); ++i)
        d += dist(a.anode[i], b.anode[i]);
    for (size_t i = 0; i < std::min(a.cathode.size(), b.cathode.size()); ++i)
        d += dist(a.cathode[i], b.cathode[i]);
    return d;
}

// Deterministic candidate identity: counts, then coordinates. Keeps voting
// independent of the order annotators are listed in.
inline std::vector<double> identity_key(const EndpointAnnotation& a) {
    std::vector<double> k{(double)a.anode.size(), (double)a.cathode.size()};
    for (const auto* pts : {&a.anode, &a.cathode})
        for (const Pt& p : *pts) {
            k.push_back(p.x);
            k.push_back(p.y);
        }
    return k;
}

inline EndpointAnnotation mean_annotation(const std::vector<const EndpointAnnotation*>& anns) {
    EndpointAnnotation out = *anns.front();
    for (auto* list : {&out.anode, &out.cathode}) {
        bool is_anode = list == &out.anode;
        for (size_t j = 0; j < list->size(); ++j) {
            double sx = 0, sy = 0;
            for (const auto* a : anns) {
                const Pt& p = is_anode ? a->anode[j] : a->cathode[j];
                sx += p.x;
                sy += p.y;
            }
            (*list)[j] = {sx / anns.size(), sy / anns.size()};
        }
        sort_by_stack_axis(*list, out.stack_axis);
    }
    return out;
}

}  // namespace fuse_detail

// The voting resolver: picks the annotation minimizing its total deviation to
// all the others, ties broken by the lexicographically smallest identity key.
inline const EndpointAnnotation& resolve_vote(const std::vector<EndpointAnnotation>& anns) {
    require(!anns.empty(), "vote: no candidates");
    int best = -1;
    double best_score = 0;
    std::vector<double> best_key;
    for (int i = 0; i < (int)anns.size(); ++i) {
        double score = 0;
        for (int j = 0; j < (int)anns.size(); ++j)
            if (j != i) score += fuse_detail::deviation(anns[i], anns[j]);
        auto key = fuse_detail::identity_key(anns[i]);
        if (best < 0 || score < best_score || (score == best_score && key < best_key)) {
            best = i;
            best_score = score;
            best_key = std::move(key);
        }
    }
    return anns[best];
}

// Coordinate-averaging fusion with one voting round as the fallback. All
// annotators (or a strict majority, under CountRule::Majority) must agree on
// both plate counts and every sorted-index-paired point must deviate by less
// than eps_px; then the fused annotation is the per-point coordinate mean.
// Anything else resolves through the vote. A single annotation passes through
// flagged, untouched.
inline AnnotationBundle fuse_annotations(const std::vector<EndpointAnnotation>& annotations,
                                         double eps_px = 3.5,
                                         CountRule rule = CountRule::All) {
    require(!annotations.empty(), "fuse: empty bundle");
    require(eps_px > 0, "fuse: eps must be positive");
    AnnotationBundle b;
    b.image_id = annotations.front().image_id;
    b.annotations = annotations;
    for (const auto& a : annotations) {
        require(a.width == annotations.front().width && a.height == annotations.front().height,
                "fuse: annotations disagree on image size");
        require(a.stack_axis == annotations.front().stack_axis,
                "fuse: annotations disagree on stack axis");
    }
    if (annotations.size() == 1) {
        b.single = true;
        b.fused = annotations.front();
        return b;
    }

    // count agreement: the agreeing set is everyone (All) or a strict majority
    // sharing one count pair (Majority)
    std::map<std::pair<int, int>, std::vector<const EndpointAnnotation*>> by_counts;
    for (const auto& a : annotations) by_counts[fuse_detail::counts(a)].push_back(&a);
    std::vector<const EndpointAnnotation*> agreeing;
    if (rule == CountRule::All) {
        if (by_counts.size() == 1) agreeing = by_counts.begin()->second;
    } else {
        for (auto& [c, group] : by_counts)
            if (2 * group.size() > annotations.size()) agreeing = group;
    }

    bool within_eps = !agreeing.empty();
    if (within_eps) {
        auto spread_ok = [&](bool anode) {
            size_t npts = anode ? agreeing.front()->anode.size() : agreeing.front()->cathode.size();
            for (size_t j = 0; j < npts; ++j)
                for (size_t u = 0; u < agreeing.size(); ++u)
                    for (size_t v = u + 1; v < agreeing.size(); ++v) {
                        const Pt& p = anode ? agreeing[u]->anode[j] : agreeing[u]->cathode[j];
                        const Pt& q = anode ? agreeing[v]->anode[j] : agreeing[v]->cathode[j];
                        if (!(dist(p, q) < eps_px)) return false;
                    }
            return true;
        };
        within_eps = spread_ok(true) && spread_ok(false);
    }

    if (within_eps) {
        b.consistent = true;
        b.fused = fuse_detail::mean_annotation(agreeing);
    } else {
        b.vote_resolved = true;  // one voting round, no recursion
        b.fused = resolve_vote(annotations);
    }
    b.fused->image_id = b.image_id;
    return b;
}

}  // namespace pbd
