#pragma once

// Evaluation: run the network over a test split with a cached prompt, extract
// endpoint predictions from the thresholded refined maps (counts come from
// connected components, never from the counting head), and score them with
// the coordinate- and segmentation-level metrics.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pbd/image_io.hpp"
#include "pbd/labels.hpp"
#include "pbd/metrics.hpp"
#include "pbd/model.hpp"
#include "pbd/train.hpp"

namespace pbd {

struct EvalConfig {
    int input = 96;  // model-facing side, multiple of 32
    double threshold = 0.5;
    MetricMode mode = MetricMode::Pixel;
    std::string radius_policy = "ada-0.3";  // renders gt masks for segmentation scores
    std::string prompt_id;                  // train image to use as prompt; default: first pure

    void check() const {
        require(input >= 32 && input % 32 == 0, "eval: input must be a positive multiple of 32");
        require(threshold > 0.0 && threshold < 1.0, "eval: threshold must be in (0, 1)");
    }
};

struct Inference {
    MapF coarse_anode, coarse_cathode;
    MapF anode, cathode;  // refined maps, model frame
    MapF line_anode, line_cathode;
    std::vector<Pt> pts_anode, pts_cathode;  // model frame, sorted by stack axis
    double head_anode = 0.0, head_cathode = 0.0;  // counting-head readouts
};

inline MapF channel_map(const Tensor& t, int ch) {
    MapF m(t.dim(0), t.dim(1));
    for (int r = 0; r < m.h; ++r)
        for (int c = 0; c < m.w; ++c) m.at(r, c) = t[((int64_t)r * m.w + c) * t.dim(2) + ch];
    return m;
}

inline Inference run_inference(EndpointNet& net, const ImageU8& image, const Tensor& prompt,
                               double threshold, StackAxis axis) {
    int side = prompt.dim(0);
    Tensor input = tensor_from_map(resize_bilinear(to_unit(image), side, prompt.dim(1)));
    auto out = net.forward(input, prompt);
    Inference inf;
    inf.coarse_anode = channel_map(out.coarse->val, 0);
    inf.coarse_cathode = channel_map(out.coarse->val, 1);
    inf.anode = channel_map(out.refined->val, 0);
    inf.cathode = channel_map(out.refined->val, 1);
    inf.line_anode = channel_map(out.lines->val, 0);
    inf.line_cathode = channel_map(out.lines->val, 1);
    inf.pts_anode = extract_points(inf.anode, threshold, axis);
    inf.pts_cathode = extract_points(inf.cathode, threshold, axis);
    inf.head_anode = out.n_anode->val[0];
    inf.head_cathode = out.n_cathode->val[0];
    return inf;
}

// Picks the prompt image: an explicit id if configured, otherwise the first
// pure-plate image of the training split.
inline const TrainSample& pick_prompt(const std::vector<TrainSample>& train,
                                      const std::string& prompt_id) {
    if (!prompt_id.empty()) {
        for (const auto& s : train)
            if (s.ann.image_id == prompt_id) return s;
        throw Error("eval: prompt image not found in training split: " + prompt_id);
    }
    for (const auto& s : train)
        if (s.ann.attributes.count(Attr::P)) return s;
    throw Error("eval: no pure-plate image available as prompt");
}

struct ImageRow {
    std::string image_id;
    std::string split;
    int n_anode_pred = 0, n_cathode_pred = 0;
    int n_anode_gt = 0, n_cathode_gt = 0;
    double head_anode = 0.0, head_cathode = 0.0;
};

struct EvalOutcome {
    std::map<std::string, MetricReport> splits;
    MetricReport overall;
    std::vector<ImageRow> rows;
    std::string prompt_id;
    MetricMode mode = MetricMode::Pixel;
    int images = 0;
};

inline ImageResult score_image(const Inference& inf, const EndpointAnnotation& native,
                               const EvalConfig& cfg) {
    int side = inf.anode.h;
    ImageResult r;
    r.mode = cfg.mode;
    r.map_anode = inf.anode;
    r.map_cathode = inf.cathode;
    EndpointAnnotation frame = resize(native, side, side);
    RadiusPolicy policy = RadiusPolicy::parse(cfg.radius_policy);
    LabelSet ls = generate_labels(frame, policy);
    r.gt_mask_anode = ls.point_anode;
    r.gt_mask_cathode = ls.point_cathode;
    if (cfg.mode == MetricMode::Pixel) {
        // score in the model frame: localization errors are in input pixels
        r.gt = std::move(frame);
        r.pred_anode = inf.pts_anode;
        r.pred_cathode = inf.pts_cathode;
    } else {
        // score in the native frame, errors normalized by its area
        r.gt = native;
        for (const Pt& p : inf.pts_anode)
            r.pred_anode.push_back(map_point(p, side, side, native.width, native.height));
        for (const Pt& p : inf.pts_cathode)
            r.pred_cathode.push_back(map_point(p, side, side, native.width, native.height));
        sort_by_stack_axis(r.pred_anode, native.stack_axis);
        sort_by_stack_axis(r.pred_cathode, native.stack_axis);
    }
    return r;
}

inline EvalOutcome evaluate_model(EndpointNet& net, const std::string& data_dir,
                                  const EvalConfig& cfg) {
    cfg.check();
    auto train = load_training_set(data_dir);
    const TrainSample& prompt_sample = pick_prompt(train, cfg.prompt_id);
    Tensor prompt = prompt_at(prompt_sample, cfg.input);  // cached for the whole run

    EvalOutcome out;
    out.prompt_id = prompt_sample.ann.image_id;
    out.mode = cfg.mode;
    for (const char* split : {"regular", "difficult", "tough"}) {
        auto samples = load_split(data_dir, std::string("test_") + split + ".jsonl");
        require(!samples.empty(), std::string("eval: empty test split: ") + split);
        std::vector<ImageResult> results;
        results.reserve(samples.size());
        for (const auto& s : samples) {
            Inference inf =
                run_inference(net, s.image, prompt, cfg.threshold, s.ann.stack_axis);
            results.push_back(score_image(inf, s.ann, cfg));
            ImageRow row;
            row.image_id = s.ann.image_id;
            row.split = split;
            row.n_anode_pred = (int)inf.pts_anode.size();
            row.n_cathode_pred = (int)inf.pts_cathode.size();
            row.n_anode_gt = (int)s.ann.anode.size();
            row.n_cathode_gt = (int)s.ann.cathode.size();
            row.head_anode = inf.head_anode;
            row.head_cathode = inf.head_cathode;
            out.rows.push_back(std::move(row));
            ++out.images;
        }
        out.splits[split] = compute_report(results, cfg.mode);
    }
    out.overall = aggregate_splits(out.splits);
    return out;
}

}  // namespace pbd
