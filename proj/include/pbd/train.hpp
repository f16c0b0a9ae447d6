#pragma once

// Training loop: Adam with decoupled-from-nothing plain L2 (added straight into
// the gradients), global-norm clipping, stepped learning-rate decay, flip /
// rescale / brightness augmentation, and a per-epoch random prompt drawn from
// the pure-plate images of the training split.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "pbd/image_io.hpp"
#include "pbd/labels.hpp"
#include "pbd/loss.hpp"
#include "pbd/manifest.hpp"
#include "pbd/model.hpp"

namespace pbd {

struct TrainConfig {
    int input = 96;        // model-facing side length, multiple of 32
    int epochs = 150;
    int batch = 4;
    int max_iters = 0;     // optional hard cap on optimizer steps, 0 = no cap
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-3;
    double clip_norm = 0.5;
    int lr_step = 120;     // multiply lr by lr_gamma after this many epochs
    double lr_gamma = 0.9;
    bool augment = true;
    std::string radius_policy = "ada-0.3";
    int line_thickness = 1;
    LossWeights weights;
    uint64_t seed = 1;

    void check() const {
        require(input >= 32 && input % 32 == 0, "train: input must be a positive multiple of 32");
        require(epochs >= 1 && batch >= 1, "train: epochs and batch must be positive");
        require(lr > 0 && clip_norm > 0 && lr_gamma > 0, "train: lr, clip and gamma must be positive");
        require(lr_step >= 1, "train: lr_step must be at least 1");
    }
};

struct TrainSample {
    ImageU8 image;
    EndpointAnnotation ann;
};

inline std::vector<TrainSample> load_split(const std::string& dir, const std::string& manifest) {
    namespace fs = std::filesystem;
    auto anns = read_manifest((fs::path(dir) / manifest).string());
    std::vector<TrainSample> out;
    out.reserve(anns.size());
    for (auto& a : anns) {
        TrainSample s;
        s.image = read_pgm((fs::path(dir) / "images" / (a.image_id + ".pgm")).string());
        require(s.image.w == a.width && s.image.h == a.height,
                "image size disagrees with manifest for " + a.image_id);
        s.ann = std::move(a);
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<TrainSample> load_training_set(const std::string& dir) {
    return load_split(dir, "train.jsonl");
}

inline Tensor tensor_from_map(const MapF& m) {
    Tensor t({m.h, m.w, 1});
    std::copy(m.v.begin(), m.v.end(), t.v.begin());
    return t;
}

namespace train_detail {

inline void hflip_inplace(MapF& m) {
    for (int r = 0; r < m.h; ++r)
        for (int c = 0; c < m.w / 2; ++c) std::swap(m.at(r, c), m.at(r, m.w - 1 - c));
}

}  // namespace train_detail

struct AugmentedSample {
    Tensor image;  // [S, S, 1] in [0, 1]
    EndpointAnnotation ann;
};

// Scale to one of {0.75, 1, 1.25} x input (rounded to a multiple of 32),
// mirror horizontally half the time, and jitter brightness. The annotation is
// remapped alongside so labels can be rendered at the augmented size.
inline AugmentedSample augment_sample(const TrainSample& s, const TrainConfig& cfg, Rng& rng) {
    int side = cfg.input;
    bool flip = false;
    double gain = 1.0, bias = 0.0;
    if (cfg.augment) {
        static const double scales[3] = {0.75, 1.0, 1.25};
        double sc = scales[rng.uniform_int(0, 2)];
        side = std::max(32, (int)std::lround(cfg.input * sc / 32.0) * 32);
        flip = rng.coin();
        gain = rng.uniform(0.9, 1.1);
        bias = rng.uniform(-0.05, 0.05);
    }
    MapF m = resize_bilinear(to_unit(s.image), side, side);
    if (flip) train_detail::hflip_inplace(m);
    for (auto& v : m.v) v = std::clamp(v * gain + bias, 0.0, 1.0);
    EndpointAnnotation ann = resize(s.ann, side, side);
    if (flip) ann = hflip(ann);
    return {tensor_from_map(m), std::move(ann)};
}

inline Tensor prompt_at(const TrainSample& prompt, int side) {
    return tensor_from_map(resize_bilinear(to_unit(prompt.image), side, side));
}

struct Adam {
    std::vector<Var> params;
    std::vector<Tensor> m, v;
    int64_t t = 0;

    explicit Adam(const std::vector<Var>& ps) : params(ps) {
        for (const auto& p : params) {
            m.emplace_back(p->val.shape, 0.0);
            v.emplace_back(p->val.shape, 0.0);
        }
    }

    // clip to a global norm, fold L2 into the gradient, then a standard
    // bias-corrected Adam update
    void step(const TrainConfig& cfg, double lr) {
        double sq = 0;
        for (const auto& p : params)
            for (double g : p->grad.v) sq += g * g;
        double norm = std::sqrt(sq);
        double scale = norm > cfg.clip_norm && norm > 0 ? cfg.clip_norm / norm : 1.0;
        ++t;
        double c1 = 1.0 - std::pow(cfg.beta1, (double)t);
        double c2 = 1.0 - std::pow(cfg.beta2, (double)t);
        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i]->val;
            auto& g = params[i]->grad;
            for (int64_t k = 0; k < p.size(); ++k) {
                double gk = g[k] * scale + cfg.weight_decay * p[k];
                m[i][k] = cfg.beta1 * m[i][k] + (1.0 - cfg.beta1) * gk;
                v[i][k] = cfg.beta2 * v[i][k] + (1.0 - cfg.beta2) * gk * gk;
                p[k] -= lr * (m[i][k] / c1) / (std::sqrt(v[i][k] / c2) + cfg.eps);
            }
        }
    }
};

struct TrainResult {
    std::vector<double> iter_loss;  // mean sample loss per optimizer step
    int iterations = 0;
    int epochs_run = 0;
    double final_lr = 0.0;
};

// Stepped decay: epochs 1..119 run at the base rate, epoch 120 is the first
// decayed one, and so on every lr_step epochs.
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    require(epoch >= 1 && cfg.lr_step >= 1, "lr_at_epoch: epoch and lr_step are 1-based");
    return cfg.lr * std::pow(cfg.lr_gamma, epoch / cfg.lr_step);
}

inline TrainResult train_model(EndpointNet& net, const std::vector<TrainSample>& data,
                               const TrainConfig& cfg, std::ostream* log = nullptr) {
    cfg.check();
    require(!data.empty(), "train: empty training set");
    std::vector<int> prompt_pool;
    for (size_t i = 0; i < data.size(); ++i)
        if (data[i].ann.attributes.count(Attr::P)) prompt_pool.push_back((int)i);
    require(!prompt_pool.empty(), "train: no pure-plate prompt images in the training set");

    RadiusPolicy policy = RadiusPolicy::parse(cfg.radius_policy);
    Rng rng(cfg.seed);
    std::vector<Var> params;
    for (auto& [name, v] : net.params) params.push_back(v);
    Adam opt(params);
    TrainResult res;

    std::vector<int> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = (int)i;

    bool stop = false;
    for (int epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
        double lr = lr_at_epoch(cfg, epoch);
        int prompt_idx = prompt_pool[rng.uniform_int(0, (int)prompt_pool.size() - 1)];
        rng.shuffle(order);
        double epoch_loss = 0;
        int epoch_steps = 0;
        for (size_t at = 0; at < order.size() && !stop; at += cfg.batch) {
            size_t n = std::min((size_t)cfg.batch, order.size() - at);
            zero_grad(params);
            double batch_loss = 0;
            for (size_t k = 0; k < n; ++k) {
                AugmentedSample aug = augment_sample(data[order[at + k]], cfg, rng);
                Tensor prompt = prompt_at(data[prompt_idx], aug.image.dim(0));
                auto out = net.forward(aug.image, prompt);
                auto lb = to_training_labels(generate_labels(aug.ann, policy, cfg.line_thickness));
                Var loss = total_loss(out, lb, cfg.weights).total;
                batch_loss += loss->val[0];
                backward(scale(loss, 1.0 / (double)n));  // grads accumulate, loop-averaged
            }
            opt.step(cfg, lr);
            res.iter_loss.push_back(batch_loss / (double)n);
            epoch_loss += batch_loss / (double)n;
            ++epoch_steps;
            ++res.iterations;
            if (cfg.max_iters > 0 && res.iterations >= cfg.max_iters) stop = true;
        }
        res.epochs_run = epoch;
        res.final_lr = lr;
        if (log && (epoch % 10 == 0 || epoch == 1 || stop || epoch == cfg.epochs))
            (*log) << "epoch " << epoch << "  lr " << lr << "  loss "
                   << (epoch_steps ? epoch_loss / epoch_steps : 0.0) << "\n";
    }
    return res;
}

}  // namespace pbd
