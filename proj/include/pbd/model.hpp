#pragma once

// Prompt-conditioned endpoint segmentation network. Two weight-shared encoder
// streams (prompt image + current image) feed per-level prompt-filtered scan
// blocks; a five-block top-down decoder emits the coarse anode/cathode point
// map; counting and line heads hang off the raw encoder features; a
// density-reordered scan refines the coarse map at full resolution.
//
// Maps are [H, W, C]; channel 0 is anode, channel 1 cathode throughout.

#include <array>
#include <string>
#include <utility>

#include "pbd/scan.hpp"

namespace pbd {

struct EncoderConfig {
    std::array<int, 5> widths{16, 32, 64, 96, 128};
    bool share_streams = true;  // prompt/current streams always share weights
};

struct ModelConfig {
    EncoderConfig encoder;
    int prompt_kernels = 8;        // base kernels mixed by the prompt attention
    int n_state = 8;               // hidden states per channel in every scan
    bool share_scan_params = false;  // one parameter set for all 4 directions
    bool norm_after_filter = true;
    uint64_t seed = 1;
};

struct ParamRegistry {
    std::vector<std::pair<std::string, Var>> items;
    Rng rng;
    explicit ParamRegistry(uint64_t seed) : rng(seed) {}
    Var add(const std::string& name, Tensor t) {
        Var v = param(std::move(t));
        items.push_back({name, v});
        return v;
    }
    Var uniform(const std::string& name, std::vector<int> shape, double limit) {
        Tensor t(std::move(shape));
        for (auto& x : t.v) x = rng.uniform(-limit, limit);
        return add(name, std::move(t));
    }
};

struct ConvLayer {
    Var w, b;
    int stride = 1, pad = 0;
    static ConvLayer make(ParamRegistry& reg, const std::string& name, int k, int ci, int co,
                          int stride, int pad, bool bias = true) {
        ConvLayer l;
        l.stride = stride;
        l.pad = pad;
        l.w = reg.uniform(name + ".w", {k, k, ci, co}, std::sqrt(6.0 / (k * k * ci)));
        if (bias) l.b = reg.add(name + ".b", Tensor({co}, 0.0));
        return l;
    }
    Var operator()(const Var& x) const { return conv2d(x, w, b, stride, pad); }
};

struct LinearLayer {
    Var w, b;
    static LinearLayer make(ParamRegistry& reg, const std::string& name, int ci, int co,
                            bool bias = true) {
        LinearLayer l;
        l.w = reg.uniform(name + ".w", {ci, co}, std::sqrt(6.0 / (ci + co)));
        if (bias) l.b = reg.add(name + ".b", Tensor({co}, 0.0));
        return l;
    }
    Var operator()(const Var& x) const { return linear(x, w, b); }
};

struct NormLayer {
    Var gamma, beta;
    static NormLayer make(ParamRegistry& reg, const std::string& name, int c) {
        NormLayer l;
        l.gamma = reg.add(name + ".gamma", Tensor({c}, 1.0));
        l.beta = reg.add(name + ".beta", Tensor({c}, 0.0));
        return l;
    }
    Var operator()(const Var& x) const { return layer_norm(x, gamma, beta); }
};

// Apply a linear layer per pixel of an [H, W, C] map.
inline Var pixelwise(const LinearLayer& l, const Var& x) {
    int h = x->val.shape[0], w = x->val.shape[1], c = x->val.shape[2];
    Var y = l(reshape(x, {h * w, c}));
    return reshape(y, {h, w, y->val.shape[1]});
}

struct Ss2dLayer {
    std::array<ScanParamVars, 4> dirs;
    bool share = false;
    static Ss2dLayer make(ParamRegistry& reg, const std::string& name, int c, int n,
                          bool share) {
        Ss2dLayer l;
        l.share = share;
        int n_sets = share ? 1 : 4;
        for (int k = 0; k < n_sets; ++k) {
            auto p = init_scan_params(c, n, reg.rng);
            std::string d = name + ".dir" + std::to_string(k);
            l.dirs[k] = {reg.add(d + ".a_log", p.a_log), reg.add(d + ".d", p.d),
                         reg.add(d + ".w_dt", p.w_dt),   reg.add(d + ".b_dt", p.b_dt),
                         reg.add(d + ".w_b", p.w_b),     reg.add(d + ".w_c", p.w_c)};
        }
        for (int k = n_sets; k < 4; ++k) l.dirs[k] = l.dirs[0];
        return l;
    }
    Var operator()(const Var& f) const { return ss2d(f, dirs, share); }
};

// Mixes K trainable 3x3 kernels with prompt-derived soft attention and filters
// the current features with the result.
struct PromptFilter {
    Var bank;  // [K, 3, 3, C, C]
    LinearLayer att;
    NormLayer norm;
    bool use_norm = true;
    static PromptFilter make(ParamRegistry& reg, const std::string& name, int c, int k,
                             bool use_norm) {
        require(k >= 1, "PromptFilter: need at least one base kernel");
        PromptFilter f;
        f.use_norm = use_norm;
        f.bank = reg.uniform(name + ".bank", {k, 3, 3, c, c}, std::sqrt(6.0 / (9.0 * c)));
        f.att = LinearLayer::make(reg, name + ".att", c, k);
        f.norm = NormLayer::make(reg, name + ".norm", c);
        return f;
    }
    Var attention(const Var& f_prompt) const { return softmax_rows(att(gap_hw(f_prompt))); }
    Var operator()(const Var& f_prompt, const Var& f_current) const {
        require(same_shape(f_prompt->val, f_current->val), "PromptFilter: stream shape mismatch");
        Var mixed = weighted_sum_first(bank, attention(f_prompt));
        Var y = conv2d(f_current, mixed, nullptr, 1, 1);
        return use_norm ? norm(y) : y;
    }
};

struct PfssmBlock {
    PromptFilter filter;
    Ss2dLayer scan;
    NormLayer norm;
    LinearLayer proj;
    static PfssmBlock make(ParamRegistry& reg, const std::string& name, int c, int k, int n,
                           bool share_scan, bool norm_after_filter) {
        PfssmBlock b;
        b.filter = PromptFilter::make(reg, name + ".filter", c, k, norm_after_filter);
        b.scan = Ss2dLayer::make(reg, name + ".scan", c, n, share_scan);
        b.norm = NormLayer::make(reg, name + ".norm", c);
        b.proj = LinearLayer::make(reg, name + ".proj", c, c);
        return b;
    }
    Var operator()(const Var& f_prompt, const Var& f_current, bool use_scan = true) const {
        Var t = silu(filter(f_prompt, f_current));
        if (use_scan) t = scan(t);
        return pixelwise(proj, norm(t));
    }
};

// Five decoder blocks: four (lateral + upsample + add + conv), then one
// (upsample + conv) to full resolution, then a 1x1 two-channel head.
struct Decoder {
    std::array<ConvLayer, 5> lat;
    std::array<ConvLayer, 5> blocks;
    ConvLayer head;
    static Decoder make(ParamRegistry& reg, const std::string& name,
                        const std::array<int, 5>& widths) {
        Decoder d;
        int dw = widths[0];
        for (int i = 0; i < 5; ++i) {
            d.lat[i] = ConvLayer::make(reg, name + ".lat" + std::to_string(i), 1, widths[i],
                                       dw, 1, 0);
            d.blocks[i] =
                ConvLayer::make(reg, name + ".block" + std::to_string(i), 3, dw, dw, 1, 1);
        }
        d.head = ConvLayer::make(reg, name + ".head", 1, dw, 2, 1, 0);
        return d;
    }
    Var operator()(const std::array<Var, 5>& pyramid) const {
        Var d = lat[4](pyramid[4]);
        for (int i = 3; i >= 0; --i) d = blocks[i](add(lat[i](pyramid[i]), upsample_nearest(d, 2)));
        d = blocks[4](upsample_nearest(d, 2));
        return head(d);  // logits [H, W, 2]
    }
};

// N = ReLU(fc(GAP(F ⊙ downsample(M)))). Bias starts at 1 so the rectifier is
// active from the first step.
struct CountingHead {
    LinearLayer fc;
    static CountingHead make(ParamRegistry& reg, const std::string& name, int c) {
        CountingHead h;
        h.fc = LinearLayer::make(reg, name + ".fc", c, 1);
        h.fc.b->val[0] = 1.0;
        return h;
    }
    Var operator()(const Var& f_e5, const Var& m_full, int factor) const {
        Var m5 = factor == 1 ? m_full : avgpool(m_full, factor);
        return relu(fc(gap_hw(mul_map(f_e5, m5))));  // [1, 1]
    }
};

// F12 = conv(e1 + up(lat(e2))); per polarity: head(conv(M ⊙ F12) + F12).
struct LinePredictor {
    ConvLayer lat2, fuse, gate_an, gate_ca, head_an, head_ca;
    static LinePredictor make(ParamRegistry& reg, const std::string& name, int w1, int w2) {
        LinePredictor p;
        p.lat2 = ConvLayer::make(reg, name + ".lat2", 1, w2, w1, 1, 0);
        p.fuse = ConvLayer::make(reg, name + ".fuse", 3, w1, w1, 1, 1);
        p.gate_an = ConvLayer::make(reg, name + ".gate_an", 3, w1, w1, 1, 1);
        p.gate_ca = ConvLayer::make(reg, name + ".gate_ca", 3, w1, w1, 1, 1);
        p.head_an = ConvLayer::make(reg, name + ".head_an", 1, w1, 1, 1, 0);
        p.head_ca = ConvLayer::make(reg, name + ".head_ca", 1, w1, 1, 1, 0);
        return p;
    }
    Var operator()(const Var& e1, const Var& e2, const Var& m_an, const Var& m_ca) const {
        Var f12 = fuse(add(e1, upsample_nearest(lat2(e2), 2)));
        auto branch = [&](const ConvLayer& gate, const ConvLayer& head, const Var& m) {
            Var r = add(gate(mul_map(f12, avgpool(m, 2))), f12);
            return upsample_nearest(head(r), 2);
        };
        return concat_last(branch(gate_an, head_an, m_an),
                           branch(gate_ca, head_ca, m_ca));  // logits [H, W, 2]
    }
};

// Pixel order for the density-aware scan: anode block, then cathode, then
// background, raster order inside each block. Labels come from the coarse
// sigmoid maps with background scored 1 - max(anode, cathode); argmax ties
// resolve in that fixed order (anode over cathode over background).
inline std::vector<int> density_order(const Tensor& coarse) {
    require(coarse.shape.size() == 3 && coarse.shape[2] == 2,
            "density_order: coarse map must be [H, W, 2]");
    int64_t n = (int64_t)coarse.shape[0] * coarse.shape[1];
    std::vector<int> perm;
    perm.reserve((size_t)n);
    for (int pass = 0; pass < 3; ++pass)
        for (int64_t g = 0; g < n; ++g) {
            double a = coarse[g * 2], c = coarse[g * 2 + 1];
            double bg = 1.0 - std::max(a, c);
            int label = a >= c ? (a >= bg ? 0 : 2) : (c >= bg ? 1 : 2);
            if (label == pass) perm.push_back((int)g);
        }
    return perm;
}

inline std::pair<Tensor, std::vector<int>> density_reorder(const Tensor& f,
                                                           const Tensor& coarse) {
    require(f.shape.size() == 3, "density_reorder: feature must be [H, W, C]");
    require(f.shape[0] == coarse.shape[0] && f.shape[1] == coarse.shape[1],
            "density_reorder: feature/coarse size mismatch");
    auto perm = density_order(coarse);
    int C = f.shape[2];
    Tensor seq({(int)perm.size(), C});
    for (size_t i = 0; i < perm.size(); ++i)
        std::copy_n(f.v.data() + (int64_t)perm[i] * C, C, seq.v.data() + (int64_t)i * C);
    return {std::move(seq), std::move(perm)};
}

inline Tensor inverse_reorder(const Tensor& seq, const std::vector<int>& index_map, int h,
                              int w) {
    require(seq.shape.size() == 2, "inverse_reorder: sequence must be [L, C]");
    int64_t n = (int64_t)h * w;
    require((int64_t)index_map.size() == n && seq.shape[0] == (int)n,
            "inverse_reorder: length mismatch");
    std::vector<char> seen(index_map.size(), 0);
    for (int g : index_map) {
        require(g >= 0 && g < (int)n && !seen[g], "inverse_reorder: index map is not a bijection");
        seen[g] = 1;
    }
    int C = seq.shape[1];
    Tensor f({h, w, C});
    for (size_t i = 0; i < index_map.size(); ++i)
        std::copy_n(seq.v.data() + (int64_t)i * C, C, f.v.data() + (int64_t)index_map[i] * C);
    return f;
}

// Full-resolution refinement: project, mix locally, reorder by predicted
// density, scan the flat sequence forward and backward, restore raster order.
struct DrssmBlock {
    LinearLayer in_proj;
    Var dw_w, dw_b;
    ScanParamVars fwd, bwd;
    NormLayer norm;
    LinearLayer head;
    static DrssmBlock make(ParamRegistry& reg, const std::string& name, int c, int n) {
        DrssmBlock b;
        b.in_proj = LinearLayer::make(reg, name + ".in_proj", c, c);
        b.dw_w = reg.uniform(name + ".dw.w", {3, 3, c}, std::sqrt(6.0 / 9.0));
        b.dw_b = reg.add(name + ".dw.b", Tensor({c}, 0.0));
        auto add_scan = [&](const std::string& d) -> ScanParamVars {
            auto p = init_scan_params(c, n, reg.rng);
            return {reg.add(d + ".a_log", p.a_log), reg.add(d + ".d", p.d),
                    reg.add(d + ".w_dt", p.w_dt),   reg.add(d + ".b_dt", p.b_dt),
                    reg.add(d + ".w_b", p.w_b),     reg.add(d + ".w_c", p.w_c)};
        };
        b.fwd = add_scan(name + ".fwd");
        b.bwd = add_scan(name + ".bwd");
        b.norm = NormLayer::make(reg, name + ".norm", c);
        b.head = LinearLayer::make(reg, name + ".head", c, 2);
        return b;
    }
    Var operator()(const Var& f_low, const Tensor& coarse, bool reorder = true) const {
        int h = f_low->val.shape[0], w = f_low->val.shape[1], c = f_low->val.shape[2];
        int L = h * w;
        Var t = silu(depthwise3(pixelwise(in_proj, f_low), dw_w, dw_b));
        Var seq = reshape(t, {L, c});
        std::vector<int> perm(L);
        if (reorder) perm = density_order(coarse);
        else for (int i = 0; i < L; ++i) perm[i] = i;
        Var s = gather_rows(seq, perm);
        std::vector<int> rev(L);
        for (int i = 0; i < L; ++i) rev[i] = L - 1 - i;
        Var y = add(selective_scan(s, fwd),
                    gather_rows(selective_scan(gather_rows(s, rev), bwd), rev));
        std::vector<int> inv(L);
        for (int i = 0; i < L; ++i) inv[perm[i]] = i;
        Var back = reshape(gather_rows(y, inv), {h, w, c});
        return pixelwise(head, norm(back));  // logits [H, W, 2]
    }
};

struct ModelOutput {
    Var coarse_logits, refined_logits, line_logits;  // [H, W, 2]
    Var coarse, refined, lines;                      // sigmoid maps
    Var n_anode, n_cathode;                          // [1, 1], rectified
};

struct EndpointNet {
    ModelConfig cfg;
    std::array<ConvLayer, 5> enc_conv;
    std::array<NormLayer, 5> enc_norm;
    std::array<PfssmBlock, 5> blocks;
    Decoder decoder;
    CountingHead count_an, count_ca;
    LinePredictor line;
    DrssmBlock drssm;
    std::vector<std::pair<std::string, Var>> params;

    explicit EndpointNet(const ModelConfig& c) : cfg(c) {
        require(cfg.encoder.share_streams, "EndpointNet: streams must share weights");
        ParamRegistry reg(cfg.seed);
        const auto& wd = cfg.encoder.widths;
        int ci = 1;
        for (int i = 0; i < 5; ++i) {
            std::string s = "encoder.stage" + std::to_string(i + 1);
            enc_conv[i] = ConvLayer::make(reg, s + ".conv", 3, ci, wd[i], 2, 1);
            enc_norm[i] = NormLayer::make(reg, s + ".norm", wd[i]);
            ci = wd[i];
        }
        for (int i = 0; i < 5; ++i)
            blocks[i] = PfssmBlock::make(reg, "pfssm.level" + std::to_string(i + 1), wd[i],
                                         cfg.prompt_kernels, cfg.n_state,
                                         cfg.share_scan_params, cfg.norm_after_filter);
        decoder = Decoder::make(reg, "decoder", wd);
        count_an = CountingHead::make(reg, "count.anode", wd[4]);
        count_ca = CountingHead::make(reg, "count.cathode", wd[4]);
        line = LinePredictor::make(reg, "line", wd[0], wd[1]);
        drssm = DrssmBlock::make(reg, "drssm", wd[0], cfg.n_state);
        params = std::move(reg.items);
    }

    // Both inputs are [H, W, 1] unit-range grayscale; H and W must be
    // divisible by 32 so every stage and mask downsampling lands exactly.
    std::array<Var, 5> encode(const Var& x0) const {
        std::array<Var, 5> fs;
        Var x = x0;
        for (int i = 0; i < 5; ++i) {
            x = silu(enc_norm[i](enc_conv[i](x)));
            fs[i] = x;
        }
        return fs;
    }

    ModelOutput forward(const Tensor& image, const Tensor& prompt) const {
        require(image.shape.size() == 3 && image.shape[2] == 1, "forward: image must be [H, W, 1]");
        require(same_shape_dims(image, prompt), "forward: prompt/image size mismatch");
        int h = image.shape[0], w = image.shape[1];
        require(h % 32 == 0 && w % 32 == 0 && h >= 32 && w >= 32,
                "forward: input size must be a multiple of 32");
        auto cur = encode(constant(image));
        auto pro = encode(constant(prompt));
        std::array<Var, 5> enhanced;
        for (int i = 0; i < 5; ++i) enhanced[i] = blocks[i](pro[i], cur[i]);

        ModelOutput out;
        out.coarse_logits = decoder(enhanced);
        out.coarse = sigmoid(out.coarse_logits);
        Var m_an = slice_last(out.coarse, 0, 1), m_ca = slice_last(out.coarse, 1, 2);
        int factor = h / cur[4]->val.shape[0];
        out.n_anode = count_an(cur[4], m_an, factor);
        out.n_cathode = count_ca(cur[4], m_ca, factor);
        out.line_logits = line(cur[0], cur[1], m_an, m_ca);
        out.lines = sigmoid(out.line_logits);
        out.refined_logits = drssm(upsample_nearest(enhanced[0], 2), out.coarse->val);
        out.refined = sigmoid(out.refined_logits);
        return out;
    }

  private:
    static bool same_shape_dims(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }
};

}  // namespace pbd
