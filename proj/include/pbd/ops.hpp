#pragma once

// Differentiable primitives over Var. Layout conventions: feature maps are
// [H, W, C] row-major, sequences are [L, C], matrices are [rows, cols].
// Each op validates shapes up front and registers a closure that adds into
// its parents' grad buffers; closures capture the output Node as a raw
// pointer to avoid shared_ptr cycles.

#include <algorithm>
#include <cmath>

#include "pbd/tensor.hpp"

namespace pbd {

inline Var add(const Var& a, const Var& b) {
    require(same_shape(a->val, b->val), "add: shape mismatch");
    Tensor y = a->val;
    for (int64_t i = 0; i < y.size(); ++i) y[i] += b->val[i];
    Var out = make_node(std::move(y), {a, b});
    Node* o = out.get();
    out->backprop = [o, a, b] {
        for (int64_t i = 0; i < o->grad.size(); ++i) {
            a->grad[i] += o->grad[i];
            b->grad[i] += o->grad[i];
        }
    };
    return out;
}

inline Var sub(const Var& a, const Var& b) {
    require(same_shape(a->val, b->val), "sub: shape mismatch");
    Tensor y = a->val;
    for (int64_t i = 0; i < y.size(); ++i) y[i] -= b->val[i];
    Var out = make_node(std::move(y), {a, b});
    Node* o = out.get();
    out->backprop = [o, a, b] {
        for (int64_t i = 0; i < o->grad.size(); ++i) {
            a->grad[i] += o->grad[i];
            b->grad[i] -= o->grad[i];
        }
    };
    return out;
}

inline Var mul(const Var& a, const Var& b) {
    require(same_shape(a->val, b->val), "mul: shape mismatch");
    Tensor y = a->val;
    for (int64_t i = 0; i < y.size(); ++i) y[i] *= b->val[i];
    Var out = make_node(std::move(y), {a, b});
    Node* o = out.get();
    out->backprop = [o, a, b] {
        for (int64_t i = 0; i < o->grad.size(); ++i) {
            a->grad[i] += o->grad[i] * b->val[i];
            b->grad[i] += o->grad[i] * a->val[i];
        }
    };
    return out;
}

// y = k*x + c
inline Var affine(const Var& x, double k, double c) {
    Tensor y = x->val;
    for (auto& t : y.v) t = k * t + c;
    Var out = make_node(std::move(y), {x});
    Node* o = out.get();
    out->backprop = [o, x, k] {
        for (int64_t i = 0; i < o->grad.size(); ++i) x->grad[i] += k * o->grad[i];
    };
    return out;
}

inline Var scale(const Var& x, double k) { return affine(x, k, 0.0); }
inline Var neg(const Var& x) { return affine(x, -1.0, 0.0); }

inline Var relu(const Var& x) {
    Tensor y = x->val;
    for (auto& t : y.v) t = std::max(0.0, t);
    Var out = make_node(std::move(y), {x});
    Node* o = out.get();
    out->backprop = [o, x] {
        for (int64_t i = 0; i < o->grad.size(); ++i)
            if (x->val[i] > 0.0) x->grad[i] += o->grad[i];
    };
    return out;
}

inline double sigmoid_s(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

inline Var sigmoid(const Var& x) {
    Tensor y = x->val;
    for (auto& t : y.v) t = sigmoid_s(t);
    Var out = make_node(std::move(y), {x});
    Node* o = out.get();
    out->backprop = [o, x] {
        for (int64_t i = 0; i < o->grad.size(); ++i) {
            double s = o->val[i];
            x->grad[i] += o->grad[i] * s * (1.0 - s);
        }
    };
    return out;
}

inline Var silu(const Var& x) {
    Tensor y = x->val;
    for (auto& t : y.v) t = t * sigmoid_s(t);
    Var out = make_node(std::move(y), {x});
    Node* o = out.get();
    out->backprop = [o, x] {
        for (int64_t i = 0; i < o->grad.size(); ++i) {
            double s = sigmoid_s(x->val[i]);
            x->grad[i] += o->grad[i] * (s + x->val[i] * s * (1.0 - s));
        }
    };
    return out;
}

inline double softplus_s(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

inline Var softplus(const Var& x) {
    Tensor y = x->val;
    for (auto& t : y.v) t = softplus_s(t);
    Var out = make_node(std::move(y), {x});
    Node* o = out.get();
    out->backprop = [o, x] {
        for (int64_t i = 0; i < o->grad.size(); ++i)
            x->grad[i] += o->grad[i] * sigmoid_s(x->val[i]);
    };
    return out;
}

inline Var log_op(const Var& x) {
    Tensor y = x->val;
    for (auto& t : y.v) {
        require(t > 0.0, "log_op: non-positive input");
        t = std::log(t);
    }
    Var out = make_node(std::move(y), {x});
    Node* o = out.get();
    out->backprop = [o, x] {
        for (int64_t i = 0; i < o->grad.size(); ++i) x->grad[i] += o->grad[i] / x->val[i];
    };
    return out;
}

inline Var div(const Var& a, const Var& b) {
    require(same_shape(a->val, b->val), "div: shape mismatch");
    Tensor y = a->val;
    for (int64_t i = 0; i < y.size(); ++i) {
        require(b->val[i] != 0.0, "div: zero denominator");
        y[i] /= b->val[i];
    }
    Var out = make_node(std::move(y), {a, b});
    Node* o = out.get();
    out->backprop = [o, a, b] {
        for (int64_t i = 0; i < o->grad.size(); ++i) {
            a->grad[i] += o->grad[i] / b->val[i];
            b->grad[i] -= o->grad[i] * a->val[i] / (b->val[i] * b->val[i]);
        }
    };
    return out;
}

inline Var abs_op(const Var& x) {
    Tensor y = x->val;
    for (auto& t : y.v) t = std::abs(t);
    Var out = make_node(std::move(y), {x});
    Node* o = out.get();
    out->backprop = [o, x] {
        for (int64_t i = 0; i < o->grad.size(); ++i)
            x->grad[i] += o->grad[i] * (x->val[i] > 0 ? 1.0 : x->val[i] < 0 ? -1.0 : 0.0);
    };
    return out;
}

// Same data, new shape; gradient passes straight through.
inline Var reshape(const Var& x, std::vector<int> shape) {
    require(Tensor::count(shape) == x->val.size(), "reshape: element count changed");
    Tensor y;
    y.shape = std::move(shape);
    y.v = x->val.v;
    Var out = make_node(std::move(y), {x});
    Node* o = out.get();
    out->backprop = [o, x] {
        for (int64_t i = 0; i < o->grad.size(); ++i) x->grad[i] += o->grad[i];
    };
    return out;
}

// x [m, ci] * w [ci, co] (+ b [co]) -> [m, co]
inline Var linear(const Var& x, const Var& w, const Var& b = nullptr) {
    require(x->val.shape.size() == 2 && w->val.shape.size() == 2, "linear: need 2-d inputs");
    int m = x->val.shape[0], ci = x->val.shape[1], co = w->val.shape[1];
    require(w->val.shape[0] == ci, "linear: inner dimension mismatch");
    if (b) require(b->val.shape == std::vector<int>{co}, "linear: bias shape");
    Tensor y({m, co});
    for (int r = 0; r < m; ++r)
        for (int i = 0; i < ci; ++i) {
            double xv = x->val[(int64_t)r * ci + i];
            if (xv == 0.0) continue;
            for (int j = 0; j < co; ++j) y[(int64_t)r * co + j] += xv * w->val[(int64_t)i * co + j];
        }
    if (b)
        for (int r = 0; r < m; ++r)
            for (int j = 0; j < co; ++j) y[(int64_t)r * co + j] += b->val[j];
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    Var out = make_node(std::move(y), std::move(parents));
    Node* o = out.get();
    out->backprop = [o, x, w, b, m, ci, co] {
        for (int r = 0; r < m; ++r)
            for (int j = 0; j < co; ++j) {
                double g = o->grad[(int64_t)r * co + j];
                if (g == 0.0) continue;
                if (b) b->grad[j] += g;
                for (int i = 0; i < ci; ++i) {
                    x->grad[(int64_t)r * ci + i] += g * w->val[(int64_t)i * co + j];
                    w->grad[(int64_t)i * co + j] += g * x->val[(int64_t)r * ci + i];
                }
            }
    };
    return out;
}

inline Var matmul(const Var& a, const Var& b) { return linear(a, b); }

// x [H, W, ci], w [kh, kw, ci, co], optional b [co]; zero padding.
inline Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    require(x->val.shape.size() == 3 && w->val.shape.size() == 4, "conv2d: bad ranks");
    int H = x->val.shape[0], W = x->val.shape[1], ci = x->val.shape[2];
    int kh = w->val.shape[0], kw = w->val.shape[1], co = w->val.shape[3];
    require(w->val.shape[2] == ci, "conv2d: channel mismatch");
    require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
    if (b) require(b->val.shape == std::vector<int>{co}, "conv2d: bias shape");
    int Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
    require(Ho >= 1 && Wo >= 1, "conv2d: output collapsed");
    Tensor y({Ho, Wo, co});
    const double* xv = x->val.v.data();
    const double* wv = w->val.v.data();
    double* yv = y.v.data();
    for (int r = 0; r < Ho; ++r)
        for (int c = 0; c < Wo; ++c) {
            double* yp = yv + ((int64_t)r * Wo + c) * co;
            if (b)
                for (int j = 0; j < co; ++j) yp[j] = b->val[j];
            for (int u = 0; u < kh; ++u) {
                int ir = r * stride + u - pad;
                if (ir < 0 || ir >= H) continue;
                for (int t = 0; t < kw; ++t) {
                    int ic = c * stride + t - pad;
                    if (ic < 0 || ic >= W) continue;
                    const double* xp = xv + ((int64_t)ir * W + ic) * ci;
                    const double* wp = wv + (((int64_t)u * kw + t) * ci) * co;
                    for (int i = 0; i < ci; ++i) {
                        double xx = xp[i];
                        if (xx == 0.0) continue;
                        const double* wrow = wp + (int64_t)i * co;
                        for (int j = 0; j < co; ++j) yp[j] += xx * wrow[j];
                    }
                }
            }
        }
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    Var out = make_node(std::move(y), std::move(parents));
    Node* o = out.get();
    out->backprop = [o, x, w, b, H, W, ci, kh, kw, co, Ho, Wo, stride, pad] {
        const double* gv = o->grad.v.data();
        for (int r = 0; r < Ho; ++r)
            for (int c = 0; c < Wo; ++c) {
                const double* gp = gv + ((int64_t)r * Wo + c) * co;
                if (b)
                    for (int j = 0; j < co; ++j) b->grad[j] += gp[j];
                for (int u = 0; u < kh; ++u) {
                    int ir = r * stride + u - pad;
                    if (ir < 0 || ir >= H) continue;
                    for (int t = 0; t < kw; ++t) {
                        int ic = c * stride + t - pad;
                        if (ic < 0 || ic >= W) continue;
                        int64_t xoff = ((int64_t)ir * W + ic) * ci;
                        int64_t woff = ((int64_t)u * kw + t) * ci * co;
                        for (int i = 0; i < ci; ++i) {
                            double acc = 0.0;
                            const double* wrow = w->val.v.data() + woff + (int64_t)i * co;
                            double* gwrow = w->grad.v.data() + woff + (int64_t)i * co;
                            double xx = x->val[xoff + i];
                            for (int j = 0; j < co; ++j) {
                                acc += gp[j] * wrow[j];
                                gwrow[j] += gp[j] * xx;
                            }
                            x->grad[xoff + i] += acc;
                        }
                    }
                }
            }
    };
    return out;
}

// Depthwise 3x3, stride 1, pad 1. w [3, 3, C], b [C].
inline Var depthwise3(const Var& x, const Var& w, const Var& b) {
    require(x->val.shape.size() == 3, "depthwise3: bad rank");
    int H = x->val.shape[0], W = x->val.shape[1], C = x->val.shape[2];
    require(w->val.shape == (std::vector<int>{3, 3, C}), "depthwise3: kernel shape");
    if (b) require(b->val.shape == std::vector<int>{C}, "depthwise3: bias shape");
    Tensor y({H, W, C});
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c)
            for (int ch = 0; ch < C; ++ch) {
                double acc = b ? b->val[ch] : 0.0;
                for (int u = -1; u <= 1; ++u)
                    for (int t = -1; t <= 1; ++t) {
                        int ir = r + u, ic = c + t;
                        if (ir < 0 || ir >= H || ic < 0 || ic >= W) continue;
                        acc += x->val[((int64_t)ir * W + ic) * C + ch] *
                               w->val[((int64_t)(u + 1) * 3 + (t + 1)) * C + ch];
                    }
                y[((int64_t)r * W + c) * C + ch] = acc;
            }
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    Var out = make_node(std::move(y), std::move(parents));
    Node* o = out.get();
    out->backprop = [o, x, w, b, H, W, C] {
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c)
                for (int ch = 0; ch < C; ++ch) {
                    double g = o->grad[((int64_t)r * W + c) * C + ch];
                    if (g == 0.0) continue;
                    if (b) b->grad[ch] += g;
                    for (int u = -1; u <= 1; ++u)
                        for (int t = -1; t <= 1; ++t) {
                            int ir = r + u, ic = c + t;
                            if (ir < 0 || ir >= H || ic < 0 || ic >= W) continue;
                            int64_t xi = ((int64_t)ir * W + ic) * C + ch;
                            int64_t wi = ((int64_t)(u + 1) * 3 + (t + 1)) * C + ch;
                            x->grad[xi] += g * w->val[wi];
                            w->grad[wi] += g * x->val[xi];
                        }
                }
    };
    return out;
}

// Normalise over the trailing dimension of size C; gamma/beta [C].
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
    int C = x->val.shape.back();
    require(gamma->val.shape == std::vector<int>{C} && beta->val.shape == std::vector<int>{C},
            "layer_norm: affine shape");
    int64_t rows = x->val.size() / C;
    Tensor y(x->val.shape);
    std::vector<double> inv_sigma(rows), mean(rows);
    for (int64_t r = 0; r < rows; ++r) {
        const double* xp = x->val.v.data() + r * C;
        double mu = 0;
        for (int i = 0; i < C; ++i) mu += xp[i];
        mu /= C;
        double var = 0;
        for (int i = 0; i < C; ++i) var += (xp[i] - mu) * (xp[i] - mu);
        var /= C;
        double is = 1.0 / std::sqrt(var + eps);
        mean[r] = mu;
        inv_sigma[r] = is;
        for (int i = 0; i < C; ++i)
            y[r * C + i] = gamma->val[i] * (xp[i] - mu) * is + beta->val[i];
    }
    Var out = make_node(std::move(y), {x, gamma, beta});
    Node* o = out.get();
    out->backprop = [o, x, gamma, beta, rows, C, mean, inv_sigma] {
        for (int64_t r = 0; r < rows; ++r) {
            const double* xp = x->val.v.data() + r * C;
            const double* gp = o->grad.v.data() + r * C;
            double m1 = 0, m2 = 0;  // mean(gy*gamma), mean(gy*gamma*xhat)
            for (int i = 0; i < C; ++i) {
                double xhat = (xp[i] - mean[r]) * inv_sigma[r];
                double gg = gp[i] * gamma->val[i];
                m1 += gg;
                m2 += gg * xhat;
                gamma->grad[i] += gp[i] * xhat;
                beta->grad[i] += gp[i];
            }
            m1 /= C;
            m2 /= C;
            for (int i = 0; i < C; ++i) {
                double xhat = (xp[i] - mean[r]) * inv_sigma[r];
                x->grad[r * C + i] +=
                    (gp[i] * gamma->val[i] - m1 - xhat * m2) * inv_sigma[r];
            }
        }
    };
    return out;
}

// Global average pool over H,W: [H, W, C] -> [1, C].
inline Var gap_hw(const Var& x) {
    require(x->val.shape.size() == 3, "gap_hw: bad rank");
    int H = x->val.shape[0], W = x->val.shape[1], C = x->val.shape[2];
    Tensor y({1, C});
    for (int64_t i = 0; i < (int64_t)H * W; ++i)
        for (int ch = 0; ch < C; ++ch) y[ch] += x->val[i * C + ch];
    for (int ch = 0; ch < C; ++ch) y[ch] /= double(H) * W;
    Var out = make_node(std::move(y), {x});
    Node* o = out.get();
    out->backprop = [o, x, H, W, C] {
        double inv = 1.0 / (double(H) * W);
        for (int64_t i = 0; i < (int64_t)H * W; ++i)
            for (int ch = 0; ch < C; ++ch) x->grad[i * C + ch] += o->grad[ch] * inv;
    };
    return out;
}

// Non-overlapping k x k mean pooling; H and W must divide by k.
inline Var avgpool(const Var& x, int k) {
    require(x->val.shape.size() == 3, "avgpool: bad rank");
    int H = x->val.shape[0], W = x->val.shape[1], C = x->val.shape[2];
    require(k >= 1 && H % k == 0 && W % k == 0, "avgpool: size must divide by k");
    int Ho = H / k, Wo = W / k;
    Tensor y({Ho, Wo, C});
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c)
            for (int ch = 0; ch < C; ++ch)
                y[((int64_t)(r / k) * Wo + c / k) * C + ch] += x->val[((int64_t)r * W + c) * C + ch];
    for (auto& t : y.v) t /= double(k) * k;
    Var out = make_node(std::move(y), {x});
    Node* o = out.get();
    out->backprop = [o, x, H, W, C, k] {
        int Wo = W / k;
        double inv = 1.0 / (double(k) * k);
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c)
                for (int ch = 0; ch < C; ++ch)
                    x->grad[((int64_t)r * W + c) * C + ch] +=
                        o->grad[((int64_t)(r / k) * Wo + c / k) * C + ch] * inv;
    };
    return out;
}

inline Var upsample_nearest(const Var& x, int f) {
    require(x->val.shape.size() == 3 && f >= 1, "upsample_nearest: bad input");
    int H = x->val.shape[0], W = x->val.shape[1], C = x->val.shape[2];
    Tensor y({H * f, W * f, C});
    for (int r = 0; r < H * f; ++r)
        for (int c = 0; c < W * f; ++c)
            for (int ch = 0; ch < C; ++ch)
                y[((int64_t)r * W * f + c) * C + ch] = x->val[((int64_t)(r / f) * W + c / f) * C + ch];
    Var out = make_node(std::move(y), {x});
    Node* o = out.get();
    out->backprop = [o, x, H, W, C, f] {
        for (int r = 0; r < H * f; ++r)
            for (int c = 0; c < W * f; ++c)
                for (int ch = 0; ch < C; ++ch)
                    x->grad[((int64_t)(r / f) * W + c / f) * C + ch] +=
                        o->grad[((int64_t)r * W * f + c) * C + ch];
    };
    return out;
}

// Row-wise softmax on [m, K].
inline Var softmax_rows(const Var& x) {
    require(x->val.shape.size() == 2, "softmax_rows: bad rank");
    int m = x->val.shape[0], K = x->val.shape[1];
    Tensor y({m, K});
    for (int r = 0; r < m; ++r) {
        const double* xp = x->val.v.data() + (int64_t)r * K;
        double mx = *std::max_element(xp, xp + K), s = 0;
        for (int i = 0; i < K; ++i) s += y[(int64_t)r * K + i] = std::exp(xp[i] - mx);
        for (int i = 0; i < K; ++i) y[(int64_t)r * K + i] /= s;
    }
    Var out = make_node(std::move(y), {x});
    Node* o = out.get();
    out->backprop = [o, x, m, K] {
        for (int r = 0; r < m; ++r) {
            const double* yp = o->val.v.data() + (int64_t)r * K;
            const double* gp = o->grad.v.data() + (int64_t)r * K;
            double dot = 0;
            for (int i = 0; i < K; ++i) dot += yp[i] * gp[i];
            for (int i = 0; i < K; ++i) x->grad[(int64_t)r * K + i] += yp[i] * (gp[i] - dot);
        }
    };
    return out;
}

// Broadcast-multiply a single-channel map over all channels of x.
inline Var mul_map(const Var& x, const Var& m) {
    require(x->val.shape.size() == 3 && m->val.shape.size() == 3, "mul_map: bad ranks");
    int H = x->val.shape[0], W = x->val.shape[1], C = x->val.shape[2];
    require(m->val.shape == (std::vector<int>{H, W, 1}), "mul_map: map must be [H, W, 1]");
    Tensor y({H, W, C});
    for (int64_t i = 0; i < (int64_t)H * W; ++i)
        for (int ch = 0; ch < C; ++ch) y[i * C + ch] = x->val[i * C + ch] * m->val[i];
    Var out = make_node(std::move(y), {x, m});
    Node* o = out.get();
    out->backprop = [o, x, m, H, W, C] {
        for (int64_t i = 0; i < (int64_t)H * W; ++i)
            for (int ch = 0; ch < C; ++ch) {
                x->grad[i * C + ch] += o->grad[i * C + ch] * m->val[i];
                m->grad[i] += o->grad[i * C + ch] * x->val[i * C + ch];
            }
    };
    return out;
}

// y[i, :] = x[perm[i], :]; perm must be a bijection for the inverse to exist,
// but the gradient (scatter-add) is correct for any index list.
inline Var gather_rows(const Var& x, std::vector<int> perm) {
    require(x->val.shape.size() == 2, "gather_rows: bad rank");
    int L = x->val.shape[0], C = x->val.shape[1];
    Tensor y({(int)perm.size(), C});
    for (size_t i = 0; i < perm.size(); ++i) {
        require(perm[i] >= 0 && perm[i] < L, "gather_rows: index out of range");
        std::copy_n(x->val.v.data() + (int64_t)perm[i] * C, C, y.v.data() + (int64_t)i * C);
    }
    Var out = make_node(std::move(y), {x});
    Node* o = out.get();
    out->backprop = [o, x, perm = std::move(perm), C] {
        for (size_t i = 0; i < perm.size(); ++i)
            for (int ch = 0; ch < C; ++ch)
                x->grad[(int64_t)perm[i] * C + ch] += o->grad[(int64_t)i * C + ch];
    };
    return out;
}

// Trailing-dimension slice [c0, c1) of an [H, W, C] map.
inline Var slice_last(const Var& x, int c0, int c1) {
    require(x->val.shape.size() == 3, "slice_last: bad rank");
    int H = x->val.shape[0], W = x->val.shape[1], C = x->val.shape[2];
    require(0 <= c0 && c0 < c1 && c1 <= C, "slice_last: bad range");
    int Cs = c1 - c0;
    Tensor y({H, W, Cs});
    for (int64_t i = 0; i < (int64_t)H * W; ++i)
        for (int ch = 0; ch < Cs; ++ch) y[i * Cs + ch] = x->val[i * C + c0 + ch];
    Var out = make_node(std::move(y), {x});
    Node* o = out.get();
    out->backprop = [o, x, H, W, C, c0, Cs] {
        for (int64_t i = 0; i < (int64_t)H * W; ++i)
            for (int ch = 0; ch < Cs; ++ch) x->grad[i * C + c0 + ch] += o->grad[i * Cs + ch];
    };
    return out;
}

// Join two maps along the trailing channel dimension.
inline Var concat_last(const Var& a, const Var& b) {
    require(a->val.shape.size() == 3 && b->val.shape.size() == 3, "concat_last: bad ranks");
    int H = a->val.shape[0], W = a->val.shape[1], Ca = a->val.shape[2], Cb = b->val.shape[2];
    require(b->val.shape[0] == H && b->val.shape[1] == W, "concat_last: spatial mismatch");
    Tensor y({H, W, Ca + Cb});
    for (int64_t i = 0; i < (int64_t)H * W; ++i) {
        std::copy_n(a->val.v.data() + i * Ca, Ca, y.v.data() + i * (Ca + Cb));
        std::copy_n(b->val.v.data() + i * Cb, Cb, y.v.data() + i * (Ca + Cb) + Ca);
    }
    Var out = make_node(std::move(y), {a, b});
    Node* o = out.get();
    out->backprop = [o, a, b, H, W, Ca, Cb] {
        for (int64_t i = 0; i < (int64_t)H * W; ++i) {
            for (int ch = 0; ch < Ca; ++ch) a->grad[i * Ca + ch] += o->grad[i * (Ca + Cb) + ch];
            for (int ch = 0; ch < Cb; ++ch)
                b->grad[i * Cb + ch] += o->grad[i * (Ca + Cb) + Ca + ch];
        }
    };
    return out;
}

inline Var sum_all(const Var& x) {
    Tensor y({1});
    for (double t : x->val.v) y[0] += t;
    Var out = make_node(std::move(y), {x});
    Node* o = out.get();
    out->backprop = [o, x] {
        for (int64_t i = 0; i < x->grad.size(); ++i) x->grad[i] += o->grad[0];
    };
    return out;
}

inline Var mean_all(const Var& x) {
    require(x->val.size() > 0, "mean_all: empty tensor");
    return scale(sum_all(x), 1.0 / double(x->val.size()));
}

// bank [K, rest...] combined with coeff [1, K] (or [K]) -> [rest...].
inline Var weighted_sum_first(const Var& bank, const Var& coeff) {
    require(bank->val.shape.size() >= 2, "weighted_sum_first: bank must have a leading dim");
    int K = bank->val.shape[0];
    require((int)coeff->val.size() == K, "weighted_sum_first: coefficient count");
    std::vector<int> rest(bank->val.shape.begin() + 1, bank->val.shape.end());
    int64_t n = Tensor::count(rest);
    Tensor y(rest);
    for (int k = 0; k < K; ++k) {
        double a = coeff->val[k];
        const double* bp = bank->val.v.data() + (int64_t)k * n;
        for (int64_t i = 0; i < n; ++i) y[i] += a * bp[i];
    }
    Var out = make_node(std::move(y), {bank, coeff});
    Node* o = out.get();
    out->backprop = [o, bank, coeff, K, n] {
        for (int k = 0; k < K; ++k) {
            double a = coeff->val[k], dot = 0;
            const double* bp = bank->val.v.data() + (int64_t)k * n;
            double* gbp = bank->grad.v.data() + (int64_t)k * n;
            for (int64_t i = 0; i < n; ++i) {
                gbp[i] += a * o->grad[i];
                dot += bp[i] * o->grad[i];
            }
            coeff->grad[k] += dot;
        }
    };
    return out;
}

}  // namespace pbd
