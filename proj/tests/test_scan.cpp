#define PBD_TESTUTIL_AUTODIFF
#include "pbd/scan.hpp"

#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace pbd;
using testutil::fd_check;

namespace {

// Independent oracle: recomputes the step sizes and coefficients with its own
// loops and runs the recurrence state-major instead of time-major.
Tensor oracle_scan(const Tensor& x, const SelectiveScanParams& p, int line_len) {
    int L = x.shape[0], C = x.shape[1], N = p.n_state;
    if (line_len <= 0) line_len = L;
    std::vector<double> delta(L * C), B(L * N), Cc(L * N);
    for (int t = 0; t < L; ++t) {
        for (int c = 0; c < C; ++c) {
            double pre = p.b_dt[c];
            for (int i = 0; i < C; ++i) pre += x[t * C + i] * p.w_dt[i * C + c];
            delta[t * C + c] = std::log1p(std::exp(-std::abs(pre))) + std::max(pre, 0.0);
        }
        for (int n = 0; n < N; ++n) {
            double bb = 0, cc = 0;
            for (int i = 0; i < C; ++i) {
                bb += x[t * C + i] * p.w_b[i * N + n];
                cc += x[t * C + i] * p.w_c[i * N + n];
            }
            B[t * N + n] = bb;
            Cc[t * N + n] = cc;
        }
    }
    Tensor y({L, C});
    for (int c = 0; c < C; ++c)
        for (int n = 0; n < N; ++n) {
            double A = -std::exp(p.a_log[c * N + n]);
            double h = 0;
            for (int t = 0; t < L; ++t) {
                if (t % line_len == 0) h = 0;
                double dl = delta[t * C + c];
                h = std::exp(dl * A) * h + dl * B[t * N + n] * x[t * C + c];
                y[t * C + c] += Cc[t * N + n] * h;
            }
        }
    for (int t = 0; t < L; ++t)
        for (int c = 0; c < C; ++c) y[t * C + c] += p.d[c] * x[t * C + c];
    return y;
}

SelectiveScanParams random_params(Rng& rng, int C, int N) {
    auto p = init_scan_params(C, N, rng);
    for (auto& t : p.a_log.v) t = rng.uniform(-1.0, 1.5);
    for (auto& t : p.d.v) t = rng.uniform(-1.0, 1.0);
    for (auto& t : p.b_dt.v) t = rng.uniform(-2.0, 1.0);
    return p;
}

Tensor random_seq(Rng& rng, int L, int C) {
    Tensor x({L, C});
    for (auto& t : x.v) t = rng.uniform(-2.0, 2.0);
    return x;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Tensor hflip_hwc(const Tensor& f) {
    int H = f.shape[0], W = f.shape[1], C = f.shape[2];
    Tensor g({H, W, C});
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c)
            for (int ch = 0; ch < C; ++ch)
                g[((int64_t)r * W + c) * C + ch] = f[((int64_t)r * W + (W - 1 - c)) * C + ch];
    return g;
}

}  // namespace

TEST(ScanFixed, TrivialExamples) {
    // memoryless identity: abar=0, bbar=1, c=1, d=0
    Tensor x({3, 1});
    x[0] = 1;
    x[1] = 2;
    x[2] = 3;
    std::vector<double> zero(3, 0.0), one(3, 1.0);
    auto y = scan_fixed(3, 1, 1, zero, one, one, {0.0}, x);
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(y[i], x[i]);
    // abar=0.5 geometric accumulation
    std::vector<double> half(3, 0.5);
    y = scan_fixed(3, 1, 1, half, one, one, {0.0}, x);
    EXPECT_DOUBLE_EQ(y[0], 1.0);
    EXPECT_DOUBLE_EQ(y[1], 2.5);
    EXPECT_DOUBLE_EQ(y[2], 4.25);
    // c=0 leaves only the skip path
    y = scan_fixed(3, 1, 1, half, one, zero, {2.0}, x);
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(y[i], 2.0 * x[i]);
}

TEST(ScanFixed, LinearInInputForFixedCoefficients) {
    Rng rng(21);
    int L = 12, C = 2, N = 3;
    std::vector<double> abar(L * C * N), bbar(L * C * N), cv(L * N), d{0.3, -0.7};
    for (auto& t : abar) t = rng.uniform(0.0, 0.99);
    for (auto& t : bbar) t = rng.uniform(-1.0, 1.0);
    for (auto& t : cv) t = rng.uniform(-1.0, 1.0);
    Tensor x = random_seq(rng, L, C);
    Tensor x3 = x;
    for (auto& t : x3.v) t *= 3.0;
    auto y = scan_fixed(L, C, N, abar, bbar, cv, d, x);
    auto y3 = scan_fixed(L, C, N, abar, bbar, cv, d, x3);
    for (int64_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y3[i], 3.0 * y[i], 1e-9);
}

TEST(Scan, MatchesOracleAcrossConfigs) {
    Rng rng(22);
    for (int trial = 0; trial < 60; ++trial) {
        int C = rng.uniform_int(1, 4), N = rng.uniform_int(1, 8);
        int L = rng.uniform_int(1, 64);
        auto p = random_params(rng, C, N);
        Tensor x = random_seq(rng, L, C);
        auto got = selective_scan_1d(x, p);
        auto want = oracle_scan(x, p, 0);
        EXPECT_LT(max_abs_diff(got, want), 1e-9) << "L=" << L << " C=" << C << " N=" << N;
        // segmented variant resets at line boundaries
        for (int ll : {1, 2, 4}) {
            if (L % ll) continue;
            EXPECT_LT(max_abs_diff(selective_scan_1d(x, p, ll), oracle_scan(x, p, ll)), 1e-9);
        }
    }
}

TEST(Scan, StabilityBoundAndFiniteness) {
    Rng rng(23);
    int L = 512, C = 3, N = 4;
    auto p = random_params(rng, C, N);
    Tensor x = random_seq(rng, L, C);
    auto y = selective_scan_1d(x, p);
    // bound computed from oracle intermediates: |h| <= max|dl*B*x| / (1 - max_abar)
    double max_in = 0, max_abar = 0, max_c = 0, max_x = 0, max_d = 0;
    for (double t : x.v) max_x = std::max(max_x, std::abs(t));
    for (double t : p.d.v) max_d = std::max(max_d, std::abs(t));
    for (int t = 0; t < L; ++t)
        for (int c = 0; c < C; ++c) {
            double pre = p.b_dt[c];
            for (int i = 0; i < C; ++i) pre += x[t * C + i] * p.w_dt[i * C + c];
            double dl = std::log1p(std::exp(-std::abs(pre))) + std::max(pre, 0.0);
            for (int n = 0; n < N; ++n) {
                double A = -std::exp(p.a_log[c * N + n]);
                max_abar = std::max(max_abar, std::exp(dl * A));
                double bb = 0, cc = 0;
                for (int i = 0; i < C; ++i) {
                    bb += x[t * C + i] * p.w_b[i * N + n];
                    cc += x[t * C + i] * p.w_c[i * N + n];
                }
                max_in = std::max(max_in, std::abs(dl * bb * x[t * C + c]));
                max_c = std::max(max_c, std::abs(cc));
            }
        }
    ASSERT_LT(max_abar, 1.0);
    double bound = N * max_c * max_in / (1.0 - max_abar) + max_d * max_x;
    for (double t : y.v) {
        EXPECT_TRUE(std::isfinite(t));
        EXPECT_LE(std::abs(t), bound + 1e-9);
    }
}

TEST(Scan, RejectsNonFiniteAndBadShapes) {
    Rng rng(24);
    auto p = random_params(rng, 2, 2);
    Tensor x = random_seq(rng, 4, 2);
    x[3] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(selective_scan_1d(x, p), Error);
    Tensor bad = random_seq(rng, 4, 3);
    EXPECT_THROW(selective_scan_1d(bad, p), Error);
    Tensor ok = random_seq(rng, 4, 2);
    EXPECT_THROW(selective_scan_1d(ok, p, 3), Error);  // 3 does not divide 4
}

TEST(Scan, BlockedMatchesSequential) {
    Rng rng(25);
    for (int trial = 0; trial < 10; ++trial) {
        int C = rng.uniform_int(1, 3), N = rng.uniform_int(1, 6), L = rng.uniform_int(4, 48);
        auto p = random_params(rng, C, N);
        Tensor x = random_seq(rng, L, C);
        auto ref = selective_scan_1d(x, p);
        for (int block : {1, 3, 7, L}) {
            auto got = selective_scan_blocked(x, p, block);
            EXPECT_LT(max_abs_diff(got, ref), 1e-6);
        }
        // segmented, block straddling line boundaries
        if (L % 4 == 0)
            EXPECT_LT(max_abs_diff(selective_scan_blocked(x, p, 3, 4),
                                   selective_scan_1d(x, p, 4)),
                      1e-6);
    }
}

TEST(Arrangements, BijectionAndLineStructure) {
    Rng rng(26);
    for (int trial = 0; trial < 20; ++trial) {
        int H = rng.uniform_int(1, 9), W = rng.uniform_int(1, 9);
        for (int dir = 0; dir < 4; ++dir) {
            auto a = make_arrangement(ScanDir(dir), H, W);
            ASSERT_EQ((int)a.flatten.size(), H * W);
            ASSERT_EQ((H * W) % a.line_len, 0);
            for (int t = 0; t < H * W; ++t) {
                EXPECT_EQ(a.inverse[a.flatten[t]], t);
                EXPECT_EQ(a.flatten[a.inverse[t]], t);
            }
        }
        // row-backward reverses within each row, keeps rows in order
        auto rb = make_arrangement(ScanDir::RowBwd, H, W);
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) EXPECT_EQ(rb.flatten[r * W + c], r * W + (W - 1 - c));
        // column scans walk one column per line
        auto cf = make_arrangement(ScanDir::ColFwd, H, W);
        EXPECT_EQ(cf.line_len, H);
        for (int c = 0; c < W; ++c)
            for (int r = 0; r < H; ++r) EXPECT_EQ(cf.flatten[c * H + r], r * W + c);
    }
}

TEST(Ss2d, OneByOneGridIsFourfoldSingleStep) {
    Rng rng(27);
    auto p = random_params(rng, 3, 2);
    Tensor f({1, 1, 3});
    for (auto& t : f.v) t = rng.uniform(-1.0, 1.0);
    std::array<SelectiveScanParams, 4> ps{p, p, p, p};
    auto out = ss2d(f, ps, true);
    Tensor seq({1, 3});
    seq.v = f.v;
    auto one = selective_scan_1d(seq, p);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(out[c], 4.0 * one[c], 1e-12);
}

TEST(Ss2d, NoMemoryLimitIsPointwise) {
    // huge a_log drives exp(dl*A) to 0: each step only sees its own input,
    // so the 2-d output collapses to 4*(C*dl*B + D) ⊙ x pointwise.
    Rng rng(28);
    auto p = random_params(rng, 2, 2);
    for (auto& t : p.a_log.v) t = 12.0;
    std::array<SelectiveScanParams, 4> ps{p, p, p, p};
    Tensor f({3, 4, 2});
    for (auto& t : f.v) t = rng.uniform(0.5, 2.0);
    auto out = ss2d(f, ps, true);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) {
            Tensor seq({1, 2});
            for (int ch = 0; ch < 2; ++ch) seq[ch] = f[((int64_t)r * 4 + c) * 2 + ch];
            auto y1 = selective_scan_1d(seq, p);
            for (int ch = 0; ch < 2; ++ch)
                EXPECT_NEAR(out[((int64_t)r * 4 + c) * 2 + ch], 4.0 * y1[ch], 1e-9);
        }
}

TEST(Ss2d, FlipEquivariantUnderSharedParams) {
    Rng rng(29);
    for (int trial = 0; trial < 8; ++trial) {
        int C = rng.uniform_int(1, 3);
        auto p = random_params(rng, C, rng.uniform_int(1, 4));
        std::array<SelectiveScanParams, 4> ps{p, p, p, p};
        Tensor f({8, 8, C});
        for (auto& t : f.v) t = rng.uniform(-2.0, 2.0);
        auto flipped_out = ss2d(hflip_hwc(f), ps, true);
        auto out_flipped = hflip_hwc(ss2d(f, ps, true));
        EXPECT_LT(max_abs_diff(flipped_out, out_flipped), 1e-9);
    }
}

TEST(Ss2d, PerDirectionParamsAndDeterminism) {
    Rng rng(30);
    std::array<SelectiveScanParams, 4> ps;
    for (auto& p : ps) p = random_params(rng, 2, 3);
    Tensor f({5, 7, 2});
    for (auto& t : f.v) t = rng.uniform(-1.0, 1.0);
    auto a = ss2d(f, ps, false);
    auto b = ss2d(f, ps, false);
    EXPECT_EQ(a.v, b.v);  // fixed reduction order, bitwise stable
    auto shared = ss2d(f, ps, true);
    EXPECT_GT(max_abs_diff(a, shared), 0.0);
}

TEST(Ss2d, AutodiffForwardMatchesNumeric) {
    Rng rng(31);
    std::array<SelectiveScanParams, 4> ps;
    for (auto& p : ps) p = random_params(rng, 2, 3);
    Tensor f({4, 5, 2});
    for (auto& t : f.v) t = rng.uniform(-1.0, 1.0);
    std::array<ScanParamVars, 4> vars;
    for (int i = 0; i < 4; ++i) vars[i] = scan_param_vars(ps[i]);
    for (bool share : {false, true}) {
        auto want = ss2d(f, ps, share);
        auto got = ss2d(constant(f), vars, share);
        EXPECT_LT(max_abs_diff(got->val, want), 1e-12);
    }
}

TEST(Scan, GradientsMatchFiniteDifferences) {
    Rng rng(32);
    for (int ll : {0, 3}) {
        auto p = random_params(rng, 2, 3);
        auto vars = scan_param_vars(p);
        Tensor xt = random_seq(rng, 6, 2);
        Var x = param(xt);
        Var m = testutil::random_param(rng, {6, 2});
        auto build = [&] { return mean_all(mul(selective_scan(x, vars, ll), m)); };
        double err = fd_check(
            build, {x, vars.a_log, vars.d, vars.w_dt, vars.b_dt, vars.w_b, vars.w_c});
        EXPECT_LT(err, 1e-4) << "line_len=" << ll;
    }
}

TEST(Ss2d, GradientsThroughGatherAndMerge) {
    Rng rng(33);
    auto p = random_params(rng, 2, 2);
    std::array<ScanParamVars, 4> vars;
    for (int i = 0; i < 4; ++i) vars[i] = scan_param_vars(p);
    Tensor f({3, 4, 2});
    for (auto& t : f.v) t = rng.uniform(-1.0, 1.0);
    Var x = param(f);
    Var m = testutil::random_param(rng, {3, 4, 2});
    auto build = [&] { return mean_all(mul(ss2d(x, vars, false), m)); };
    std::vector<Var> probe{x, vars[0].a_log, vars[1].w_b, vars[2].w_dt, vars[3].d};
    EXPECT_LT(fd_check(build, probe), 1e-4);
}
