#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "octseg/common.hpp"
#include "octseg/nn/graph.hpp"

using namespace octseg;
using namespace octseg::nn;

namespace {

void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
}

// Loop-based stride-1 same-padding convolution, written independently of the
// im2col path so the two can cross-check each other.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int k, int out_ch, bool relu) {
    const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const int pad = k / 2;
    Tensor out({N, H, W, out_ch});
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx)
                for (int f = 0; f < out_ch; ++f) {
                    double sum = b[f];
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = y + ky - pad, ix = xx + kx - pad;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            for (int c = 0; c < C; ++c)
                                sum += static_cast<double>(x.at(n, iy, ix, c)) *
                                       w[((ky * k + kx) * C + c) * static_cast<int64_t>(out_ch) + f];
                        }
                    out.at(n, y, xx, f) = relu ? std::max(0.0f, static_cast<float>(sum))
                                               : static_cast<float>(sum);
                }
    return out;
}

Tensor naive_tconv(const Tensor& x, const Tensor& w, const Tensor& b, int out_ch) {
    const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    Tensor out({N, 2 * H, 2 * W, out_ch});
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        for (int f = 0; f < out_ch; ++f) {
                            double sum = b[f];
                            for (int c = 0; c < C; ++c)
                                sum += static_cast<double>(x.at(n, y, xx, c)) *
                                       w[c * 4ll * out_ch + (dy * 2 + dx) * out_ch + f];
                            out.at(n, 2 * y + dy, 2 * xx + dx, f) = static_cast<float>(sum);
                        }
    return out;
}

void check_close(const Tensor& got, const Tensor& want, double abs_tol, double rel_tol) {
    REQUIRE(got.same_shape(want));
    double worst = 0.0;
    for (int64_t i = 0; i < got.size(); ++i) {
        const double diff = std::abs(static_cast<double>(got[i]) - want[i]);
        const double allowed = abs_tol + rel_tol * std::abs(static_cast<double>(want[i]));
        worst = std::max(worst, diff - allowed);
    }
    CHECK(worst <= 0.0);
}

}  // namespace

TEST_CASE("conv forward matches a naive loop") {
    for (int k : {1, 3, 5}) {
        for (bool relu : {false, true}) {
            Graph g;
            const int in = g.add_input("in", 3);
            const int cv = g.add_conv("cv", in, 4, k, relu);
            g.init_params(11);
            Rng rng(100 + k);
            fill_uniform(g.node(cv).b, rng, -0.5, 0.5);

            Tensor x({2, 5, 6, 3});
            fill_uniform(x, rng, -1.0, 1.0);
            Workspace ws;
            const Tensor& got = g.forward(x, ws);
            Tensor want = naive_conv(x, g.node(cv).w, g.node(cv).b, k, 4, relu);
            check_close(got, want, 1e-5, 1e-5);
        }
    }
}

TEST_CASE("conv matches the naive loop across the im2col chunk boundary") {
    // 1x96x96x32 with k=3: the packed rows exceed the 32 MB scratch cap, so
    // the GEMM runs in more than one chunk.
    Graph g;
    const int in = g.add_input("in", 32);
    const int cv = g.add_conv("cv", in, 4, 3, false);
    g.init_params(5);
    Rng rng(9);
    fill_uniform(g.node(cv).b, rng, -0.2, 0.2);
    Tensor x({1, 96, 96, 32});
    fill_uniform(x, rng, -1.0, 1.0);
    Workspace ws;
    const Tensor& got = g.forward(x, ws);
    Tensor want = naive_conv(x, g.node(cv).w, g.node(cv).b, 3, 4, false);
    check_close(got, want, 1e-4, 1e-4);
}

TEST_CASE("transposed conv forward matches a naive loop") {
    Graph g;
    const int in = g.add_input("in", 3);
    const int tc = g.add_tconv("tc", in, 5);
    g.init_params(21);
    Rng rng(77);
    fill_uniform(g.node(tc).b, rng, -0.5, 0.5);

    Tensor x({2, 3, 4, 3});
    fill_uniform(x, rng, -1.0, 1.0);
    Workspace ws;
    const Tensor& got = g.forward(x, ws);
    CHECK(got.dim(1) == 6);
    CHECK(got.dim(2) == 8);
    Tensor want = naive_tconv(x, g.node(tc).w, g.node(tc).b, 5);
    check_close(got, want, 1e-5, 1e-5);
}

TEST_CASE("max pool picks the window max and records first-max indices") {
    Graph g;
    const int in = g.add_input("in", 1);
    g.add_maxpool("p", in);
    g.init_params(1);

    Tensor x({1, 2, 2, 1});
    x[0] = 1.0f; x[1] = 3.0f; x[2] = 2.0f; x[3] = 0.0f;
    Workspace ws;
    const Tensor& out = g.forward(x, ws);
    CHECK(out.size() == 1);
    CHECK(out[0] == 3.0f);
    CHECK(ws.states[1].indices[0] == 1);  // flat y*W+x of the max

    x.fill(5.0f);  // all equal: the first cell wins
    const Tensor& out2 = g.forward(x, ws);
    CHECK(out2[0] == 5.0f);
    CHECK(ws.states[1].indices[0] == 0);

    Tensor odd({1, 3, 3, 1});
    CHECK_THROWS_AS(g.forward(odd, ws), ShapeError);
}

TEST_CASE("unpool scatters pooled values back to their argmax positions") {
    Graph g;
    const int in = g.add_input("in", 3);
    const int p = g.add_maxpool("p", in);
    g.add_maxunpool("u", p, p);
    g.init_params(1);

    Rng rng(123);
    Tensor x({2, 4, 6, 3});
    fill_uniform(x, rng, -1.0, 1.0);
    Workspace ws;
    const Tensor& unpooled = g.forward(x, ws);
    REQUIRE(unpooled.same_shape(x));

    const Tensor& pooled = ws.states[1].out;
    const auto& idx = ws.states[1].indices;

    // Every pooled value sits at its recorded coordinate; everything else is 0.
    int64_t nonzero = 0;
    for (int64_t i = 0; i < unpooled.size(); ++i)
        if (unpooled[i] != 0.0f) ++nonzero;
    CHECK(nonzero <= pooled.size());

    for (int64_t i = 0; i < pooled.size(); ++i) {
        const int c = static_cast<int>(i % 3);
        const int64_t pix = i / 3;
        const int n = static_cast<int>(pix / (2 * 3));
        const int32_t flat = idx[static_cast<size_t>(i)];
        CHECK(unpooled[((static_cast<int64_t>(n) * 4) * 6 + flat) * 3 + c] == pooled[i]);
    }

    // Pooling the unpooled tensor again reproduces the pooled map exactly:
    // maxima are back at their argmax positions and zeros cannot win against
    // them unless the max itself was negative - use positive inputs to keep
    // the round trip exact.
    Tensor xp({2, 4, 6, 3});
    fill_uniform(xp, rng, 0.1, 1.0);
    g.forward(xp, ws);
    Tensor pooled1 = ws.states[1].out;
    Tensor un = ws.states[2].out;
    Workspace ws2;
    Graph g2;
    const int in2 = g2.add_input("in", 3);
    g2.add_maxpool("p", in2);
    g2.init_params(1);
    const Tensor& pooled2 = g2.forward(un, ws2);
    check_close(pooled2, pooled1, 0.0, 0.0);
}

TEST_CASE("softmax rows sum to one and resist large logits") {
    Graph g;
    const int in = g.add_input("in", 6);
    g.add_softmax("sm", in);
    g.init_params(1);

    Rng rng(5);
    Tensor x({2, 3, 3, 6});
    fill_uniform(x, rng, -4.0, 4.0);
    Workspace ws;
    const Tensor& y = g.forward(x, ws);
    for (int64_t p = 0; p < y.size() / 6; ++p) {
        double s = 0.0;
        for (int c = 0; c < 6; ++c) {
            const float v = y[p * 6 + c];
            CHECK(v >= 0.0f);
            s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
    }

    // Shift invariance far outside exp() range. Adding 1000 rounds the float
    // logits themselves by ~1e-5 (ulp at 1000 is 6e-5), so allow that much.
    Tensor xs = x;
    for (int64_t i = 0; i < xs.size(); ++i) xs[i] += 1000.0f;
    Workspace ws2;
    const Tensor& y2 = g.forward(xs, ws2);
    check_close(y2, y, 5e-5, 1e-4);
}

TEST_CASE("graph construction rejects bad wiring") {
    Graph g;
    const int in = g.add_input("in", 2);
    g.add_conv("c", in, 3, 3, true);
    CHECK_THROWS_AS(g.add_conv("c", in, 3, 3, true), ConfigError);  // duplicate name
    CHECK_THROWS_AS(g.add_maxunpool("u", in, in), ConfigError);     // not a pool node
    CHECK(g.node_id("missing") == -1);
    CHECK(g.node_id("c") == 1);
}

TEST_CASE("forward validates input shape") {
    Graph g;
    const int in = g.add_input("in", 2);
    g.add_conv("c", in, 3, 3, true);
    g.init_params(3);
    Workspace ws;
    Tensor wrong_ch({1, 4, 4, 3});
    CHECK_THROWS_AS(g.forward(wrong_ch, ws), ShapeError);
    Tensor rank3({4, 4, 2});
    CHECK_THROWS_AS(g.forward(rank3, ws), ShapeError);
}

TEST_CASE("glorot init fills the expected band and is seed-deterministic") {
    Graph g;
    const int in = g.add_input("in", 8);
    const int cv = g.add_conv("c", in, 16, 3, true);
    g.init_params(42);

    const double limit = std::sqrt(6.0 / (9 * 8 + 9 * 16));
    float maxabs = 0.0f;
    for (int64_t i = 0; i < g.node(cv).w.size(); ++i) {
        CHECK(std::abs(g.node(cv).w[i]) <= limit);
        maxabs = std::max(maxabs, std::abs(g.node(cv).w[i]));
    }
    CHECK(maxabs > 0.8 * limit);  // draws actually spread over the band
    for (int64_t i = 0; i < g.node(cv).b.size(); ++i) CHECK(g.node(cv).b[i] == 0.0f);

    Graph g2;
    const int in2 = g2.add_input("in", 8);
    const int cv2 = g2.add_conv("c", in2, 16, 3, true);
    g2.init_params(42);
    for (int64_t i = 0; i < g.node(cv).w.size(); ++i) CHECK(g.node(cv).w[i] == g2.node(cv2).w[i]);

    Graph g3;
    const int in3 = g3.add_input("in", 8);
    const int cv3 = g3.add_conv("c", in3, 16, 3, true);
    g3.init_params(43);
    int64_t same = 0;
    for (int64_t i = 0; i < g.node(cv).w.size(); ++i)
        if (g.node(cv).w[i] == g3.node(cv3).w[i]) ++same;
    CHECK(same < g.node(cv).w.size() / 10);
}

// ---------------------------------------------------------------------------
// Full backward check: a tiny graph exercising every op is re-implemented in
// double precision here, and analytic gradients are compared against central
// finite differences of that reference.

namespace {

struct TinyRef {
    static constexpr int H = 4, W = 4, C0 = 3, C1 = 4, F = 5;
    std::vector<double> c1w, c1b, tw, tb, c2w, c2b, R;

    static std::vector<double> to_d(const Tensor& t) {
        std::vector<double> v(static_cast<size_t>(t.size()));
        for (int64_t i = 0; i < t.size(); ++i) v[static_cast<size_t>(i)] = t[i];
        return v;
    }

    double forward(const std::vector<double>& x) const {
        auto at = [](const std::vector<double>& v, int y, int xx, int c, int C, int w) {
            return v[static_cast<size_t>((y * w + xx) * C + c)];
        };
        // conv 3x3 same + relu
        std::vector<double> a1(H * W * C1, 0.0);
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx)
                for (int f = 0; f < C1; ++f) {
                    double s = c1b[static_cast<size_t>(f)];
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int iy = y + ky - 1, ix = xx + kx - 1;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            for (int c = 0; c < C0; ++c)
                                s += at(x, iy, ix, c, C0, W) *
                                     c1w[static_cast<size_t>(((ky * 3 + kx) * C0 + c) * C1 + f)];
                        }
                    a1[static_cast<size_t>((y * W + xx) * C1 + f)] = std::max(0.0, s);
                }
        // 2x2 max pool with first-max ties
        const int PH = H / 2, PW = W / 2;
        std::vector<double> p(PH * PW * C1);
        std::vector<int> pidx(PH * PW * C1);
        for (int oy = 0; oy < PH; ++oy)
            for (int ox = 0; ox < PW; ++ox)
                for (int c = 0; c < C1; ++c) {
                    double best = -std::numeric_limits<double>::infinity();
                    int bi = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const double v = at(a1, 2 * oy + dy, 2 * ox + dx, c, C1, W);
                            if (v > best) {
                                best = v;
                                bi = (2 * oy + dy) * W + (2 * ox + dx);
                            }
                        }
                    p[static_cast<size_t>((oy * PW + ox) * C1 + c)] = best;
                    pidx[static_cast<size_t>((oy * PW + ox) * C1 + c)] = bi;
                }
        // transposed conv 2x2 stride 2, C1 -> C1
        std::vector<double> t(H * W * C1, 0.0);
        for (int y = 0; y < PH; ++y)
            for (int xx = 0; xx < PW; ++xx)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        for (int f = 0; f < C1; ++f) {
                            double s = tb[static_cast<size_t>(f)];
                            for (int c = 0; c < C1; ++c)
                                s += at(p, y, xx, c, C1, PW) *
                                     tw[static_cast<size_t>(c * 4 * C1 + (dy * 2 + dx) * C1 + f)];
                            t[static_cast<size_t>(((2 * y + dy) * W + 2 * xx + dx) * C1 + f)] = s;
                        }
        // unpool with the recorded indices
        std::vector<double> u(H * W * C1, 0.0);
        for (size_t i = 0; i < p.size(); ++i) {
            const int c = static_cast<int>(i % C1);
            const int flat = pidx[i];
            u[static_cast<size_t>(flat * C1 + c)] = p[i];
        }
        // concat(t, u) then 1x1 conv to F channels, then softmax, then J
        double J = 0.0;
        for (int px = 0; px < H * W; ++px) {
            double z[F];
            for (int g = 0; g < F; ++g) {
                double s = c2b[static_cast<size_t>(g)];
                for (int c = 0; c < C1; ++c)
                    s += t[static_cast<size_t>(px * C1 + c)] * c2w[static_cast<size_t>(c * F + g)];
                for (int c = 0; c < C1; ++c)
                    s += u[static_cast<size_t>(px * C1 + c)] * c2w[static_cast<size_t>((C1 + c) * F + g)];
                z[g] = s;
            }
            double zmax = z[0];
            for (int g = 1; g < F; ++g) zmax = std::max(zmax, z[g]);
            double denom = 0.0;
            for (int g = 0; g < F; ++g) denom += std::exp(z[g] - zmax);
            for (int g = 0; g < F; ++g)
                J += R[static_cast<size_t>(px * F + g)] * (std::exp(z[g] - zmax) / denom);
        }
        return J;
    }
};

// Central difference with the realized step, so float-storage rounding of the
// perturbed value cannot bias the estimate.
double fd(const std::function<double(double)>& f, double x0) {
    const double h = std::max(1e-6, 1e-6 * std::abs(x0));
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("backward matches double-precision finite differences on every op") {
    Graph g;
    const int in = g.add_input("in", TinyRef::C0);
    const int c1 = g.add_conv("c1", in, TinyRef::C1, 3, true);
    const int p = g.add_maxpool("p", c1);
    const int t = g.add_tconv("t", p, TinyRef::C1);
    const int u = g.add_maxunpool("u", p, p);
    const int cat = g.add_concat("cat", t, u);
    const int c2 = g.add_conv("c2", cat, TinyRef::F, 1, false);
    const int sm = g.add_softmax("sm", c2);
    g.init_params(2024);

    Rng rng(31337);
    fill_uniform(g.node(c1).b, rng, -0.3, 0.3);
    fill_uniform(g.node(t).b, rng, -0.3, 0.3);
    fill_uniform(g.node(c2).b, rng, -0.3, 0.3);

    Tensor x({1, TinyRef::H, TinyRef::W, TinyRef::C0});
    fill_uniform(x, rng, -1.0, 1.0);
    Tensor R({1, TinyRef::H, TinyRef::W, TinyRef::F});
    fill_uniform(R, rng, -1.0, 1.0);

    TinyRef ref;
    ref.c1w = TinyRef::to_d(g.node(c1).w);
    ref.c1b = TinyRef::to_d(g.node(c1).b);
    ref.tw = TinyRef::to_d(g.node(t).w);
    ref.tb = TinyRef::to_d(g.node(t).b);
    ref.c2w = TinyRef::to_d(g.node(c2).w);
    ref.c2b = TinyRef::to_d(g.node(c2).b);
    ref.R = TinyRef::to_d(R);
    std::vector<double> xd = TinyRef::to_d(x);

    // analytic: J = sum(R * softmax_out), so the output seed is R itself
    Workspace ws;
    const Tensor& out = g.forward(x, ws);
    double Jf = 0.0;
    for (int64_t i = 0; i < out.size(); ++i) Jf += static_cast<double>(R[i]) * out[i];
    CHECK(std::abs(Jf - ref.forward(xd)) < 1e-5);

    ParamGrads pg = g.make_param_grads();
    g.backward(R, sm, ws, 0, &pg);

    auto check_grad = [&](double analytic, std::vector<double>* vec, size_t i, const char* what) {
        const double x0 = (*vec)[i];
        const double want = fd(
            [&](double v) {
                (*vec)[i] = v;
                const double J = ref.forward(xd);
                (*vec)[i] = x0;
                return J;
            },
            x0);
        const double tol = 2e-5 + 2e-3 * std::abs(want);
        INFO(what << "[" << i << "]: analytic " << analytic << " vs fd " << want);
        CHECK(std::abs(analytic - want) <= tol);
    };

    for (size_t i = 0; i < xd.size(); ++i)
        check_grad(ws.states[static_cast<size_t>(in)].grad[static_cast<int64_t>(i)], &xd, i, "x");
    for (size_t i = 0; i < ref.c1w.size(); ++i)
        check_grad(pg[static_cast<size_t>(c1)].gw[static_cast<int64_t>(i)], &ref.c1w, i, "c1.w");
    for (size_t i = 0; i < ref.c1b.size(); ++i)
        check_grad(pg[static_cast<size_t>(c1)].gb[static_cast<int64_t>(i)], &ref.c1b, i, "c1.b");
    for (size_t i = 0; i < ref.tw.size(); ++i)
        check_grad(pg[static_cast<size_t>(t)].gw[static_cast<int64_t>(i)], &ref.tw, i, "t.w");
    for (size_t i = 0; i < ref.tb.size(); ++i)
        check_grad(pg[static_cast<size_t>(t)].gb[static_cast<int64_t>(i)], &ref.tb, i, "t.b");
    for (size_t i = 0; i < ref.c2w.size(); ++i)
        check_grad(pg[static_cast<size_t>(c2)].gw[static_cast<int64_t>(i)], &ref.c2w, i, "c2.w");
    for (size_t i = 0; i < ref.c2b.size(); ++i)
        check_grad(pg[static_cast<size_t>(c2)].gb[static_cast<int64_t>(i)], &ref.c2b, i, "c2.b");
}

TEST_CASE("backward honors from/stop restrictions") {
    Graph g;
    const int in = g.add_input("in", 2);
    const int a = g.add_conv("a", in, 3, 3, true);
    const int b = g.add_conv("b", a, 3, 3, true);
    const int c = g.add_conv("c", b, 3, 3, false);
    g.init_params(7);

    Rng rng(12);
    Tensor x({1, 4, 4, 2});
    fill_uniform(x, rng, -1.0, 1.0);
    Workspace ws;
    g.forward(x, ws);
    Tensor seed(ws.states[static_cast<size_t>(c)].out.shape());
    fill_uniform(seed, rng, -1.0, 1.0);

    // full backward
    g.backward(seed, c, ws, 0, nullptr);
    Tensor grad_a_full = ws.states[static_cast<size_t>(a)].grad;
    Tensor grad_in_full = ws.states[static_cast<size_t>(in)].grad;

    // stopping at `a` leaves grad(a) identical but never touches grad(in)
    Workspace ws2;
    g.forward(x, ws2);
    g.backward(seed, c, ws2, a, nullptr);
    check_close(ws2.states[static_cast<size_t>(a)].grad, grad_a_full, 0.0, 0.0);
    for (int64_t i = 0; i < grad_in_full.size(); ++i)
        CHECK(ws2.states[static_cast<size_t>(in)].grad[i] == 0.0f);

    // from == stop hands the seed straight back
    Workspace ws3;
    g.forward(x, ws3);
    g.backward(seed, b, ws3, b, nullptr);
    check_close(ws3.states[static_cast<size_t>(b)].grad, seed, 0.0, 0.0);

    Tensor bad({1, 2, 2, 3});
    CHECK_THROWS_AS(g.backward(bad, c, ws3, 0, nullptr), ShapeError);
}

TEST_CASE("workspace can be reused across batch sizes") {
    Graph g;
    const int in = g.add_input("in", 2);
    g.add_conv("a", in, 3, 3, true);
    g.init_params(7);
    Rng rng(3);

    Workspace ws;
    Tensor x1({2, 4, 4, 2});
    fill_uniform(x1, rng, -1.0, 1.0);
    Tensor out1 = g.forward(x1, ws);

    Tensor x2({1, 6, 6, 2});
    fill_uniform(x2, rng, -1.0, 1.0);
    g.forward(x2, ws);

    Workspace fresh;
    const Tensor& again = g.forward(x1, fresh);
    check_close(again, out1, 0.0, 0.0);
}
