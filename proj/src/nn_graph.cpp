#include "octseg/nn/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace octseg::nn {

namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

// im2col scratch is capped at ~32 MB; convolutions run in row chunks.
constexpr int64_t kChunkBytes = 32LL * 1024 * 1024;

int rows_per_chunk(int width, int patch) {
    int64_t per_row = static_cast<int64_t>(width) * patch * 4;
    int rows = static_cast<int>(std::max<int64_t>(1, kChunkBytes / std::max<int64_t>(per_row, 1)));
    return rows;
}

// Fills `col` with im2col rows for flattened image rows [r0, r1).
// Row r maps to (n = r / H, y = r % H); each output pixel contributes a
// kh*kw*C patch with zero padding outside the image.
void im2col_rows(const Tensor& x, int kh, int kw, int r0, int r1, float* col) {
    const int H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const int ph = kh / 2, pw = kw / 2;
    const int patch = kh * kw * C;
    const float* src = x.data();
    for (int r = r0; r < r1; ++r) {
        const int n = r / H, y = r % H;
        float* row = col + static_cast<int64_t>(r - r0) * W * patch;
        for (int xx = 0; xx < W; ++xx) {
            float* dst = row + static_cast<int64_t>(xx) * patch;
            for (int ky = 0; ky < kh; ++ky) {
                const int sy = y + ky - ph;
                if (sy < 0 || sy >= H) {
                    std::memset(dst, 0, sizeof(float) * static_cast<size_t>(kw) * C);
                    dst += kw * C;
                    continue;
                }
                const float* plane = src + ((static_cast<int64_t>(n) * H + sy) * W) * C;
                for (int kx = 0; kx < kw; ++kx) {
                    const int sx = xx + kx - pw;
                    if (sx < 0 || sx >= W) {
                        std::memset(dst, 0, sizeof(float) * C);
                    } else {
                        std::memcpy(dst, plane + static_cast<int64_t>(sx) * C, sizeof(float) * C);
                    }
                    dst += C;
                }
            }
        }
    }
}

// Scatter-add of col-form gradients back into image layout (adjoint of im2col).
void col2im_rows(float* dx, const std::vector<int>& xshape, int kh, int kw, int r0, int r1,
                 const float* col) {
    const int H = xshape[1], W = xshape[2], C = xshape[3];
    const int ph = kh / 2, pw = kw / 2;
    const int patch = kh * kw * C;
    for (int r = r0; r < r1; ++r) {
        const int n = r / H, y = r % H;
        const float* row = col + static_cast<int64_t>(r - r0) * W * patch;
        for (int xx = 0; xx < W; ++xx) {
            const float* srcp = row + static_cast<int64_t>(xx) * patch;
            for (int ky = 0; ky < kh; ++ky) {
                const int sy = y + ky - ph;
                if (sy < 0 || sy >= H) {
                    srcp += kw * C;
                    continue;
                }
                float* plane = dx + ((static_cast<int64_t>(n) * H + sy) * W) * C;
                for (int kx = 0; kx < kw; ++kx) {
                    const int sx = xx + kx - pw;
                    if (sx >= 0 && sx < W) {
                        float* d = plane + static_cast<int64_t>(sx) * C;
                        for (int c = 0; c < C; ++c) d[c] += srcp[c];
                    }
                    srcp += C;
                }
            }
        }
    }
}

void conv_forward(const Node& nd, const Tensor& x, Tensor& out) {
    const int N = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int F = nd.out_ch, patch = nd.kh * nd.kw * nd.in_ch;
    out = Tensor({N, H, W, F});
    CMapRM wmat(nd.w.data(), patch, F);
    const int total_rows = N * H;
    const int chunk = std::min(total_rows, rows_per_chunk(W, patch));
    std::vector<float> col(static_cast<size_t>(chunk) * W * patch);
    for (int r0 = 0; r0 < total_rows; r0 += chunk) {
        const int r1 = std::min(total_rows, r0 + chunk);
        im2col_rows(x, nd.kh, nd.kw, r0, r1, col.data());
        const int m = (r1 - r0) * W;
        MapRM omat(out.data() + static_cast<int64_t>(r0) * W * F, m, F);
        CMapRM cmat(col.data(), m, patch);
        omat.noalias() = cmat * wmat;
        omat.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(nd.b.data(), F);
    }
    if (nd.relu) {
        float* p = out.data();
        const int64_t n = out.size();
        for (int64_t i = 0; i < n; ++i) p[i] = p[i] > 0.0f ? p[i] : 0.0f;
    }
}

void conv_backward(const Node& nd, const Tensor& x, const Tensor& out, const Tensor& gout,
                   Tensor& gx, ParamGrad* pg) {
    const int N = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int F = nd.out_ch, patch = nd.kh * nd.kw * nd.in_ch;

    // ReLU mask: out stores the post-activation value.
    Tensor dz = gout;
    if (nd.relu) {
        float* d = dz.data();
        const float* o = out.data();
        const int64_t n = dz.size();
        for (int64_t i = 0; i < n; ++i)
            if (o[i] <= 0.0f) d[i] = 0.0f;
    }

    CMapRM wmat(nd.w.data(), patch, F);
    const int total_rows = N * H;
    const int chunk = std::min(total_rows, rows_per_chunk(W, patch));
    std::vector<float> col(static_cast<size_t>(chunk) * W * patch);
    for (int r0 = 0; r0 < total_rows; r0 += chunk) {
        const int r1 = std::min(total_rows, r0 + chunk);
        const int m = (r1 - r0) * W;
        CMapRM dzmat(dz.data() + static_cast<int64_t>(r0) * W * F, m, F);
        if (pg) {
            im2col_rows(x, nd.kh, nd.kw, r0, r1, col.data());
            CMapRM cmat(col.data(), m, patch);
            MapRM gw(pg->gw.data(), patch, F);
            gw.noalias() += cmat.transpose() * dzmat;
        }
        // dX chunk: (m x patch) = dZ * W^T, then scatter-add
        MapRM cmat(col.data(), m, patch);
        cmat.noalias() = dzmat * wmat.transpose();
        col2im_rows(gx.data(), x.shape(), nd.kh, nd.kw, r0, r1, col.data());
    }
    if (pg) {
        Eigen::Map<Eigen::RowVectorXf> gb(pg->gb.data(), F);
        CMapRM dzall(dz.data(), total_rows * W, F);
        gb += dzall.colwise().sum();
    }
}

void tconv_forward(const Node& nd, const Tensor& x, Tensor& out) {
    const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = nd.in_ch, F = nd.out_ch;
    out = Tensor({N, 2 * H, 2 * W, F});
    const int64_t m = static_cast<int64_t>(N) * H * W;
    CMapRM xmat(x.data(), m, C);
    CMapRM wmat(nd.w.data(), C, 4 * F);
    MatRM y4(m, 4 * F);
    y4.noalias() = xmat * wmat;
    float* op = out.data();
    const float* bp = nd.b.data();
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                const float* src = y4.data() + ((static_cast<int64_t>(n) * H + y) * W + xx) * 4 * F;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        float* dst =
                            op + (((static_cast<int64_t>(n) * 2 * H + 2 * y + dy) * 2 * W) + 2 * xx + dx) * F;
                        const float* s = src + (dy * 2 + dx) * F;
                        for (int f = 0; f < F; ++f) dst[f] = s[f] + bp[f];
                    }
            }
}

void tconv_backward(const Node& nd, const Tensor& x, const Tensor& gout, Tensor& gx, ParamGrad* pg) {
    const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = nd.in_ch, F = nd.out_ch;
    const int64_t m = static_cast<int64_t>(N) * H * W;
    MatRM g4(m, 4 * F);
    const float* gp = gout.data();
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                float* dst = g4.data() + ((static_cast<int64_t>(n) * H + y) * W + xx) * 4 * F;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const float* src =
                            gp + (((static_cast<int64_t>(n) * 2 * H + 2 * y + dy) * 2 * W) + 2 * xx + dx) * F;
                        std::memcpy(dst + (dy * 2 + dx) * F, src, sizeof(float) * F);
                    }
            }
    CMapRM wmat(nd.w.data(), C, 4 * F);
    MapRM gxmat(gx.data(), m, C);
    gxmat.noalias() += g4 * wmat.transpose();
    if (pg) {
        CMapRM xmat(x.data(), m, C);
        MapRM gw(pg->gw.data(), C, 4 * F);
        gw.noalias() += xmat.transpose() * g4;
        Eigen::RowVectorXf colsum = g4.colwise().sum();
        for (int q = 0; q < 4; ++q)
            for (int f = 0; f < F; ++f) pg->gb[f] += colsum[q * F + f];
    }
}

void maxpool_forward(const Tensor& x, Tensor& out, std::vector<int32_t>& idx) {
    const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        throw ShapeError("max-pool input must have even spatial dims, got " + x.shape_str());
    const int OH = H / 2, OW = W / 2;
    out = Tensor({N, OH, OW, C});
    idx.assign(static_cast<size_t>(out.size()), 0);
    const float* src = x.data();
    float* dst = out.data();
    for (int n = 0; n < N; ++n)
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                const int64_t obase = ((static_cast<int64_t>(n) * OH + oy) * OW + ox) * C;
                for (int c = 0; c < C; ++c) {
                    float best = -std::numeric_limits<float>::infinity();
                    int32_t bi = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const int y = 2 * oy + dy, xx = 2 * ox + dx;
                            const float v = src[((static_cast<int64_t>(n) * H + y) * W + xx) * C + c];
                            if (v > best) {  // first max wins on ties
                                best = v;
                                bi = y * W + xx;
                            }
                        }
                    dst[obase + c] = best;
                    idx[static_cast<size_t>(obase + c)] = bi;
                }
            }
}

void maxpool_backward(const Tensor& gout, const std::vector<int32_t>& idx, Tensor& gx) {
    const int OH = gout.dim(1), OW = gout.dim(2), C = gout.dim(3);
    const int W = gx.dim(2);
    const float* g = gout.data();
    float* dst = gx.data();
    const int64_t total = gout.size();
    for (int64_t i = 0; i < total; ++i) {
        const int c = static_cast<int>(i % C);
        const int64_t pix = i / C;
        const int n = static_cast<int>(pix / (static_cast<int64_t>(OH) * OW));
        const int32_t flat = idx[static_cast<size_t>(i)];
        dst[((static_cast<int64_t>(n) * gx.dim(1)) * W + flat) * C + c] += g[i];
    }
}

void maxunpool_forward(const Tensor& x, const std::vector<int32_t>& idx, Tensor& out) {
    const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    out = Tensor({N, 2 * H, 2 * W, C});
    const float* src = x.data();
    float* dst = out.data();
    const int64_t total = x.size();
    const int OW = 2 * W;
    for (int64_t i = 0; i < total; ++i) {
        const int c = static_cast<int>(i % C);
        const int64_t pix = i / C;
        const int n = static_cast<int>(pix / (static_cast<int64_t>(H) * W));
        const int32_t flat = idx[static_cast<size_t>(i)];
        dst[((static_cast<int64_t>(n) * 2 * H) * OW + flat) * C + c] = src[i];
    }
}

void maxunpool_backward(const Tensor& gout, const std::vector<int32_t>& idx, Tensor& gx) {
    const int C = gx.dim(3), H = gx.dim(1), W = gx.dim(2);
    const float* g = gout.data();
    float* dst = gx.data();
    const int64_t total = gx.size();
    const int OW = 2 * W;
    for (int64_t i = 0; i < total; ++i) {
        const int c = static_cast<int>(i % C);
        const int64_t pix = i / C;
        const int n = static_cast<int>(pix / (static_cast<int64_t>(H) * W));
        const int32_t flat = idx[static_cast<size_t>(i)];
        dst[i] += g[((static_cast<int64_t>(n) * 2 * H) * OW + flat) * C + c];
    }
}

void softmax_forward(const Tensor& x, Tensor& out) {
    out = Tensor(x.shape());
    const int C = x.dim(x.rank() - 1);
    const int64_t pixels = x.size() / C;
    const float* src = x.data();
    float* dst = out.data();
    for (int64_t p = 0; p < pixels; ++p) {
        const float* xi = src + p * C;
        float* yi = dst + p * C;
        float mx = xi[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, xi[c]);
        float sum = 0.0f;
        for (int c = 0; c < C; ++c) {
            yi[c] = std::exp(xi[c] - mx);
            sum += yi[c];
        }
        const float inv = 1.0f / sum;
        for (int c = 0; c < C; ++c) yi[c] *= inv;
    }
}

void softmax_backward(const Tensor& y, const Tensor& gout, Tensor& gx) {
    const int C = y.dim(y.rank() - 1);
    const int64_t pixels = y.size() / C;
    const float* yp = y.data();
    const float* gp = gout.data();
    float* dst = gx.data();
    for (int64_t p = 0; p < pixels; ++p) {
        const float* yi = yp + p * C;
        const float* gi = gp + p * C;
        float dot = 0.0f;
        for (int c = 0; c < C; ++c) dot += gi[c] * yi[c];
        float* di = dst + p * C;
        for (int c = 0; c < C; ++c) di[c] += yi[c] * (gi[c] - dot);
    }
}

}  // namespace

const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Conv: return "conv2d";
        case Op::TConv: return "conv2d_transpose";
        case Op::MaxPool: return "max_pooling2d";
        case Op::MaxUnpool: return "max_unpooling2d";
        case Op::Concat: return "concatenate";
        case Op::Softmax: return "softmax";
    }
    return "?";
}

void Workspace::clear_grads() {
    for (auto& s : states) s.grad = Tensor();
}

int Graph::add_node(Node n) {
    if (by_name_.count(n.name)) throw ConfigError("duplicate layer name: " + n.name);
    const int id = static_cast<int>(nodes_.size());
    by_name_[n.name] = id;
    nodes_.push_back(std::move(n));
    return id;
}

int Graph::add_input(const std::string& name, int channels) {
    Node n;
    n.op = Op::Input;
    n.name = name;
    n.out_ch = channels;
    return add_node(std::move(n));
}

int Graph::add_conv(const std::string& name, int input, int out_ch, int kernel, bool relu) {
    Node n;
    n.op = Op::Conv;
    n.name = name;
    n.in0 = input;
    n.kh = n.kw = kernel;
    n.in_ch = nodes_[static_cast<size_t>(input)].out_ch;
    n.out_ch = out_ch;
    n.relu = relu;
    n.w = Tensor({kernel * kernel * n.in_ch, out_ch});
    n.b = Tensor({out_ch});
    return add_node(std::move(n));
}

int Graph::add_tconv(const std::string& name, int input, int out_ch) {
    Node n;
    n.op = Op::TConv;
    n.name = name;
    n.in0 = input;
    n.kh = n.kw = 2;
    n.in_ch = nodes_[static_cast<size_t>(input)].out_ch;
    n.out_ch = out_ch;
    n.w = Tensor({n.in_ch, 4 * out_ch});
    n.b = Tensor({out_ch});
    return add_node(std::move(n));
}

int Graph::add_maxpool(const std::string& name, int input) {
    Node n;
    n.op = Op::MaxPool;
    n.name = name;
    n.in0 = input;
    n.in_ch = n.out_ch = nodes_[static_cast<size_t>(input)].out_ch;
    return add_node(std::move(n));
}

int Graph::add_maxunpool(const std::string& name, int input, int pool_node) {
    if (nodes_[static_cast<size_t>(pool_node)].op != Op::MaxPool)
        throw ConfigError("max-unpool must reference a max-pool node");
    Node n;
    n.op = Op::MaxUnpool;
    n.name = name;
    n.in0 = input;
    n.in1 = pool_node;
    n.in_ch = n.out_ch = nodes_[static_cast<size_t>(input)].out_ch;
    return add_node(std::move(n));
}

int Graph::add_concat(const std::string& name, int a, int b) {
    Node n;
    n.op = Op::Concat;
    n.name = name;
    n.in0 = a;
    n.in1 = b;
    n.in_ch = nodes_[static_cast<size_t>(a)].out_ch;
    n.out_ch = nodes_[static_cast<size_t>(a)].out_ch + nodes_[static_cast<size_t>(b)].out_ch;
    return add_node(std::move(n));
}

int Graph::add_softmax(const std::string& name, int input) {
    Node n;
    n.op = Op::Softmax;
    n.name = name;
    n.in0 = input;
    n.in_ch = n.out_ch = nodes_[static_cast<size_t>(input)].out_ch;
    return add_node(std::move(n));
}

void Graph::init_params(uint64_t seed) {
    Rng rng(seed);
    for (auto& n : nodes_) {
        if (!n.has_params()) continue;
        const double fan_in = static_cast<double>(n.kh) * n.kw * n.in_ch;
        const double fan_out = static_cast<double>(n.kh) * n.kw * n.out_ch;
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        float* w = n.w.data();
        const int64_t sz = n.w.size();
        for (int64_t i = 0; i < sz; ++i) w[i] = static_cast<float>(rng.uniform(-limit, limit));
        n.b.fill(0.0f);
    }
}

int64_t Graph::parameter_count() const {
    int64_t total = 0;
    for (const auto& n : nodes_)
        if (n.has_params()) total += n.w.size() + n.b.size();
    return total;
}

std::vector<int> Graph::param_node_ids() const {
    std::vector<int> ids;
    for (int i = 0; i < size(); ++i)
        if (nodes_[static_cast<size_t>(i)].has_params()) ids.push_back(i);
    return ids;
}

ParamGrads Graph::make_param_grads() const {
    ParamGrads pg(nodes_.size());
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].has_params()) {
            pg[i].gw = Tensor(nodes_[i].w.shape());
            pg[i].gb = Tensor(nodes_[i].b.shape());
        }
    }
    return pg;
}

void Graph::zero_param_grads(ParamGrads& pg) {
    for (auto& g : pg) {
        if (!g.gw.empty()) g.gw.fill(0.0f);
        if (!g.gb.empty()) g.gb.fill(0.0f);
    }
}

const Tensor& Graph::forward(const Tensor& input, Workspace& ws) const {
    if (input.rank() != 4) throw ShapeError("graph input must be rank-4 NHWC, got " + input.shape_str());
    if (input.dim(3) != nodes_[0].out_ch)
        throw ShapeError("graph input has " + std::to_string(input.dim(3)) + " channels, expected " +
                         std::to_string(nodes_[0].out_ch));
    ws.states.assign(nodes_.size(), NodeState{});
    for (size_t i = 0; i < nodes_.size(); ++i) {
        const Node& nd = nodes_[i];
        NodeState& st = ws.states[i];
        switch (nd.op) {
            case Op::Input:
                st.out = input;
                break;
            case Op::Conv:
                conv_forward(nd, ws.states[static_cast<size_t>(nd.in0)].out, st.out);
                break;
            case Op::TConv:
                tconv_forward(nd, ws.states[static_cast<size_t>(nd.in0)].out, st.out);
                break;
            case Op::MaxPool:
                maxpool_forward(ws.states[static_cast<size_t>(nd.in0)].out, st.out, st.indices);
                break;
            case Op::MaxUnpool: {
                const Tensor& x = ws.states[static_cast<size_t>(nd.in0)].out;
                const NodeState& pool = ws.states[static_cast<size_t>(nd.in1)];
                if (!x.same_shape(pool.out))
                    throw ShapeError("max-unpool input " + x.shape_str() + " does not match pooled shape " +
                                     pool.out.shape_str());
                maxunpool_forward(x, pool.indices, st.out);
                break;
            }
            case Op::Concat: {
                const Tensor& a = ws.states[static_cast<size_t>(nd.in0)].out;
                const Tensor& b = ws.states[static_cast<size_t>(nd.in1)].out;
                if (a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
                    throw ShapeError("concat spatial mismatch " + a.shape_str() + " vs " + b.shape_str());
                const int N = a.dim(0), H = a.dim(1), W = a.dim(2);
                const int ca = a.dim(3), cb = b.dim(3);
                st.out = Tensor({N, H, W, ca + cb});
                const int64_t pixels = static_cast<int64_t>(N) * H * W;
                for (int64_t p = 0; p < pixels; ++p) {
                    std::memcpy(st.out.data() + p * (ca + cb), a.data() + p * ca, sizeof(float) * ca);
                    std::memcpy(st.out.data() + p * (ca + cb) + ca, b.data() + p * cb, sizeof(float) * cb);
                }
                break;
            }
            case Op::Softmax:
                softmax_forward(ws.states[static_cast<size_t>(nd.in0)].out, st.out);
                break;
        }
    }
    return ws.states.back().out;
}

void Graph::backward(const Tensor& seed, int from_node, Workspace& ws, int stop_node,
                     ParamGrads* pg) const {
    if (ws.states.size() != nodes_.size()) throw Error("backward called without a prior forward");
    if (!seed.same_shape(ws.states[static_cast<size_t>(from_node)].out))
        throw ShapeError("backward seed shape " + seed.shape_str() + " does not match node output " +
                         ws.states[static_cast<size_t>(from_node)].out.shape_str());

    // (Re)allocate grad buffers for the active region.
    for (int i = 0; i <= from_node; ++i) {
        NodeState& st = ws.states[static_cast<size_t>(i)];
        st.grad = Tensor(st.out.shape());
    }
    ws.states[static_cast<size_t>(from_node)].grad = seed;

    for (int i = from_node; i > stop_node; --i) {
        const Node& nd = nodes_[static_cast<size_t>(i)];
        NodeState& st = ws.states[static_cast<size_t>(i)];
        switch (nd.op) {
            case Op::Input:
                break;
            case Op::Conv: {
                NodeState& in = ws.states[static_cast<size_t>(nd.in0)];
                conv_backward(nd, in.out, st.out, st.grad, in.grad,
                              pg ? &(*pg)[static_cast<size_t>(i)] : nullptr);
                break;
            }
            case Op::TConv: {
                NodeState& in = ws.states[static_cast<size_t>(nd.in0)];
                tconv_backward(nd, in.out, st.grad, in.grad, pg ? &(*pg)[static_cast<size_t>(i)] : nullptr);
                break;
            }
            case Op::MaxPool:
                maxpool_backward(st.grad, st.indices, ws.states[static_cast<size_t>(nd.in0)].grad);
                break;
            case Op::MaxUnpool:
                maxunpool_backward(st.grad, ws.states[static_cast<size_t>(nd.in1)].indices,
                                   ws.states[static_cast<size_t>(nd.in0)].grad);
                break;
            case Op::Concat: {
                NodeState& a = ws.states[static_cast<size_t>(nd.in0)];
                NodeState& b = ws.states[static_cast<size_t>(nd.in1)];
                const int ca = a.out.dim(3), cb = b.out.dim(3);
                const int64_t pixels = st.grad.size() / (ca + cb);
                for (int64_t p = 0; p < pixels; ++p) {
                    const float* g = st.grad.data() + p * (ca + cb);
                    float* ga = a.grad.data() + p * ca;
                    float* gb = b.grad.data() + p * cb;
                    for (int c = 0; c < ca; ++c) ga[c] += g[c];
                    for (int c = 0; c < cb; ++c) gb[c] += g[ca + c];
                }
                break;
            }
            case Op::Softmax:
                softmax_backward(st.out, st.grad, ws.states[static_cast<size_t>(nd.in0)].grad);
                break;
        }
    }
}

int Graph::node_id(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? -1 : it->second;
}

}  // namespace octseg::nn
