#ifndef OCTSEG_NN_GRAPH_HPP
#define OCTSEG_NN_GRAPH_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "octseg/tensor.hpp"

namespace octseg::nn {

enum class Op { Input, Conv, TConv, MaxPool, MaxUnpool, Concat, Softmax };

const char* op_name(Op op);

// One node of a static layer graph. Convolutions are stride-1 with `same`
// padding; transposed convolutions and pooling use fixed 2x2 windows with
// stride 2, which keeps every up/down step an exact factor of two.
struct Node {
    Op op = Op::Input;
    std::string name;
    int in0 = -1;  // data input
    int in1 = -1;  // Concat: second input; MaxUnpool: pool node whose indices are reused
    int kh = 0, kw = 0;
    int in_ch = 0, out_ch = 0;
    bool relu = false;

    // Conv:  [kh*kw*in_ch, out_ch] row-major, row index (ky*kw + kx)*in_ch + c.
    // TConv: [in_ch, kh*kw*out_ch], column index (dy*kw + dx)*out_ch + f.
    Tensor w;
    Tensor b;

    bool has_params() const { return op == Op::Conv || op == Op::TConv; }
};

// Per-forward-call state, kept outside the graph so a built graph is
// read-only during inference and concurrent calls can use separate
// workspaces.
struct NodeState {
    Tensor out;
    Tensor grad;                   // dL/d(out), filled by backward
    std::vector<int32_t> indices;  // MaxPool argmax, flat y*W+x per (n,oy,ox,c)
};

struct Workspace {
    std::vector<NodeState> states;
    void clear_grads();
};

struct ParamGrad {
    Tensor gw;
    Tensor gb;
};
using ParamGrads = std::vector<ParamGrad>;  // aligned with node ids

class Graph {
public:
    int add_input(const std::string& name, int channels);
    int add_conv(const std::string& name, int input, int out_ch, int kernel, bool relu);
    int add_tconv(const std::string& name, int input, int out_ch);
    int add_maxpool(const std::string& name, int input);
    int add_maxunpool(const std::string& name, int input, int pool_node);
    int add_concat(const std::string& name, int a, int b);
    int add_softmax(const std::string& name, int input);

    // Glorot-uniform weights, zero biases, drawn in node order from `seed`.
    void init_params(uint64_t seed);

    int64_t parameter_count() const;

    // Runs all nodes in order; returns the last node's activation.
    const Tensor& forward(const Tensor& input, Workspace& ws) const;

    // Propagates `seed` = dL/d(out of `from_node`) down to `stop_node`
    // (exclusive). Parameter gradients are accumulated into `pg` when given.
    void backward(const Tensor& seed, int from_node, Workspace& ws, int stop_node = 0,
                  ParamGrads* pg = nullptr) const;

    ParamGrads make_param_grads() const;
    static void zero_param_grads(ParamGrads& pg);

    int node_id(const std::string& name) const;  // -1 when absent
    Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
    int size() const { return static_cast<int>(nodes_.size()); }
    int output_id() const { return size() - 1; }
    std::vector<int> param_node_ids() const;

private:
    int add_node(Node n);
    std::vector<Node> nodes_;
    std::map<std::string, int> by_name_;
};

}  // namespace octseg::nn

#endif
