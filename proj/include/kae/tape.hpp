#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "kae/tensor.hpp"

namespace kae {

class Tape;
using NodeId = std::int32_t;

// One recorded operation. Ids are creation order, parents always precede
// children, so reverse id order is a valid reverse topological sweep.
struct Node {
    const char* op;
    std::vector<NodeId> parents;
    Tensor value;
    Tensor grad;  // allocated lazily when backward first touches the node
    std::function<void(Tape&, const Node&)> backward;
    std::size_t flops;
};

// Append-only record of one forward pass. Single-threaded by contract;
// individual operations may use data parallelism internally.
class Tape {
public:
    NodeId leaf(Tensor value);
    NodeId make(const char* op, Tensor value, std::vector<NodeId> parents,
                std::function<void(Tape&, const Node&)> backward, std::size_t flops = 0);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Node& node(NodeId id) const { return nodes_[id]; }
    std::size_t size() const { return nodes_.size(); }

    // Gradient of a node; empty tensor if backward never reached it.
    const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
    // Accumulator access; allocates zeros of the value's shape on first touch.
    Tensor& grad_accum(NodeId id);

    // Reverse sweep from a scalar loss node. Non-leaf gradients are consumed
    // by the sweep; leaf gradients persist and accumulate across sweeps.
    void backward(NodeId loss);

    // Reverse sweep seeded with explicit cotangents on arbitrary nodes.
    void backward_seeded(const std::vector<std::pair<NodeId, Tensor>>& seeds);

    std::size_t flops_total() const;
    std::size_t flops_for(const std::string& op) const;

private:
    void sweep(NodeId highest);
    std::vector<Node> nodes_;
};

// Lightweight handle for building expressions on a tape.
struct Var {
    Tape* tape = nullptr;
    NodeId id = -1;
    const Tensor& value() const { return tape->value(id); }
};

Var constant(Tape& tape, Tensor value);

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var relu(Var a);
Var softmax_rows(Var a);
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
Var add_bias(Var a, Var bias);
Var tile_rows(Var a, std::size_t copies);
Var transpose(Var a);
Var reshape(Var a, std::vector<std::size_t> shape);
Var sum_all(Var a);
// Mean squared difference over all elements; the norm used by every loss.
Var mean_sq_diff(Var a, Var b);
// Row selection: out[i] = a[rows[i]]. Backward scatter-accumulates, so
// duplicate indices are fine. Out-of-range index -> dimension error.
Var gather_rows(Var a, std::vector<std::size_t> rows);

// Scaled-dot-product multi-head self-attention over `samples` independent
// token blocks packed row-wise: q, k, v are [samples*tokens x d_model].
Var multihead_attention(Var q, Var k, Var v, std::size_t heads, std::size_t samples);

// Circular 1-D convolution with `samples` channel blocks packed row-wise:
// x [samples*C_in x L], w [C_out x C_in x K], b [C_out] -> [samples*C_out x L].
Var conv1d_circular(Var x, Var w, Var b, std::size_t samples = 1);
// Average pooling with window 2, stride 2, applied row-wise: [C x L] -> [C x L/2].
Var avg_pool2(Var x);

// FLOP accounting convention for the attention core, shared by the tape
// counter and the config-derived estimate.
std::size_t attention_core_flops(std::size_t samples, std::size_t tokens, std::size_t d_model,
                                 std::size_t heads);

}  // namespace kae
