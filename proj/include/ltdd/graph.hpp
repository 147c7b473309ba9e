#pragma once

#include <compare>
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <vector>

#include "ltdd/tensor.hpp"

namespace ltdd {

/// Handle to a node of one particular Graph.
struct NodeId {
    std::uint32_t graph = 0;
    std::uint32_t index = 0;

    auto operator<=>(const NodeId&) const = default;
};

/// Append-only reverse-mode differentiation graph.
///
/// Every primitive evaluates eagerly and caches its forward value; nodes may
/// only reference earlier nodes, so the record is acyclic by construction.
/// Leaves are the differentiation targets. Constants and everything computed
/// only from constants are excluded from the reverse pass.
///
/// Gradients of an inner training loss can themselves be recorded as graph
/// nodes (see models.hpp, backprop_as_graph). A single reverse pass over such
/// a graph then differentiates through unrolled optimizer steps without any
/// higher-order machinery.
///
/// A Graph is not thread-safe; confine each instance to one thread.
class Graph {
public:
    Graph();

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) noexcept = default;
    Graph& operator=(Graph&&) noexcept = default;

    NodeId constant(Tensor value);
    NodeId leaf(Tensor value);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);  // elementwise
    NodeId scale(NodeId a, double factor);
    // `factor` must hold a single value; differentiable in both arguments.
    NodeId scale_by(NodeId factor, NodeId a);
    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    NodeId relu(NodeId a);
    // Indicator a > 0. Piecewise constant, so it carries no gradient.
    NodeId relu_mask(NodeId a);
    NodeId log_softmax(NodeId a);  // row-wise, rank 2
    NodeId softmax(NodeId a);      // row-wise, rank 2
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId gather_rows(NodeId a, std::vector<std::size_t> indices);
    // Adds a length-m vector to every row of an n x m matrix.
    NodeId add_rowvec(NodeId a, NodeId v);
    // Column sums of an n x m matrix, as a length-m vector.
    NodeId sum_rows(NodeId a);

    const Tensor& value(NodeId id) const;
    bool requires_grad(NodeId id) const;
    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<NodeId>& leaves() const noexcept { return leaves_; }

    /// d(root)/d(leaf) for every leaf of the graph. Leaves the root does not
    /// depend on receive zero tensors.
    std::map<NodeId, Tensor> backward(NodeId root) const;

private:
    enum class Op {
        constant,
        leaf,
        add,
        sub,
        mul,
        scale,
        scale_by,
        matmul,
        transpose,
        relu,
        relu_mask,
        log_softmax,
        softmax,
        sum,
        mean,
        gather_rows,
        add_rowvec,
        sum_rows,
    };

    struct Node {
        Op op;
        std::uint32_t a = 0;
        std::uint32_t b = 0;
        Tensor value;
        bool needs_grad = false;
        double factor = 0.0;
        std::vector<std::size_t> indices;
    };

    std::uint32_t check(NodeId id, const char* primitive) const;
    NodeId push(Node node);
    void accumulate(std::vector<Tensor>& grads, std::uint32_t target, const Tensor& contribution) const;

    std::uint32_t id_;
    // Deque keeps value() references valid while nodes are appended.
    std::deque<Node> nodes_;
    std::vector<NodeId> leaves_;
};

/// One plain gradient step per parameter: p - step * g, recorded in `graph`.
/// `step` must be a single-valued node so it can itself be a leaf.
std::vector<NodeId> inner_sgd_step(Graph& graph, std::span<const NodeId> params,
                                   std::span<const NodeId> grads, NodeId step);

}  // namespace ltdd
