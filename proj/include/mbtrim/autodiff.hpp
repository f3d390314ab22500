#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mbtrim/tensor.hpp"

namespace mbtrim {

enum class OpKind {
    input,
    matmul,
    add_bias,
    relu,
    conv2d,
    maxpool2,
    reshape,
    softmax_ce_per_sample,
    mean,
    sum,
    trimmed_mean,
    gather_rows,
    scalar_scale,
};

const char* to_string(OpKind kind) noexcept;

struct NodeId {
    std::size_t index = 0;
    friend bool operator==(NodeId, NodeId) = default;
};

struct Node {
    NodeId id;
    OpKind op = OpKind::input;
    std::vector<NodeId> inputs;
    Tensor value;
    /// Allocated by backward(); same shape as value.
    std::optional<Tensor> grad;
    /// Whether any gradient has to flow into this node during backward.
    bool needs_grad = false;
    /// Op payload: pooling argmax, class labels, or row indices.
    std::vector<std::size_t> indices;
    double scalar = 0.0;
};

/// Append-only record of a forward computation. Nodes only reference
/// earlier nodes, so reverse append order is a valid backward order.
class Tape {
public:
    NodeId input(Tensor value, bool requires_grad = true);

    NodeId matmul(NodeId a, NodeId b);
    NodeId add_bias(NodeId x, NodeId bias);
    NodeId relu(NodeId x);
    NodeId conv2d(NodeId x, NodeId weight, NodeId bias);
    NodeId maxpool2(NodeId x);
    NodeId reshape(NodeId x, Shape shape);
    /// Cross-entropy of each row of logits[B,C] against labels; output [B].
    NodeId softmax_ce_per_sample(NodeId logits, std::span<const std::size_t> labels);
    /// Mean of all elements, summed in ascending index order; output [1].
    NodeId mean(NodeId x);
    NodeId sum(NodeId x);
    /// Mean over `selected` entries of a rank-1 node, summed in ascending
    /// index order. Selection is a constant for backward.
    NodeId trimmed_mean(NodeId losses, std::span<const std::size_t> selected);
    NodeId gather_rows(NodeId x, std::span<const std::size_t> idx);
    NodeId scalar_scale(NodeId x, double factor);

    /// Reverse-mode sweep from a scalar root. Resets every gradient first, so
    /// repeated calls give identical results.
    void backward(NodeId root);

    const Node& node(NodeId id) const { return nodes_.at(id.index); }
    const Tensor& value(NodeId id) const { return node(id).value; }
    /// Gradient of the last backward root; ContractError before backward.
    const Tensor& grad(NodeId id) const;
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    NodeId push(OpKind op, std::vector<NodeId> inputs, Tensor value);
    Node& at(NodeId id);

    void backward_node(const Node& node);

    std::vector<Node> nodes_;
};

}  // namespace mbtrim
