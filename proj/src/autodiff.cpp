#include "mbtrim/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mbtrim {

const char* to_string(OpKind kind) noexcept {
    switch (kind) {
    case OpKind::input: return "input";
    case OpKind::matmul: return "matmul";
    case OpKind::add_bias: return "add_bias";
    case OpKind::relu: return "relu";
    case OpKind::conv2d: return "conv2d";
    case OpKind::maxpool2: return "maxpool2";
    case OpKind::reshape: return "reshape";
    case OpKind::softmax_ce_per_sample: return "softmax_ce_per_sample";
    case OpKind::mean: return "mean";
    case OpKind::sum: return "sum";
    case OpKind::trimmed_mean: return "trimmed_mean";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::scalar_scale: return "scalar_scale";
    }
    return "unknown";
}

NodeId Tape::push(OpKind op, std::vector<NodeId> inputs, Tensor value) {
    NodeId id{nodes_.size()};
    bool needs_grad = false;
    for (auto in : inputs) {
        if (in.index >= nodes_.size()) {
            throw ContractError("tape: input node " + std::to_string(in.index) + " does not exist");
        }
        needs_grad = needs_grad || nodes_[in.index].needs_grad;
    }
    nodes_.push_back(Node{id, op, std::move(inputs), std::move(value), std::nullopt, needs_grad, {}, 0.0});
    return id;
}

Node& Tape::at(NodeId id) {
    if (id.index >= nodes_.size()) {
        throw ContractError("tape: node " + std::to_string(id.index) + " does not exist");
    }
    return nodes_[id.index];
}

const Tensor& Tape::grad(NodeId id) const {
    const auto& n = node(id);
    if (!n.grad) {
        throw ContractError("tape: gradient requested before backward()");
    }
    return *n.grad;
}

NodeId Tape::input(Tensor value, bool requires_grad) {
    NodeId id{nodes_.size()};
    nodes_.push_back(Node{id, OpKind::input, {}, std::move(value), std::nullopt, requires_grad, {}, 0.0});
    return id;
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    auto v = mbtrim::matmul(value(a), value(b));
    return push(OpKind::matmul, {a, b}, std::move(v));
}

NodeId Tape::add_bias(NodeId x, NodeId bias) {
    auto v = mbtrim::add_bias(value(x), value(bias));
    return push(OpKind::add_bias, {x, bias}, std::move(v));
}

NodeId Tape::relu(NodeId x) {
    auto v = mbtrim::relu(value(x));
    return push(OpKind::relu, {x}, std::move(v));
}

NodeId Tape::conv2d(NodeId x, NodeId weight, NodeId bias) {
    auto v = conv2d_forward(value(x), value(weight), value(bias));
    return push(OpKind::conv2d, {x, weight, bias}, std::move(v));
}

NodeId Tape::maxpool2(NodeId x) {
    auto pooled = maxpool2_forward(value(x));
    auto id = push(OpKind::maxpool2, {x}, std::move(pooled.output));
    nodes_.back().indices = std::move(pooled.argmax);
    return id;
}

NodeId Tape::reshape(NodeId x, Shape shape) {
    auto v = value(x).reshaped(std::move(shape));
    return push(OpKind::reshape, {x}, std::move(v));
}

NodeId Tape::softmax_ce_per_sample(NodeId logits, std::span<const std::size_t> labels) {
    const Tensor& z = value(logits);
    if (z.rank() != 2) {
        throw ShapeError("softmax_ce_per_sample: logits must be [B,C], got " + to_string(z.shape()));
    }
    const std::size_t rows = z.dim(0), classes = z.dim(1);
    if (labels.size() != rows) {
        throw ShapeError("softmax_ce_per_sample: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(rows));
    }
    Tensor losses({rows}, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        if (labels[i] >= classes) {
            throw LabelError("label " + std::to_string(labels[i]) + " out of range [0," +
                             std::to_string(classes) + ")");
        }
        double top = z(i, 0);
        for (std::size_t j = 1; j < classes; ++j) {
            top = std::max(top, z(i, j));
        }
        double acc = 0.0;
        for (std::size_t j = 0; j < classes; ++j) {
            acc += std::exp(z(i, j) - top);
        }
        // log-sum-exp minus the label logit; clamp guards against a -0 ulp
        losses[i] = std::max(0.0, std::log(acc) + top - z(i, labels[i]));
    }
    auto id = push(OpKind::softmax_ce_per_sample, {logits}, std::move(losses));
    nodes_.back().indices.assign(labels.begin(), labels.end());
    return id;
}

NodeId Tape::mean(NodeId x) {
    const Tensor& v = value(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        acc += v[i];
    }
    return push(OpKind::mean, {x}, Tensor({1}, acc / static_cast<double>(v.size())));
}

NodeId Tape::sum(NodeId x) {
    const Tensor& v = value(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        acc += v[i];
    }
    return push(OpKind::sum, {x}, Tensor({1}, acc));
}

NodeId Tape::trimmed_mean(NodeId losses, std::span<const std::size_t> selected) {
    const Tensor& v = value(losses);
    if (v.rank() != 1) {
        throw ShapeError("trimmed_mean: expected a rank-1 loss vector, got " + to_string(v.shape()));
    }
    if (selected.empty() || selected.size() > v.size()) {
        throw ContractError("trimmed_mean: selection size must be in [1, B]");
    }
    std::vector<std::size_t> ascending(selected.begin(), selected.end());
    std::sort(ascending.begin(), ascending.end());
    if (std::adjacent_find(ascending.begin(), ascending.end()) != ascending.end() ||
        ascending.back() >= v.size()) {
        throw ContractError("trimmed_mean: selection must hold distinct indices in [0, B)");
    }
    double acc = 0.0;
    for (auto i : ascending) {
        acc += v[i];
    }
    auto id = push(OpKind::trimmed_mean, {losses},
                   Tensor({1}, acc / static_cast<double>(ascending.size())));
    nodes_.back().indices = std::move(ascending);
    return id;
}

NodeId Tape::gather_rows(NodeId x, std::span<const std::size_t> idx) {
    auto v = mbtrim::gather_rows(value(x), idx);
    auto id = push(OpKind::gather_rows, {x}, std::move(v));
    nodes_.back().indices.assign(idx.begin(), idx.end());
    return id;
}

NodeId Tape::scalar_scale(NodeId x, double factor) {
    Tensor v = value(x);
    v.array() *= factor;
    auto id = push(OpKind::scalar_scale, {x}, std::move(v));
    nodes_.back().scalar = factor;
    return id;
}

void Tape::backward(NodeId root) {
    const Node& r = at(root);
    if (r.value.size() != 1) {
        throw ContractError("backward: root must be a scalar, got shape " + to_string(r.value.shape()));
    }
    for (auto& n : nodes_) {
        n.grad = zeros_like(n.value);
    }
    (*at(root).grad)[0] = 1.0;
    for (std::size_t i = root.index + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (n.needs_grad && n.op != OpKind::input) {
            backward_node(n);
        }
    }
}

namespace {

void accumulate(Tensor& target, const Tensor& delta) {
    target.array() += delta.array();
}

}  // namespace

void Tape::backward_node(const Node& n) {
    const Tensor& dy = *n.grad;
    auto wants = [&](std::size_t slot) { return nodes_[n.inputs[slot].index].needs_grad; };
    auto grad_of = [&](std::size_t slot) -> Tensor& { return *nodes_[n.inputs[slot].index].grad; };
    auto value_of = [&](std::size_t slot) -> const Tensor& { return nodes_[n.inputs[slot].index].value; };

    switch (n.op) {
    case OpKind::input:
        break;

    case OpKind::matmul: {
        if (wants(0)) {
            accumulate(grad_of(0), mbtrim::matmul(dy, transpose(value_of(1))));
        }
        if (wants(1)) {
            accumulate(grad_of(1), mbtrim::matmul(transpose(value_of(0)), dy));
        }
        break;
    }

    case OpKind::add_bias: {
        if (wants(0)) {
            accumulate(grad_of(0), dy);
        }
        if (wants(1)) {
            Tensor& db = grad_of(1);
            const std::size_t rows = dy.dim(0), cols = dy.dim(1);
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < cols; ++j) {
                    db[j] += dy(i, j);
                }
            }
        }
        break;
    }

    case OpKind::relu: {
        if (wants(0)) {
            const Tensor& x = value_of(0);
            Tensor& dx = grad_of(0);
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (x[i] > 0.0) {
                    dx[i] += dy[i];
                }
            }
        }
        break;
    }

    case OpKind::conv2d: {
        const Tensor& x = value_of(0);
        const Tensor& w = value_of(1);
        const std::size_t batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
        const std::size_t filters = w.dim(0), plane = height * width;
        const bool want_x = wants(0), want_w = wants(1), want_b = wants(2);
        Tensor* dx = want_x ? &grad_of(0) : nullptr;
        Tensor* dw = want_w ? &grad_of(1) : nullptr;
        Tensor* db = want_b ? &grad_of(2) : nullptr;
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t f = 0; f < filters; ++f) {
                const double* g = dy.data() + (b * filters + f) * plane;
                if (db) {
                    for (std::size_t i = 0; i < plane; ++i) {
                        (*db)[f] += g[i];
                    }
                }
                for (std::size_t c = 0; c < channels; ++c) {
                    const double* in = x.data() + (b * channels + c) * plane;
                    for (std::size_t kh = 0; kh < 3; ++kh) {
                        for (std::size_t kw = 0; kw < 3; ++kw) {
                            const std::size_t h0 = kh == 0 ? 1 : 0;
                            const std::size_t h1 = kh == 2 ? height - 1 : height;
                            const std::size_t w0 = kw == 0 ? 1 : 0;
                            const std::size_t w1 = kw == 2 ? width - 1 : width;
                            const std::size_t tap = (f * channels + c) * 9 + kh * 3 + kw;
                            double acc = 0.0;
                            for (std::size_t h = h0; h < h1; ++h) {
                                const std::size_t src = (h + kh - 1) * width;
                                for (std::size_t col = w0; col < w1; ++col) {
                                    const double go = g[h * width + col];
                                    if (dw) {
                                        acc += go * in[src + col + kw - 1];
                                    }
                                    if (dx) {
                                        (*dx)[(b * channels + c) * plane + src + col + kw - 1] += go * w[tap];
                                    }
                                }
                            }
                            if (dw) {
                                (*dw)[tap] += acc;
                            }
                        }
                    }
                }
            }
        }
        break;
    }

    case OpKind::maxpool2: {
        if (wants(0)) {
            Tensor& dx = grad_of(0);
            for (std::size_t o = 0; o < n.indices.size(); ++o) {
                dx[n.indices[o]] += dy[o];
            }
        }
        break;
    }

    case OpKind::reshape: {
        if (wants(0)) {
            grad_of(0).array() += dy.array();
        }
        break;
    }

    case OpKind::softmax_ce_per_sample: {
        if (wants(0)) {
            const Tensor& z = value_of(0);
            Tensor& dz = grad_of(0);
            const std::size_t rows = z.dim(0), classes = z.dim(1);
            std::vector<double> prob(classes);
            for (std::size_t i = 0; i < rows; ++i) {
                if (dy[i] == 0.0) {
                    continue;
                }
                double top = z(i, 0);
                for (std::size_t j = 1; j < classes; ++j) {
                    top = std::max(top, z(i, j));
                }
                double acc = 0.0;
                for (std::size_t j = 0; j < classes; ++j) {
                    prob[j] = std::exp(z(i, j) - top);
                    acc += prob[j];
                }
                for (std::size_t j = 0; j < classes; ++j) {
                    const double target = j == n.indices[i] ? 1.0 : 0.0;
                    dz(i, j) += dy[i] * (prob[j] / acc - target);
                }
            }
        }
        break;
    }

    case OpKind::mean: {
        if (wants(0)) {
            Tensor& dx = grad_of(0);
            const double share = dy[0] * (1.0 / static_cast<double>(dx.size()));
            dx.array() += share;
        }
        break;
    }

    case OpKind::sum: {
        if (wants(0)) {
            grad_of(0).array() += dy[0];
        }
        break;
    }

    case OpKind::trimmed_mean: {
        if (wants(0)) {
            Tensor& dx = grad_of(0);
            const double share = dy[0] * (1.0 / static_cast<double>(n.indices.size()));
            for (auto i : n.indices) {
                dx[i] += share;
            }
        }
        break;
    }

    case OpKind::gather_rows: {
        if (wants(0)) {
            Tensor& dx = grad_of(0);
            const std::size_t stride = dx.row_size();
            for (std::size_t r = 0; r < n.indices.size(); ++r) {
                const double* src = dy.data() + r * stride;
                double* dst = dx.data() + n.indices[r] * stride;
                for (std::size_t e = 0; e < stride; ++e) {
                    dst[e] += src[e];
                }
            }
        }
        break;
    }

    case OpKind::scalar_scale: {
        if (wants(0)) {
            grad_of(0).array() += n.scalar * dy.array();
        }
        break;
    }
    }
}

}  // namespace mbtrim
