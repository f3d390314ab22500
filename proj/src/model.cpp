#include "mbtrim/model.hpp"

#include <cmath>
#include <string>

namespace mbtrim {

const char* to_string(Architecture arch) noexcept {
    switch (arch) {
    case Architecture::mlp3: return "mlp3";
    case Architecture::tinycnn: return "tinycnn";
    }
    return "unknown";
}

Architecture parse_architecture(const std::string& tag) {
    if (tag == "mlp3") {
        return Architecture::mlp3;
    }
    if (tag == "tinycnn") {
        return Architecture::tinycnn;
    }
    throw ParameterError("unknown model architecture '" + tag + "'");
}

void Model::add_dense(std::size_t in, std::size_t out) {
    layers_.push_back({LayerKind::dense, params_.size(), in});
    params_.emplace_back(Shape{in, out}, 0.0);
    params_.emplace_back(Shape{out}, 0.0);
}

void Model::add_conv(std::size_t in_channels, std::size_t filters) {
    layers_.push_back({LayerKind::conv2d, params_.size(), in_channels * 9});
    params_.emplace_back(Shape{filters, in_channels, 3, 3}, 0.0);
    params_.emplace_back(Shape{filters}, 0.0);
}

Model Model::mlp3(std::size_t input_dim, std::size_t classes) {
    if (input_dim == 0 || classes < 2) {
        throw ParameterError("mlp3 needs input_dim >= 1 and classes >= 2");
    }
    Model m(Architecture::mlp3, {input_dim}, classes);
    m.add_dense(input_dim, 256);
    m.add(LayerKind::relu);
    m.add_dense(256, 128);
    m.add(LayerKind::relu);
    m.add_dense(128, classes);
    return m;
}

Model Model::tinycnn(std::size_t channels, std::size_t height, std::size_t width, std::size_t classes) {
    if (channels == 0 || height == 0 || width == 0 || height % 4 != 0 || width % 4 != 0) {
        throw ParameterError("tinycnn needs a nonempty input with H and W divisible by 4");
    }
    if (classes < 2) {
        throw ParameterError("tinycnn needs classes >= 2");
    }
    Model m(Architecture::tinycnn, {channels, height, width}, classes);
    m.add_conv(channels, 16);
    m.add(LayerKind::relu);
    m.add(LayerKind::maxpool2);
    m.add_conv(16, 32);
    m.add(LayerKind::relu);
    m.add(LayerKind::maxpool2);
    m.add(LayerKind::flatten);
    m.add_dense(32 * (height / 4) * (width / 4), classes);
    return m;
}

std::size_t Model::parameter_count() const noexcept {
    std::size_t total = 0;
    for (const auto& p : params_) {
        total += p.size();
    }
    return total;
}

bool Model::batch_coupled() const noexcept {
    for (const auto& layer : layers_) {
        if (is_batch_coupled(layer.kind)) {
            return true;
        }
    }
    return false;
}

void init_params(Model& model, Prng& prng) {
    auto params = model.parameters();
    for (const auto& layer : model.layers()) {
        if (layer.kind != LayerKind::dense && layer.kind != LayerKind::conv2d) {
            continue;
        }
        Tensor& weight = params[layer.param_offset];
        Tensor& bias = params[layer.param_offset + 1];
        const double std = std::sqrt(2.0 / static_cast<double>(layer.fan_in));
        weight = randn(prng, weight.shape(), 0.0, std);
        bias.array().setZero();
    }
}

namespace {

NodeId forward_logits(Tape& tape, const Model& model, const Tensor& x, bool track_params,
                      std::vector<NodeId>& param_nodes) {
    const Shape& expected = model.input_shape();
    const std::size_t batch = x.dim(0);
    if (x.row_size() != element_count(expected)) {
        throw ShapeError("model input rows have " + std::to_string(x.row_size()) +
                         " elements, expected " + to_string(expected));
    }
    Shape batched{batch};
    batched.insert(batched.end(), expected.begin(), expected.end());

    param_nodes.clear();
    for (const auto& p : model.parameters()) {
        param_nodes.push_back(tape.input(p, track_params));
    }

    NodeId h = tape.input(x.shape() == batched ? x : x.reshaped(batched), false);
    for (const auto& layer : model.layers()) {
        switch (layer.kind) {
        case LayerKind::dense:
            h = tape.add_bias(tape.matmul(h, param_nodes[layer.param_offset]),
                              param_nodes[layer.param_offset + 1]);
            break;
        case LayerKind::conv2d:
            h = tape.conv2d(h, param_nodes[layer.param_offset], param_nodes[layer.param_offset + 1]);
            break;
        case LayerKind::relu:
            h = tape.relu(h);
            break;
        case LayerKind::maxpool2:
            h = tape.maxpool2(h);
            break;
        case LayerKind::flatten:
            h = tape.reshape(h, {batch, tape.value(h).row_size()});
            break;
        }
    }
    return h;
}

}  // namespace

PerSampleLoss forward_per_sample_loss(Tape& tape, const Model& model, const Tensor& x,
                                      std::span<const std::size_t> labels) {
    if (labels.size() != x.dim(0)) {
        throw ShapeError("forward: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(x.dim(0)));
    }
    for (auto label : labels) {
        if (label >= model.classes()) {
            throw LabelError("label " + std::to_string(label) + " out of range [0," +
                             std::to_string(model.classes()) + ")");
        }
    }
    PerSampleLoss out{};
    out.logits = forward_logits(tape, model, x, true, out.params);
    out.node = tape.softmax_ce_per_sample(out.logits, labels);
    return out;
}

Tensor predict_logits(const Model& model, const Tensor& x) {
    Tape tape;
    std::vector<NodeId> params;
    auto logits = forward_logits(tape, model, x, false, params);
    return tape.value(logits);
}

double top1_error(const Model& model, const Tensor& inputs, std::span<const std::size_t> labels) {
    const std::size_t n = labels.size();
    if (n == 0) {
        throw ContractError("top1_error: empty split");
    }
    if (inputs.dim(0) != n) {
        throw ShapeError("top1_error: input and label counts differ");
    }
    constexpr std::size_t chunk = 500;
    std::size_t wrong = 0;
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t stop = std::min(n, start + chunk);
        rows.resize(stop - start);
        for (std::size_t i = start; i < stop; ++i) {
            rows[i - start] = i;
        }
        const Tensor logits = predict_logits(model, gather_rows(inputs, std::span<const std::size_t>(rows)));
        const std::size_t classes = logits.dim(1);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < classes; ++j) {
                if (logits(r, j) > logits(r, best)) {
                    best = j;
                }
            }
            wrong += best != labels[start + r] ? 1 : 0;
        }
    }
    return static_cast<double>(wrong) / static_cast<double>(n);
}

std::vector<Tensor> parameter_gradients(const Tape& tape, const PerSampleLoss& loss) {
    std::vector<Tensor> grads;
    grads.reserve(loss.params.size());
    for (auto id : loss.params) {
        grads.push_back(tape.grad(id));
    }
    return grads;
}

}  // namespace mbtrim
