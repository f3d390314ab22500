#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mbtrim/autodiff.hpp"
#include "mbtrim/data.hpp"
#include "mbtrim/prng.hpp"
#include "mbtrim/tensor.hpp"

namespace mbtrim {

enum class LayerKind { dense, relu, conv2d, maxpool2, flatten };

enum class Architecture { mlp3, tinycnn };

const char* to_string(Architecture arch) noexcept;
Architecture parse_architecture(const std::string& tag);

/// Layers that mix information across samples of a batch. None of the
/// shipped layer kinds do; the hook exists for the subset-recompute guard.
constexpr bool is_batch_coupled(LayerKind kind) noexcept {
    switch (kind) {
    case LayerKind::dense:
    case LayerKind::relu:
    case LayerKind::conv2d:
    case LayerKind::maxpool2:
    case LayerKind::flatten:
        return false;
    }
    return true;
}

struct Layer {
    LayerKind kind;
    /// Index of the weight tensor in Model::parameters(); bias follows it.
    std::size_t param_offset = 0;
    std::size_t fan_in = 0;
};

class Model {
public:
    /// dense(d->256) relu dense(256->128) relu dense(128->classes)
    static Model mlp3(std::size_t input_dim, std::size_t classes);
    /// conv(C->16) relu pool conv(16->32) relu pool flatten dense(->classes).
    /// H and W must be multiples of 4.
    static Model tinycnn(std::size_t channels, std::size_t height, std::size_t width,
                         std::size_t classes);

    Architecture architecture() const noexcept { return arch_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    /// Per-sample input shape, excluding the batch axis.
    const Shape& input_shape() const noexcept { return input_shape_; }
    std::size_t classes() const noexcept { return classes_; }

    std::span<Tensor> parameters() noexcept { return params_; }
    std::span<const Tensor> parameters() const noexcept { return params_; }
    std::size_t parameter_count() const noexcept;

    bool batch_coupled() const noexcept;

private:
    Model(Architecture arch, Shape input_shape, std::size_t classes)
        : arch_(arch), input_shape_(std::move(input_shape)), classes_(classes) {}

    void add_dense(std::size_t in, std::size_t out);
    void add_conv(std::size_t in_channels, std::size_t filters);
    void add(LayerKind kind) { layers_.push_back({kind, 0, 0}); }

    Architecture arch_;
    Shape input_shape_;
    std::size_t classes_;
    std::vector<Layer> layers_;
    std::vector<Tensor> params_;
};

/// He initialization: weights ~ Normal(0, sqrt(2/fan_in)), biases 0. Draws
/// in layer order, row-major within each weight tensor.
void init_params(Model& model, Prng& prng);

struct PerSampleLoss {
    /// Loss vector node, shape [B].
    NodeId node;
    /// Tape nodes holding the model parameters, in Model::parameters() order.
    std::vector<NodeId> params;
    NodeId logits;
};

/// Pushes the model parameters and x onto the tape and records the forward
/// pass up to per-sample cross-entropy. No batch reduction happens here.
PerSampleLoss forward_per_sample_loss(Tape& tape, const Model& model, const Tensor& x,
                                      std::span<const std::size_t> labels);

/// Logits for x without building gradients.
Tensor predict_logits(const Model& model, const Tensor& x);

/// Fraction of rows whose argmax logit (smallest index on ties) differs from
/// the label.
double top1_error(const Model& model, const Tensor& inputs, std::span<const std::size_t> labels);

inline double top1_error(const Model& model, const Dataset& split) {
    return top1_error(model, split.inputs, split.labels);
}

/// Reads the gradients of the parameter nodes after a backward pass.
std::vector<Tensor> parameter_gradients(const Tape& tape, const PerSampleLoss& loss);

}  // namespace mbtrim
