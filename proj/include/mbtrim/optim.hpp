#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mbtrim/tensor.hpp"

namespace mbtrim {

/// Step decay: base_lr * gamma^(number of milestones <= epoch).
struct LrSchedule {
    double base_lr = 0.001;
    std::vector<int> milestones;
    double gamma = 0.5;
};

double lr_at_epoch(const LrSchedule& schedule, int epoch);

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t t = 0;

    /// Zero moments shaped like params.
    static AdamState zeros_for(std::span<const Tensor> params);
};

/// Classic Adam with coupled L2: the decay term is folded into the gradient
/// before the moment updates.
void adam_step(AdamState& state, std::span<Tensor> params, std::span<const Tensor> grads, double lr,
               const AdamParams& hyper);

struct SgdParams {
    double momentum = 0.9;
    double weight_decay = 0.0;
};

struct SgdState {
    std::vector<Tensor> velocity;

    static SgdState zeros_for(std::span<const Tensor> params);
};

/// Heavy-ball SGD: vel = mu * vel + g + wd * w; w -= lr * vel.
void sgd_step(SgdState& state, std::span<Tensor> params, std::span<const Tensor> grads, double lr,
              const SgdParams& hyper);

}  // namespace mbtrim
