#include "mbtrim/optim.hpp"

#include <cmath>
#include <string>

namespace mbtrim {

double lr_at_epoch(const LrSchedule& schedule, int epoch) {
    if (epoch < 1) {
        throw ContractError("lr_at_epoch: epoch must be >= 1");
    }
    double lr = schedule.base_lr;
    for (int milestone : schedule.milestones) {
        if (milestone <= epoch) {
            lr *= schedule.gamma;
        }
    }
    return lr;
}

namespace {

void check_shapes(const std::vector<Tensor>& state, std::span<Tensor> params, std::span<const Tensor> grads,
                  const char* who) {
    if (params.size() != grads.size() || params.size() != state.size()) {
        throw ContractError(std::string(who) + ": parameter, gradient and state counts differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].shape() != grads[i].shape() || params[i].shape() != state[i].shape()) {
            throw ContractError(std::string(who) + ": shape mismatch at parameter " + std::to_string(i));
        }
    }
}

std::vector<Tensor> zeros_like_all(std::span<const Tensor> params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) {
        out.push_back(zeros_like(p));
    }
    return out;
}

}  // namespace

AdamState AdamState::zeros_for(std::span<const Tensor> params) {
    return {zeros_like_all(params), zeros_like_all(params), 0};
}

void adam_step(AdamState& state, std::span<Tensor> params, std::span<const Tensor> grads, double lr,
               const AdamParams& hyper) {
    check_shapes(state.m, params, grads, "adam_step");
    check_shapes(state.v, params, grads, "adam_step");
    state.t += 1;
    const double correction1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
    const double correction2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& w = params[i].array();
        auto& m = state.m[i].array();
        auto& v = state.v[i].array();
        const Tensor::Array g = grads[i].array() + hyper.weight_decay * w;
        m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
        v = hyper.beta2 * v + (1.0 - hyper.beta2) * g.square();
        w -= lr * (m / correction1) / ((v / correction2).sqrt() + hyper.eps);
    }
}

SgdState SgdState::zeros_for(std::span<const Tensor> params) {
    return {zeros_like_all(params)};
}

void sgd_step(SgdState& state, std::span<Tensor> params, std::span<const Tensor> grads, double lr,
              const SgdParams& hyper) {
    check_shapes(state.velocity, params, grads, "sgd_step");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& w = params[i].array();
        auto& vel = state.velocity[i].array();
        vel = hyper.momentum * vel + (grads[i].array() + hyper.weight_decay * w);
        w -= lr * vel;
    }
}

}  // namespace mbtrim
