#include "mbtrim/trim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mbtrim {

void TrimSchedule::validate() const {
    if (!(p_end > 0.0 && p_end <= p_start && p_start <= 1.0)) {
        throw ParameterError("trim schedule needs 0 < p_end <= p_start <= 1");
    }
    if (total_epochs < 1) {
        throw ParameterError("trim schedule needs total_epochs >= 1");
    }
}

double fraction_at_epoch(const TrimSchedule& schedule, int epoch) {
    schedule.validate();
    if (epoch < 1 || epoch > schedule.total_epochs) {
        throw ContractError("fraction_at_epoch: epoch " + std::to_string(epoch) + " outside [1, " +
                            std::to_string(schedule.total_epochs) + "]");
    }
    if (schedule.total_epochs == 1 || epoch == 1) {
        return schedule.p_start;
    }
    if (epoch == schedule.total_epochs) {
        return schedule.p_end;
    }
    const double step = (schedule.p_end - schedule.p_start) / static_cast<double>(schedule.total_epochs - 1);
    return schedule.p_start + static_cast<double>(epoch - 1) * step;
}

std::size_t trim_count(std::size_t batch_size, double p) {
    if (batch_size == 0 || !(p > 0.0 && p <= 1.0)) {
        throw ContractError("trim_count needs B >= 1 and 0 < p <= 1");
    }
    // Products like 0.6 * 5 can land one ulp above an integer; absorb that
    // before rounding up.
    const double scaled = p * static_cast<double>(batch_size);
    const double k = std::ceil(scaled - 1e-9 * std::max(1.0, scaled));
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(k, 1.0)), 1, batch_size);
}

TrimPlan select_topk(std::span<const double> losses, std::size_t k) {
    if (k < 1 || k > losses.size()) {
        throw ContractError("select_topk: k = " + std::to_string(k) + " outside [1, " +
                            std::to_string(losses.size()) + "]");
    }
    for (double v : losses) {
        if (std::isnan(v)) {
            throw ContractError("select_topk: NaN loss");
        }
    }
    std::vector<std::size_t> order(losses.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto harder = [&](std::size_t a, std::size_t b) {
        return losses[a] > losses[b] || (losses[a] == losses[b] && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), harder);
    order.resize(k);
    return {static_cast<double>(k) / static_cast<double>(losses.size()), k, std::move(order)};
}

TrimPlan plan_batch(std::span<const double> losses, double p) {
    auto plan = select_topk(losses, trim_count(losses.size(), p));
    plan.p = p;
    return plan;
}

NodeId trimmed_mean(Tape& tape, NodeId per_sample_losses, const TrimPlan& plan) {
    if (plan.selected.size() != plan.k) {
        throw ContractError("trimmed_mean: plan selection size differs from k");
    }
    return tape.trimmed_mean(per_sample_losses, plan.selected);
}

std::vector<Tensor> masked_trimmed_gradients(const Model& model, const Tensor& x,
                                             std::span<const std::size_t> labels, const TrimPlan& plan) {
    Tape tape;
    const auto loss = forward_per_sample_loss(tape, model, x, labels);
    tape.backward(trimmed_mean(tape, loss.node, plan));
    return parameter_gradients(tape, loss);
}

std::vector<Tensor> subset_recompute_gradients(const Model& model, const Tensor& x,
                                               std::span<const std::size_t> labels, const TrimPlan& plan) {
    if (model.batch_coupled()) {
        throw ContractError("subset recompute is not gradient-equivalent with batch-coupled layers");
    }
    if (plan.selected.size() != plan.k || plan.k == 0) {
        throw ContractError("subset recompute: invalid plan");
    }
    std::vector<std::size_t> rows = plan.selected;
    std::sort(rows.begin(), rows.end());
    std::vector<std::size_t> sub_labels(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= labels.size()) {
            throw IndexError("subset recompute: selected index out of range");
        }
        sub_labels[r] = labels[rows[r]];
    }
    const Tensor sub = gather_rows(x, std::span<const std::size_t>(rows));
    Tape tape;
    const auto loss = forward_per_sample_loss(tape, model, sub, sub_labels);
    tape.backward(tape.mean(loss.node));
    return parameter_gradients(tape, loss);
}

}  // namespace mbtrim
