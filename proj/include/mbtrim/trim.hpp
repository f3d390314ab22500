#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mbtrim/autodiff.hpp"
#include "mbtrim/model.hpp"
#include "mbtrim/tensor.hpp"

namespace mbtrim {

/// Linear annealing of the kept fraction p, constant within an epoch.
struct TrimSchedule {
    double p_start = 1.0;
    double p_end = 0.2;
    int total_epochs = 1;

    /// Throws ParameterError unless 0 < p_end <= p_start <= 1 and total_epochs >= 1.
    void validate() const;
};

/// p for a 1-based epoch; p_start at epoch 1 and p_end at the last epoch.
double fraction_at_epoch(const TrimSchedule& schedule, int epoch);

/// k = max(1, ceil(p * B)).
std::size_t trim_count(std::size_t batch_size, double p);

struct TrimPlan {
    double p = 1.0;
    std::size_t k = 0;
    /// Indices of the k largest losses, descending by loss, ties by index.
    std::vector<std::size_t> selected;
};

TrimPlan select_topk(std::span<const double> losses, std::size_t k);

inline TrimPlan select_topk(const Tensor& losses, std::size_t k) {
    return select_topk(losses.values(), k);
}

/// select_topk with k = trim_count(B, p); records p in the plan.
TrimPlan plan_batch(std::span<const double> losses, double p);

/// Scalar node (1/k) * sum of the selected losses. Backward puts 1/k on the
/// selected entries and 0 elsewhere.
NodeId trimmed_mean(Tape& tape, NodeId per_sample_losses, const TrimPlan& plan);

/// Parameter gradients of the trimmed mean taken through the full batch,
/// with unselected samples masked to zero gradient.
std::vector<Tensor> masked_trimmed_gradients(const Model& model, const Tensor& x,
                                             std::span<const std::size_t> labels, const TrimPlan& plan);

/// Gathers the selected samples (ascending index order) into a sub-batch and
/// backpropagates its mean loss. Only valid without batch-coupled layers.
std::vector<Tensor> subset_recompute_gradients(const Model& model, const Tensor& x,
                                               std::span<const std::size_t> labels, const TrimPlan& plan);

}  // namespace mbtrim
