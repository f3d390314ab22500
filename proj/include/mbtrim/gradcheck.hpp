#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mbtrim/autodiff.hpp"
#include "mbtrim/model.hpp"
#include "mbtrim/trim.hpp"

namespace mbtrim {

struct GradCheckOptions {
    double h = 1e-5;
    double tol = 1e-4;
    /// Elements checked per parameter tensor; 0 checks every element.
    std::size_t max_per_tensor = 64;
    std::uint64_t seed = 0;
};

struct ParamCheck {
    std::size_t param_index = 0;
    std::size_t checked = 0;
    /// Elements whose +-h probes changed a relu sign or a pooling argmax.
    std::size_t skipped = 0;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<ParamCheck> params;
    double tol = 0.0;

    double max_rel_error() const noexcept;
    std::size_t checked() const noexcept;
    std::size_t skipped() const noexcept;
    bool passed() const noexcept { return checked() > 0 && max_rel_error() < tol; }
};

/// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b) noexcept;

struct LossGraph {
    NodeId root;
    std::vector<NodeId> params;
};

/// Records a scalar loss of the given parameter values on the tape.
using LossBuilder = std::function<LossGraph(Tape&, std::span<const Tensor>)>;

/// Central differences (L(w+h) - L(w-h)) / 2h against the tape gradient.
/// Probes that cross a relu kink or flip a pooling argmax are skipped.
GradCheckReport grad_check(std::vector<Tensor> params, const LossBuilder& build, const GradCheckOptions& options);

/// Checks the model's batch loss: the plain mean when plan is null, the
/// trimmed mean otherwise.
GradCheckReport grad_check(const Model& model, const Tensor& x, std::span<const std::size_t> labels,
                           const GradCheckOptions& options, const TrimPlan* plan = nullptr);

}  // namespace mbtrim
