#include "mbtrim/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mbtrim {

double GradCheckReport::max_rel_error() const noexcept {
    double worst = 0.0;
    for (const auto& p : params) {
        worst = std::max(worst, p.max_rel_error);
    }
    return worst;
}

std::size_t GradCheckReport::checked() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params) {
        n += p.checked;
    }
    return n;
}

std::size_t GradCheckReport::skipped() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params) {
        n += p.skipped;
    }
    return n;
}

double relative_error(double a, double b) noexcept {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

namespace {

struct Evaluation {
    double loss;
    // relu input signs followed by pooling argmax positions
    std::vector<std::size_t> signature;
};

Evaluation evaluate(const LossBuilder& build, std::span<const Tensor> params) {
    Tape tape;
    const auto graph = build(tape, params);
    Evaluation out{tape.value(graph.root)[0], {}};
    for (std::size_t i = 0; i < tape.size(); ++i) {
        const Node& n = tape.node(NodeId{i});
        if (n.op == OpKind::relu) {
            const Tensor& z = tape.value(n.inputs[0]);
            for (double v : z.values()) {
                out.signature.push_back(v > 0.0 ? 1 : 0);
            }
        } else if (n.op == OpKind::maxpool2) {
            out.signature.insert(out.signature.end(), n.indices.begin(), n.indices.end());
        }
    }
    return out;
}

std::vector<std::size_t> probe_positions(std::size_t size, std::size_t limit, Prng& prng) {
    std::vector<std::size_t> all(size);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (limit == 0 || limit >= size) {
        return all;
    }
    // partial Fisher-Yates: the first `limit` slots become a uniform sample
    for (std::size_t i = 0; i < limit; ++i) {
        const auto j = i + static_cast<std::size_t>(prng.below(size - i));
        std::swap(all[i], all[j]);
    }
    all.resize(limit);
    std::sort(all.begin(), all.end());
    return all;
}

}  // namespace

GradCheckReport grad_check(std::vector<Tensor> params, const LossBuilder& build, const GradCheckOptions& options) {
    if (!(options.h > 0.0)) {
        throw ParameterError("grad_check: h must be > 0");
    }
    Tape tape;
    const auto graph = build(tape, params);
    tape.backward(graph.root);
    if (graph.params.size() != params.size()) {
        throw ContractError("grad_check: builder must report one node per parameter");
    }
    const auto base = evaluate(build, params);

    Prng prng(options.seed);
    GradCheckReport report{{}, options.tol};
    for (std::size_t p = 0; p < params.size(); ++p) {
        const Tensor& analytic = tape.grad(graph.params[p]);
        ParamCheck check{p, 0, 0, 0.0};
        for (auto e : probe_positions(params[p].size(), options.max_per_tensor, prng)) {
            const double original = params[p][e];
            params[p][e] = original + options.h;
            const auto plus = evaluate(build, params);
            params[p][e] = original - options.h;
            const auto minus = evaluate(build, params);
            params[p][e] = original;
            if (plus.signature != base.signature || minus.signature != base.signature) {
                ++check.skipped;
                continue;
            }
            const double numeric = (plus.loss - minus.loss) / (2.0 * options.h);
            check.max_rel_error = std::max(check.max_rel_error, relative_error(analytic[e], numeric));
            ++check.checked;
        }
        report.params.push_back(check);
    }
    return report;
}

GradCheckReport grad_check(const Model& model, const Tensor& x, std::span<const std::size_t> labels,
                           const GradCheckOptions& options, const TrimPlan* plan) {
    const LossBuilder build = [&](Tape& tape, std::span<const Tensor> values) {
        Model probe = model;
        std::copy(values.begin(), values.end(), probe.parameters().begin());
        const auto loss = forward_per_sample_loss(tape, probe, x, labels);
        const NodeId root = plan ? trimmed_mean(tape, loss.node, *plan) : tape.mean(loss.node);
        return LossGraph{root, loss.params};
    };
    const auto params = model.parameters();
    return grad_check(std::vector<Tensor>(params.begin(), params.end()), build, options);
}

}  // namespace mbtrim
