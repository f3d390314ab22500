#include "mbtrim/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mbtrim/gradcheck.hpp"
#include "mbtrim/model.hpp"
#include "mbtrim/trim.hpp"

namespace mbtrim {

namespace {

SuiteResult kernel_determinism(std::uint64_t seed) {
    Prng a(seed), b(seed);
    const auto x = randn(a, {3, 7}, 0.0, 1.0);
    const auto y = randn(b, {3, 7}, 0.0, 1.0);
    Tensor eye({7, 7}, 0.0);
    for (std::size_t i = 0; i < 7; ++i) {
        eye(i, i) = 1.0;
    }
    const bool ok = x == y && matmul(x, eye) == x;
    return {"kernel determinism", ok, ok ? "randn repeatable, A*I == A" : "kernel output differs"};
}

SuiteResult topk_oracle(std::uint64_t seed) {
    Prng prng(seed);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t batch = 1 + prng.below(64);
        const std::size_t k = 1 + prng.below(batch);
        std::vector<double> losses(batch);
        for (auto& v : losses) {
            // coarse grid so ties are common
            v = static_cast<double>(prng.below(8)) * 0.5;
        }
        std::vector<std::size_t> order(batch);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return losses[i] > losses[j]; });
        order.resize(k);
        const auto plan = select_topk(losses, k);
        if (plan.selected != order) {
            return {"top-k selection oracle", false, "mismatch at trial " + std::to_string(trial)};
        }
    }
    return {"top-k selection oracle", true, "1000 random cases"};
}

SuiteResult trimmed_gradient_contract(std::uint64_t seed) {
    Prng prng(seed);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t batch = 1 + prng.below(32);
        std::vector<double> values(batch);
        for (auto& v : values) {
            v = prng.uniform() * 3.0;
        }
        const auto plan = select_topk(values, 1 + prng.below(batch));
        Tape tape;
        const auto losses = tape.input(Tensor({batch}, values));
        tape.backward(trimmed_mean(tape, losses, plan));
        const Tensor& g = tape.grad(losses);
        const double share = 1.0 / static_cast<double>(plan.k);
        for (std::size_t i = 0; i < batch; ++i) {
            const bool picked = std::find(plan.selected.begin(), plan.selected.end(), i) != plan.selected.end();
            if (g[i] != (picked ? share : 0.0)) {
                return {"trimmed-mean gradient", false, "trial " + std::to_string(trial)};
            }
        }
    }
    return {"trimmed-mean gradient", true, "1/k on selected, 0 elsewhere"};
}

SuiteResult schedule_shape() {
    const TrimSchedule s{1.0, 0.2, 150};
    bool ok = fraction_at_epoch(s, 1) == 1.0 && fraction_at_epoch(s, 150) == 0.2;
    for (int e = 2; e <= 150 && ok; ++e) {
        ok = fraction_at_epoch(s, e) <= fraction_at_epoch(s, e - 1);
    }
    return {"fraction schedule", ok, ok ? "1.0 -> 0.2, non-increasing" : "schedule broken"};
}

double max_relative_gap(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    double worst = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p) {
        for (std::size_t i = 0; i < a[p].size(); ++i) {
            worst = std::max(worst, relative_error(a[p][i], b[p][i]));
        }
    }
    return worst;
}

SuiteResult subset_recompute(std::uint64_t seed) {
    Prng prng(seed);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const bool cnn = trial % 2 == 1;
        Model model = cnn ? Model::tinycnn(3, 8, 8, 5) : Model::mlp3(20, 5);
        init_params(model, prng);
        const std::size_t batch = 8;
        Shape shape = model.input_shape();
        shape.insert(shape.begin(), batch);
        const Tensor x = randn(prng, shape, 0.0, 1.0);
        std::vector<std::size_t> labels(batch);
        for (auto& l : labels) {
            l = prng.below(5);
        }
        Tape tape;
        const auto loss = forward_per_sample_loss(tape, model, x, labels);
        const auto plan = select_topk(tape.value(loss.node), 1 + prng.below(batch));
        worst = std::max(worst, max_relative_gap(masked_trimmed_gradients(model, x, labels, plan),
                                                 subset_recompute_gradients(model, x, labels, plan)));
    }
    const bool ok = worst <= 1e-10;
    return {"subset recompute", ok, "max relative gap " + std::to_string(worst)};
}

SuiteResult gradient_check(std::uint64_t seed) {
    Prng prng(seed);
    Model model = Model::mlp3(20, 5);
    init_params(model, prng);
    const Tensor x = randn(prng, {4, 20}, 0.0, 1.0);
    const std::vector<std::size_t> labels{0, 1, 2, 3};
    const auto report = grad_check(model, x, labels, {1e-5, 1e-4, 64, seed});
    return {"finite-difference gradient check", report.passed(),
            "max relative error " + std::to_string(report.max_rel_error()) + " over " +
                std::to_string(report.checked()) + " elements"};
}

}  // namespace

std::vector<SuiteResult> run_selftests(std::uint64_t seed) {
    return {kernel_determinism(seed), topk_oracle(seed),        trimmed_gradient_contract(seed),
            schedule_shape(),         subset_recompute(seed), gradient_check(seed)};
}

}  // namespace mbtrim
