#include <doctest.h>

#include <cmath>

#include "mbtrim/autodiff.hpp"
#include "mbtrim/gradcheck.hpp"
#include "mbtrim/model.hpp"

using namespace mbtrim;

TEST_CASE("forward ops record kernel values") {
    Tape tape;
    const auto x = tape.input(Tensor({2}, {-1.0, 2.0}));
    CHECK(tape.value(tape.relu(x)) == Tensor({2}, {0.0, 2.0}));

    const auto row = tape.input(Tensor({1, 2}, {1.0, 1.0}));
    const auto bias = tape.input(Tensor({2}, {1.0, 2.0}));
    CHECK(tape.value(tape.add_bias(row, bias)) == Tensor({1, 2}, {2.0, 3.0}));

    Prng prng(3);
    const auto a = randn(prng, {3, 4}, 0.0, 1.0);
    const auto b = randn(prng, {4, 2}, 0.0, 1.0);
    CHECK(tape.value(tape.matmul(tape.input(a), tape.input(b))) == matmul(a, b));

    CHECK_THROWS_AS(tape.matmul(tape.input(a), tape.input(a)), ShapeError);
    CHECK(tape.node(NodeId{0}).op == OpKind::input);
}

TEST_CASE("node inputs reference earlier nodes and ids are contiguous") {
    Tape tape;
    const auto x = tape.input(Tensor({2, 3}, 1.0));
    const auto w = tape.input(Tensor({3, 2}, 0.5));
    tape.sum(tape.relu(tape.matmul(x, w)));
    for (std::size_t i = 0; i < tape.size(); ++i) {
        const auto& n = tape.node(NodeId{i});
        CHECK(n.id.index == i);
        for (auto in : n.inputs) CHECK(in.index < i);
    }
}

TEST_CASE("backward of sum and relu") {
    Tape tape;
    const auto w = tape.input(Tensor({2, 3}, 0.7));
    tape.backward(tape.sum(w));
    for (double g : tape.grad(w).values()) CHECK(g == 1.0);

    Tape t2;
    const auto x = t2.input(Tensor({2}, {-1.0, 2.0}));
    t2.backward(t2.sum(t2.relu(x)));
    CHECK(t2.grad(x) == Tensor({2}, {0.0, 1.0}));

    Tape t3;
    const auto z = t3.input(Tensor({1}, 0.0));
    t3.backward(t3.sum(t3.relu(z)));
    CHECK(t3.grad(z)[0] == 0.0);  // subgradient at exactly zero
}

TEST_CASE("backward rejects non-scalar roots and grads need a backward pass") {
    Tape tape;
    const auto x = tape.input(Tensor({3}, 1.0));
    CHECK_THROWS_AS(tape.grad(x), ContractError);
    CHECK_THROWS_AS(tape.backward(x), ContractError);
}

TEST_CASE("gradient shapes match values and backward is idempotent") {
    Prng prng(8);
    Model model = Model::mlp3(6, 3);
    init_params(model, prng);
    const auto x = randn(prng, {5, 6}, 0.0, 1.0);
    const std::vector<std::size_t> labels{0, 1, 2, 0, 1};

    Tape tape;
    const auto loss = forward_per_sample_loss(tape, model, x, labels);
    const auto root = tape.mean(loss.node);
    tape.backward(root);
    for (std::size_t i = 0; i < tape.size(); ++i) {
        CHECK(tape.grad(NodeId{i}).shape() == tape.value(NodeId{i}).shape());
    }
    const auto first = parameter_gradients(tape, loss);
    tape.backward(root);
    const auto second = parameter_gradients(tape, loss);
    for (std::size_t p = 0; p < first.size(); ++p) CHECK(first[p] == second[p]);
}

namespace {

struct ScaledGrads {
    std::vector<Tensor> plain;
    std::vector<Tensor> scaled;
};

ScaledGrads scaled_gradients(double c) {
    Prng prng(21);
    Model model = Model::mlp3(5, 4);
    init_params(model, prng);
    const auto x = randn(prng, {3, 5}, 0.0, 1.0);
    const std::vector<std::size_t> labels{3, 1, 0};

    Tape plain;
    const auto l1 = forward_per_sample_loss(plain, model, x, labels);
    plain.backward(plain.mean(l1.node));

    Tape scaled;
    const auto l2 = forward_per_sample_loss(scaled, model, x, labels);
    scaled.backward(scaled.scalar_scale(scaled.mean(l2.node), c));
    return {parameter_gradients(plain, l1), parameter_gradients(scaled, l2)};
}

}  // namespace

TEST_CASE("scaling the root by a power of two scales every gradient exactly") {
    const auto [g, gc] = scaled_gradients(4.0);
    for (std::size_t p = 0; p < g.size(); ++p)
        for (std::size_t i = 0; i < g[p].size(); ++i) CHECK(gc[p][i] == 4.0 * g[p][i]);
}

TEST_CASE("scaling the root scales every gradient") {
    // Elementwise 1e-12 relative. Entries produced by near-cancelling sums can
    // exceed this because c is applied before the sums instead of after.
    const double c = 3.7;
    const auto [g, gc] = scaled_gradients(c);
    for (std::size_t p = 0; p < g.size(); ++p)
        for (std::size_t i = 0; i < g[p].size(); ++i) CHECK(relative_error(gc[p][i], c * g[p][i]) <= 1e-12);
}

TEST_CASE("gather_rows backward scatters into source rows") {
    Tape tape;
    const auto x = tape.input(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
    const std::vector<std::size_t> idx{2, 0, 2};
    const auto g = tape.gather_rows(x, idx);
    CHECK(tape.value(g) == Tensor({3, 2}, {5, 6, 1, 2, 5, 6}));
    tape.backward(tape.sum(g));
    CHECK(tape.grad(x) == Tensor({3, 2}, {1, 1, 0, 0, 2, 2}));
}

TEST_CASE("maxpool backward routes to the stored argmax") {
    Tape tape;
    const auto x = tape.input(Tensor({1, 1, 2, 4}, {1, 9, 3, 3, 2, 0, 3, 1}));
    tape.backward(tape.sum(tape.maxpool2(x)));
    CHECK(tape.grad(x) == Tensor({1, 1, 2, 4}, {0, 1, 1, 0, 0, 0, 0, 0}));
}

TEST_CASE("trimmed_mean node gradient is 1/k on the selection") {
    Tape tape;
    const auto losses = tape.input(Tensor({4}, {1, 2, 3, 4}));
    const std::vector<std::size_t> top2{3, 2};
    const auto root = tape.trimmed_mean(losses, top2);
    CHECK(tape.value(root)[0] == 3.5);
    tape.backward(root);
    CHECK(tape.grad(losses) == Tensor({4}, {0, 0, 0.5, 0.5}));

    const std::vector<std::size_t> dup{1, 1};
    CHECK_THROWS_AS(tape.trimmed_mean(losses, dup), ContractError);
}

TEST_CASE("grad_check on a closed-form quadratic") {
    // L = theta^2 via a 1x1 matmul; dL/dtheta = 2 theta = 6 at theta = 3
    const LossBuilder square = [](Tape& tape, std::span<const Tensor> params) {
        const auto t = tape.input(params[0]);
        return LossGraph{tape.reshape(tape.matmul(t, t), {1}), {t}};
    };
    const auto report = grad_check({Tensor({1, 1}, 3.0)}, square, {1e-5, 1e-8, 0, 0});
    CHECK(report.checked() == 1);
    CHECK(report.max_rel_error() < 1e-8);

    CHECK(relative_error(0.0, 0.0) == 0.0);
    CHECK(relative_error(6.0, 6.0) == 0.0);
    CHECK_THROWS_AS(grad_check({Tensor({1, 1}, 3.0)}, square, {0.0, 1e-4, 0, 0}), ParameterError);
}

TEST_CASE("finite differences agree with backward for both architectures") {
    Prng prng(31);
    const std::vector<std::size_t> labels{0, 4, 2, 1};

    Model mlp = Model::mlp3(20, 5);
    init_params(mlp, prng);
    const auto xm = randn(prng, {4, 20}, 0.0, 1.0);
    const auto rm = grad_check(mlp, xm, labels, {1e-5, 1e-4, 64, 1});
    CHECK(rm.passed());
    CHECK(rm.params.size() == 6);

    Model cnn = Model::tinycnn(3, 8, 8, 5);
    init_params(cnn, prng);
    const auto xc = randn(prng, {4, 3, 8, 8}, 0.0, 1.0);
    const auto rc = grad_check(cnn, xc, labels, {1e-5, 1e-4, 64, 2});
    CHECK(rc.passed());
    CHECK(rc.params.size() == 6);
}
