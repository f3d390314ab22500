#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mbtrim/model.hpp"

using namespace mbtrim;

namespace {

// Loss for one row of logits; the label-logit term is subtracted last.
double ce_oracle(const std::vector<double>& z, std::size_t label) {
    double top = z[0];
    for (double v : z) top = std::max(top, v);
    double acc = 0.0;
    for (double v : z) acc += std::exp(v - top);
    return std::log(acc) + top - z[label];
}

}  // namespace

TEST_CASE("architectures have the documented layer stacks") {
    const auto mlp = Model::mlp3(64, 10);
    REQUIRE(mlp.parameters().size() == 6);
    CHECK(mlp.parameters()[0].shape() == Shape{64, 256});
    CHECK(mlp.parameters()[1].shape() == Shape{256});
    CHECK(mlp.parameters()[2].shape() == Shape{256, 128});
    CHECK(mlp.parameters()[4].shape() == Shape{128, 10});
    CHECK(mlp.layers().size() == 5);

    const auto cnn = Model::tinycnn(3, 8, 8, 5);
    REQUIRE(cnn.parameters().size() == 6);
    CHECK(cnn.parameters()[0].shape() == Shape{16, 3, 3, 3});
    CHECK(cnn.parameters()[2].shape() == Shape{32, 16, 3, 3});
    CHECK(cnn.parameters()[4].shape() == Shape{32 * 2 * 2, 5});
    CHECK_FALSE(cnn.batch_coupled());

    CHECK_THROWS_AS(Model::tinycnn(3, 6, 8, 5), ParameterError);
    CHECK_THROWS_AS(parse_architecture("resnet34"), ParameterError);
}

TEST_CASE("He initialization") {
    Model a = Model::mlp3(100, 50);
    Model b = Model::mlp3(100, 50);
    Prng pa(5), pb(5);
    init_params(a, pa);
    init_params(b, pb);
    for (std::size_t i = 0; i < a.parameters().size(); ++i) CHECK(a.parameters()[i] == b.parameters()[i]);

    // first dense layer has fan_in 100
    const auto& w = a.parameters()[0].array();
    const double mean = w.mean();
    const double std = std::sqrt((w - mean).square().mean());
    CHECK(std::abs(std - std::sqrt(2.0 / 100.0)) < 0.2 * std::sqrt(2.0 / 100.0));

    for (std::size_t i = 1; i < a.parameters().size(); i += 2)
        for (double v : a.parameters()[i].values()) CHECK(v == 0.0);
}

TEST_CASE("per-sample cross-entropy matches closed forms") {
    Tape tape;
    const auto z = tape.input(Tensor({1, 2}, {0.0, 0.0}));
    const std::vector<std::size_t> zero{0};
    CHECK(tape.value(tape.softmax_ce_per_sample(z, zero))[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    const auto big = tape.input(Tensor({1, 2}, {1000.0, 0.0}));
    const double stable = tape.value(tape.softmax_ce_per_sample(big, zero))[0];
    CHECK(std::isfinite(stable));
    CHECK(stable == doctest::Approx(0.0));

    const auto wrong = tape.input(Tensor({1, 2}, {0.0, 1000.0}));
    CHECK(tape.value(tape.softmax_ce_per_sample(wrong, zero))[0] == doctest::Approx(1000.0));

    Prng prng(6);
    const auto logits = randn(prng, {6, 4}, 0.0, 3.0);
    const std::vector<std::size_t> labels{0, 3, 1, 2, 2, 0};
    const auto node = tape.softmax_ce_per_sample(tape.input(logits), labels);
    for (std::size_t i = 0; i < 6; ++i) {
        std::vector<double> row(logits.data() + i * 4, logits.data() + i * 4 + 4);
        CHECK(tape.value(node)[i] == doctest::Approx(ce_oracle(row, labels[i])).epsilon(1e-14));
        CHECK(tape.value(node)[i] >= 0.0);
    }
}

TEST_CASE("forward_per_sample_loss: symmetry, equivariance and label checks") {
    Prng prng(10);
    Model model = Model::mlp3(8, 3);
    init_params(model, prng);

    const auto row = randn(prng, {1, 8}, 0.0, 1.0);
    Tensor same({4, 8}, 0.0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 8; ++j) same(i, j) = row(0, j);
    Tape t1;
    const std::vector<std::size_t> ones(4, 1);
    const auto& equal = t1.value(forward_per_sample_loss(t1, model, same, ones).node);
    for (std::size_t i = 1; i < 4; ++i) CHECK(equal[i] == equal[0]);

    const auto x = randn(prng, {5, 8}, 0.0, 1.0);
    const std::vector<std::size_t> labels{0, 1, 2, 1, 0};
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    std::vector<std::size_t> permuted_labels(5);
    for (std::size_t i = 0; i < 5; ++i) permuted_labels[i] = labels[perm[i]];
    Tape t2, t3;
    const auto& base = t2.value(forward_per_sample_loss(t2, model, x, labels).node);
    const auto& moved =
        t3.value(forward_per_sample_loss(t3, model, gather_rows(x, std::span<const std::size_t>(perm)),
                                         permuted_labels)
                     .node);
    for (std::size_t i = 0; i < 5; ++i) CHECK(moved[i] == base[perm[i]]);

    Tape t4;
    const std::vector<std::size_t> bad{0, 1, 3, 1, 0};
    CHECK_THROWS_AS(forward_per_sample_loss(t4, model, x, bad), LabelError);
}

TEST_CASE("ascending mean of per-sample losses is the batch mean") {
    Prng prng(14);
    Model model = Model::mlp3(4, 3);
    init_params(model, prng);
    const auto x = randn(prng, {7, 4}, 0.0, 1.0);
    const std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2, 0};
    Tape tape;
    const auto loss = forward_per_sample_loss(tape, model, x, labels);
    double acc = 0.0;
    for (double v : tape.value(loss.node).values()) acc += v;
    CHECK(tape.value(tape.mean(loss.node))[0] == acc / 7.0);
}

TEST_CASE("top1_error counts argmax mistakes") {
    // weights are still zero, so the logits are just the final bias
    Model model = Model::mlp3(2, 3);
    auto params = model.parameters();
    params[5] = Tensor({3}, {0.0, 1.0, 0.0});
    const Tensor x({4, 2}, 0.5);
    CHECK(top1_error(model, x, std::vector<std::size_t>{1, 1, 1, 1}) == 0.0);
    CHECK(top1_error(model, x, std::vector<std::size_t>{1, 1, 0, 1}) == 0.25);

    // all logits equal: ties resolve to class 0
    params[5] = Tensor({3}, 0.0);
    CHECK(top1_error(model, x, std::vector<std::size_t>{0, 0, 0, 0}) == 0.0);

    CHECK_THROWS_AS(top1_error(model, x, std::vector<std::size_t>{}), ContractError);
}

TEST_CASE("untrained model sits near chance on balanced data") {
    Prng prng(77);
    Model model = Model::mlp3(16, 10);
    init_params(model, prng);
    const auto x = randn(prng, {4000, 16}, 0.0, 1.0);
    std::vector<std::size_t> labels(4000);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 10;
    CHECK(std::abs(top1_error(model, x, labels) - 0.9) <= 0.05);
}
