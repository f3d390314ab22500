#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mbtrim/tensor.hpp"

using namespace mbtrim;

namespace {

// Direct transcription of the padded cross-correlation, one output at a time.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& bias) {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), F = w.dim(0);
    Tensor out({B, F, H, W}, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t col = 0; col < W; ++col) {
                    double acc = bias[f];
                    for (std::size_t c = 0; c < C; ++c)
                        for (int kh = 0; kh < 3; ++kh)
                            for (int kw = 0; kw < 3; ++kw) {
                                const long ih = static_cast<long>(h) + kh - 1;
                                const long iw = static_cast<long>(col) + kw - 1;
                                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W)) {
                                    continue;
                                }
                                acc += w[((f * C + c) * 3 + kh) * 3 + kw] *
                                       x[((b * C + c) * H + ih) * W + iw];
                            }
                    out[((b * F + f) * H + h) * W + col] = acc;
                }
    return out;
}

Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    Tensor c({a.dim(0), b.dim(1)}, 0.0);
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < b.dim(1); ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < a.dim(1); ++p) acc += a(i, p) * b(p, j);
            c(i, j) = acc;
        }
    return c;
}

}  // namespace

TEST_CASE("create fills and validates shapes") {
    const auto z = create({2, 2}, 0.0);
    CHECK(z.shape() == Shape{2, 2});
    for (double v : z.values()) CHECK(v == 0.0);

    const auto c = create({3}, 1.5);
    CHECK(c.size() == 3);
    for (double v : c.values()) CHECK(v == 1.5);

    CHECK_THROWS_AS(create({2, 0}, 0.0), ShapeError);
    CHECK_THROWS_AS(create({}, 0.0), ShapeError);
    CHECK_THROWS_AS(create({1, 1, 1, 1, 1}, 0.0), ShapeError);
    CHECK_THROWS_AS(Tensor({2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST_CASE("randn is deterministic and has the requested moments") {
    Prng a(7), b(7);
    CHECK(randn(a, {4}, 0.0, 1.0) == randn(b, {4}, 0.0, 1.0));

    Prng p(7);
    const auto before = p.state();
    randn(p, {5}, 0.0, 1.0);
    Prng q(before);
    for (int i = 0; i < 10; ++i) q.next_u64();
    CHECK(p.state() == q.state());  // two advances per element

    Prng big(11);
    const auto x = randn(big, {10000}, 0.0, 1.0);
    const double mean = x.array().mean();
    const double var = (x.array() - mean).square().mean();
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 0.05);

    Prng c(3);
    const auto fixed = randn(c, {4}, 5.0, 0.0);
    for (double v : fixed.values()) CHECK(v == 5.0);

    CHECK_THROWS_AS(randn(c, {4}, 0.0, -1.0), ParameterError);
}

TEST_CASE("matmul matches hand computation and identity") {
    const Tensor a({2, 2}, {1, 2, 3, 4});
    const Tensor b({2, 2}, {5, 6, 7, 8});
    CHECK(matmul(a, b) == Tensor({2, 2}, {19, 22, 43, 50}));

    Prng prng(1);
    const auto m = randn(prng, {3, 3}, 0.0, 1.0);
    Tensor eye({3, 3}, 0.0);
    for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
    CHECK(matmul(m, eye) == m);

    const auto r = randn(prng, {3, 5}, 0.0, 1.0);
    CHECK(matmul(matmul(m, eye), r) == matmul(m, r));

    CHECK_THROWS_AS(matmul(Tensor({2, 3}, 0.0), Tensor({2, 3}, 0.0)), ShapeError);
}

TEST_CASE("matmul agrees bit-exactly with the ascending-k oracle on random shapes") {
    Prng prng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 1 + prng.below(9), k = 1 + prng.below(9), n = 1 + prng.below(9);
        const auto a = randn(prng, {m, k}, 0.0, 1.0);
        const auto b = randn(prng, {k, n}, 0.0, 1.0);
        const auto c = matmul(a, b);
        CHECK(c.shape() == Shape{m, n});
        CHECK(c == matmul_oracle(a, b));
    }
}

TEST_CASE("conv2d padding, bias and identity kernel") {
    const Tensor ones({1, 1, 3, 3}, 1.0);
    const auto out = conv2d_forward(ones, Tensor({1, 1, 3, 3}, 1.0), Tensor({1}, 0.0));
    CHECK(out[4] == 9.0);
    CHECK(out[0] == 4.0);
    CHECK(out[8] == 4.0);
    CHECK(out[1] == 6.0);

    const auto constant = conv2d_forward(ones, Tensor({1, 1, 3, 3}, 0.0), Tensor({1}, 2.0));
    for (double v : constant.values()) CHECK(v == 2.0);

    Prng prng(2);
    const auto x = randn(prng, {1, 1, 3, 3}, 0.0, 1.0);
    Tensor eye({1, 1, 3, 3}, 0.0);
    eye[4] = 1.0;
    CHECK(conv2d_forward(x, eye, Tensor({1}, 0.0)) == x);

    // identity kernel on every channel: each filter sees the channel sum
    const auto x2 = randn(prng, {1, 2, 4, 4}, 0.0, 1.0);
    Tensor eye2({3, 2, 3, 3}, 0.0);
    for (std::size_t f = 0; f < 3; ++f)
        for (std::size_t c = 0; c < 2; ++c) eye2[(f * 2 + c) * 9 + 4] = 1.0;
    const auto summed = conv2d_forward(x2, eye2, Tensor({3}, 0.0));
    for (std::size_t f = 0; f < 3; ++f)
        for (std::size_t i = 0; i < 16; ++i) CHECK(summed[f * 16 + i] == x2[i] + x2[16 + i]);

    CHECK_THROWS_AS(conv2d_forward(Tensor({1, 2, 3, 3}, 0.0), Tensor({1, 1, 3, 3}, 0.0), Tensor({1}, 0.0)),
                    ShapeError);
    CHECK_THROWS_AS(conv2d_forward(Tensor({1, 1, 3, 3}, 0.0), Tensor({1, 1, 2, 2}, 0.0), Tensor({1}, 0.0)),
                    ShapeError);
}

TEST_CASE("conv2d matches the direct oracle on random shapes") {
    Prng prng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t B = 1 + prng.below(3), C = 1 + prng.below(3), H = 1 + prng.below(6),
                          W = 1 + prng.below(6), F = 1 + prng.below(4);
        const auto x = randn(prng, {B, C, H, W}, 0.0, 1.0);
        const auto w = randn(prng, {F, C, 3, 3}, 0.0, 1.0);
        const auto b = randn(prng, {F}, 0.0, 1.0);
        const auto out = conv2d_forward(x, w, b);
        REQUIRE(out.shape() == Shape{B, F, H, W});
        const auto ref = conv_oracle(x, w, b);
        for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("maxpool2 picks the window max with smallest-index ties") {
    const auto one = maxpool2_forward(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
    CHECK(one.output[0] == 4.0);
    CHECK(one.argmax[0] == 3);

    const auto tied = maxpool2_forward(Tensor({1, 1, 2, 2}, 7.0));
    CHECK(tied.argmax[0] == 0);

    std::vector<double> ramp(16);
    std::iota(ramp.begin(), ramp.end(), 0.0);
    const auto pooled = maxpool2_forward(Tensor({1, 1, 4, 4}, ramp));
    CHECK(pooled.output == Tensor({1, 1, 2, 2}, {5, 7, 13, 15}));

    CHECK_THROWS_AS(maxpool2_forward(Tensor({1, 1, 3, 4}, 0.0)), ShapeError);
}

TEST_CASE("gather_rows copies rows in index order") {
    const Tensor x({3, 1}, {1, 2, 3});
    const std::vector<std::size_t> pick{2, 0};
    CHECK(gather_rows(x, std::span<const std::size_t>(pick)) == Tensor({2, 1}, {3, 1}));

    Prng prng(4);
    const auto y = randn(prng, {5, 2, 3}, 0.0, 1.0);
    std::vector<std::size_t> all(5);
    std::iota(all.begin(), all.end(), std::size_t{0});
    CHECK(gather_rows(y, std::span<const std::size_t>(all)) == y);

    const std::vector<std::size_t> bad{5};
    CHECK_THROWS_AS(gather_rows(y, std::span<const std::size_t>(bad)), IndexError);
}

TEST_CASE("kernel output shapes depend only on input shapes") {
    Prng prng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t B = 1 + prng.below(4), C = 1 + prng.below(3), H = 2 * (1 + prng.below(4)),
                          W = 2 * (1 + prng.below(4));
        const auto x = randn(prng, {B, C, H, W}, 0.0, 1.0);
        CHECK(maxpool2_forward(x).output.shape() == Shape{B, C, H / 2, W / 2});
        CHECK(relu(x).shape() == x.shape());
        const auto flat = x.reshaped({B, C * H * W});
        CHECK(add_bias(flat, Tensor({C * H * W}, 1.0)).shape() == flat.shape());
    }
}
