#include "textgraph/gradcheck.hpp"
#include "textgraph/ops.hpp"
#include "textgraph/oracles.hpp"
#include "textgraph/rng.hpp"
#include "textgraph/tensor.hpp"

#include <doctest.h>

#include <cmath>

using namespace textgraph;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool grad = false) {
    return Tensor::uniform(std::move(shape), real(1), rng, grad);
}

std::vector<real> vals(const Tensor& t) { return t.values(); }

}  // namespace

TEST_SUITE("tensorcore") {

TEST_CASE("matmul with the identity") {
    Rng rng(1);
    const auto x = random_tensor({3, 4}, rng);
    const auto eye = Tensor::from({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
    CHECK(vals(ops::matmul(x, eye)) == vals(x));
    CHECK_THROWS_AS(ops::matmul(x, x), ShapeError);
}

TEST_CASE("linear and elementwise basics") {
    const auto x = Tensor::from({1, 2}, {1, 2});
    const auto w = Tensor::from({3, 2}, {1, 0, 0, 1, 1, 1});
    const auto b = Tensor::from({3}, {0, 0, -10});
    CHECK(vals(ops::linear(x, w, b)) == std::vector<real>{1, 2, -7});
    CHECK(vals(ops::relu(Tensor::from({3}, {-1, 0, 2}))) == std::vector<real>{0, 0, 2});
    Rng rng(3);
    const auto y = random_tensor({5, 5}, rng);
    CHECK(vals(ops::dropout(y, 0, true, rng)) == vals(y));
    CHECK(vals(ops::dropout(y, real(0.5), false, rng)) == vals(y));
}

TEST_CASE("dropout keeps the expectation") {
    Rng rng(9);
    const auto x = Tensor::full({200, 50}, real(1));
    const auto y = ops::dropout(x, real(0.3), true, rng);
    double total = 0;
    for (auto v : y.values()) {
        CHECK((v == 0 || std::abs(v - 1 / 0.7) < 1e-12));
        total += v;
    }
    CHECK(total / 10000.0 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("convolution output length") {
    CHECK(ops::conv_out_length(10, 5, 0, 1) == 6);
    CHECK(ops::conv_out_length(7, 3, 1, 1) == 7);
    CHECK(ops::conv_out_length(10, 3, 0, 2) == 4);
    CHECK_THROWS_AS(ops::conv_out_length(2, 5, 1, 1), ShapeError);
}

TEST_CASE("conv1d is a cross-correlation") {
    const auto x = Tensor::from({1, 3}, {1, 2, 3});
    const auto w = Tensor::from({1, 1, 3}, {1, 0, -1});
    const auto y = ops::conv1d(x, w, Tensor(), 1, 0);
    CHECK(y.shape() == Shape{1, 1});
    CHECK(y[0] == -2);
}

TEST_CASE("conv1d output length matches window counting") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const auto n = static_cast<index_t>(1 + rng.below(20));
        const auto k = static_cast<index_t>(1 + rng.below(5));
        const auto p = static_cast<index_t>(rng.below(3));
        const auto s = static_cast<index_t>(1 + rng.below(3));
        if (n + 2 * p < k) continue;
        index_t windows = 0;
        for (index_t start = -p; start + k <= n + p; start += s) ++windows;
        CHECK(ops::conv_out_length(n, k, p, s) == windows);
        const auto y = ops::conv1d(random_tensor({2, n}, rng), random_tensor({3, 2, k}, rng), Tensor(), s, p);
        CHECK(y.shape() == Shape{3, windows});
    }
}

TEST_CASE("depthwise separable convolution with identity weights") {
    Rng rng(2);
    const auto x = random_tensor({3, 8}, rng);
    const auto depth = Tensor::from({3, 1, 3}, {0, 1, 0, 0, 1, 0, 0, 1, 0});
    const auto point = Tensor::from({3, 3, 1}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const auto y = ops::depthwise_separable_conv1d(x, depth, point, Tensor(), 1, 1);
    CHECK(y.shape() == x.shape());
    for (index_t i = 0; i < x.numel(); ++i) CHECK(y[i] == doctest::Approx(x[i]));
    const auto z = ops::depthwise_separable_conv1d(x, depth, Tensor::from({5, 3, 1}, std::vector<real>(15, 1)),
                                                   Tensor(), 2, 0);
    CHECK(z.shape() == Shape{5, 3});
}

TEST_CASE("segment-aware convolution never mixes segments") {
    Rng rng(12);
    const auto w = random_tensor({2, 2, 3}, rng);
    const auto x = random_tensor({9, 2}, rng);
    const std::vector<index_t> segments{0, 4};
    const auto joint = ops::conv1d_nc(x, w, Tensor(), 1, segments);
    const auto left = ops::conv1d_nc(ops::slice_rows(x, 0, 4), w, Tensor(), 1);
    const auto right = ops::conv1d_nc(ops::slice_rows(x, 4, 9), w, Tensor(), 1);
    for (index_t i = 0; i < 8; ++i) CHECK(joint[i] == doctest::Approx(left[i]));
    for (index_t i = 0; i < 10; ++i) CHECK(joint[8 + i] == doctest::Approx(right[i]));
}

TEST_CASE("scatter reductions") {
    const auto x = Tensor::from({2, 1}, {2, 4});
    const std::vector<index_t> same{0, 0};
    CHECK(vals(ops::scatter_reduce(x, same, 1, ops::Reduce::mean)) == std::vector<real>{3});
    const auto y = Tensor::from({3, 1}, {1, 5, 3});
    const std::vector<index_t> idx{0, 0, 1};
    CHECK(vals(ops::scatter_reduce(y, idx, 2, ops::Reduce::max)) == std::vector<real>{5, 3});
    CHECK(vals(ops::scatter_reduce(y, idx, 3, ops::Reduce::sum)) == std::vector<real>{6, 3, 0});
    const std::vector<index_t> bad{0, 3, 1};
    CHECK_THROWS(ops::scatter_reduce(y, bad, 2, ops::Reduce::sum));
}

TEST_CASE("scatter matches the row loop oracle") {
    Rng rng(21);
    for (auto mode : {ops::Reduce::sum, ops::Reduce::mean, ops::Reduce::max}) {
        for (int trial = 0; trial < 30; ++trial) {
            const auto n = static_cast<index_t>(1 + rng.below(40));
            const auto out = static_cast<index_t>(1 + rng.below(10));
            std::vector<index_t> index(static_cast<std::size_t>(n));
            for (auto& i : index) i = static_cast<index_t>(rng.below(static_cast<std::uint64_t>(out)));
            const auto x = random_tensor({n, 3}, rng);
            const auto got = ops::scatter_reduce(x, index, out, mode);
            const Matrix want = oracles::brute_force_scatter(x.mat(), index, out, mode);
            for (index_t i = 0; i < got.numel(); ++i) CHECK(got[i] == want.data()[i]);
        }
    }
}

TEST_CASE("gather then scatter-mean recovers repeated rows") {
    Rng rng(4);
    const auto x = random_tensor({5, 3}, rng);
    const std::vector<index_t> rep{0, 0, 1, 2, 2, 2, 3, 4, 4};
    const auto back = ops::scatter_reduce(ops::gather_rows(x, rep), rep, 5, ops::Reduce::mean);
    for (index_t i = 0; i < x.numel(); ++i) CHECK(back[i] == doctest::Approx(x[i]));
    std::vector<index_t> identity{0, 1, 2, 3, 4};
    CHECK(vals(ops::gather_rows(x, identity)) == vals(x));
}

TEST_CASE("segment softmax") {
    const std::vector<index_t> one{0, 0};
    CHECK(vals(ops::segment_softmax(Tensor::from({2}, {real(0.5), real(0.5)}), one, 1)) ==
          std::vector<real>{0.5, 0.5});
    const auto p = ops::segment_softmax(Tensor::from({2}, {std::log(real(2)), 0}), one, 1);
    CHECK(p[0] == doctest::Approx(2.0 / 3.0));
    CHECK(p[1] == doctest::Approx(1.0 / 3.0));

    Rng rng(6);
    std::vector<index_t> seg(20);
    for (auto& s : seg) s = static_cast<index_t>(rng.below(4));
    const auto scores = random_tensor({20}, rng);
    const auto a = ops::segment_softmax(scores, seg, 4, real(0.25));
    std::vector<double> sums(4, 0.0);
    std::vector<int> present(4, 0);
    for (std::size_t e = 0; e < 20; ++e) {
        sums[static_cast<std::size_t>(seg[e])] += a[static_cast<index_t>(e)];
        present[static_cast<std::size_t>(seg[e])] = 1;
    }
    for (std::size_t s = 0; s < 4; ++s) {
        if (present[s]) CHECK(sums[s] == doctest::Approx(0.25).epsilon(1e-12));
    }
    const auto want = oracles::brute_force_segment_softmax(scores.values(), seg, 4, real(0.25));
    for (std::size_t e = 0; e < 20; ++e) CHECK(a[static_cast<index_t>(e)] == doctest::Approx(want[e]).epsilon(1e-12));
}

TEST_CASE("feature norm") {
    const auto gamma = Tensor::full({2}, 1);
    const auto beta = Tensor::zeros({2});
    const auto y = ops::feature_norm(Tensor::from({2, 2}, {7, -1, 7, 1}), gamma, beta);
    CHECK(y[0] == 0);
    CHECK(y[2] == 0);
    CHECK(y[1] == doctest::Approx(-1).epsilon(1e-4));
    CHECK(y[3] == doctest::Approx(1).epsilon(1e-4));

    Rng rng(8);
    const auto x = random_tensor({64, 3}, rng);
    const auto g = Tensor::from({3}, {2, -0.5, 1});
    const auto b = Tensor::from({3}, {1, 0, -3});
    const auto z = ops::feature_norm(x, g, b);
    for (index_t c = 0; c < 3; ++c) {
        double mean = 0, sq = 0;
        for (index_t r = 0; r < 64; ++r) mean += z[r * 3 + c];
        mean /= 64;
        for (index_t r = 0; r < 64; ++r) sq += (z[r * 3 + c] - mean) * (z[r * 3 + c] - mean);
        CHECK(mean == doctest::Approx(b[c]).epsilon(1e-9));
        CHECK(std::sqrt(sq / 64) == doctest::Approx(std::abs(g[c])).epsilon(1e-3));
    }
}

TEST_CASE("cross entropy of uniform logits is log C") {
    const auto logits = Tensor::zeros({4, 3});
    const std::vector<int> labels{0, 1, 2, 0};
    CHECK(ops::cross_entropy(logits, labels).item() == doctest::Approx(std::log(3.0)));
    const std::vector<int> bad{0, 1, 3, 0};
    CHECK_THROWS(ops::cross_entropy(logits, bad));
}

TEST_CASE("gradient of a sum of squares") {
    Rng rng(10);
    auto x = random_tensor({4, 3}, rng, true);
    const auto r = grad_check([&] { return ops::sum(ops::mul(x, x)); }, {x});
    CHECK(r.finite);
    CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("tape gradients flow through composite expressions") {
    Rng rng(14);
    auto x = random_tensor({6, 4}, rng, true);
    auto w = random_tensor({3, 4}, rng, true);
    std::vector<index_t> seg{0, 1, 1, 2, 0, 2};
    auto f = [&] {
        auto h = ops::elu(ops::linear(x, w, Tensor()));
        return ops::mean(ops::scatter_reduce(ops::sigmoid(h), seg, 3, ops::Reduce::max));
    };
    CHECK(grad_check(f, {x, w}).passed(1e-6));
}

TEST_CASE("forward passes are bit-identical across repetitions") {
    Rng rng(15);
    const auto x = random_tensor({50, 16}, rng);
    const auto w = random_tensor({16, 16, 3}, rng);
    const auto a = ops::conv1d_nc(x, w, Tensor(), 1);
    const auto b = ops::conv1d_nc(x, w, Tensor(), 1);
    CHECK(vals(a) == vals(b));
    const auto m1 = ops::matmul(x, ops::transpose(x));
    const auto m2 = ops::matmul(x, ops::transpose(x));
    CHECK(vals(m1) == vals(m2));
}

}  // TEST_SUITE
