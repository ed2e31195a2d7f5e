#include "textgraph/layers.hpp"
#include "textgraph/oracles.hpp"
#include "textgraph/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace textgraph;
using namespace textgraph::layers;

namespace {

graphgen::EdgeList edge_list(const std::vector<std::pair<index_t, index_t>>& pairs, int heads = 1) {
    graphgen::EdgeList e;
    for (const auto& [s, t] : pairs) {
        e.src.push_back(s);
        e.dst.push_back(t);
    }
    graphgen::assign_heads(e, heads);
    return e;
}

void fill(Tensor t, real v) { std::fill(t.values().begin(), t.values().end(), v); }

}  // namespace

TEST_SUITE("layers") {

TEST_CASE("positional encoding") {
    const std::vector<index_t> pos{0, 1};
    const auto pe = positional_encoding(pos, 4);
    for (index_t c = 0; c < 4; ++c) CHECK(pe[c] == 1.0);
    CHECK(pe[4] == doctest::Approx(1.3817732906760363).epsilon(1e-15));
    CHECK(pe[5] == pe[4]);
    CHECK(pe[6] == doctest::Approx(std::sin(0.01) + std::cos(0.01)));
    CHECK_THROWS_AS(positional_encoding(pos, 3), ShapeError);

    std::vector<index_t> many(500);
    for (std::size_t i = 0; i < many.size(); ++i) many[i] = static_cast<index_t>(i);
    const auto big = positional_encoding(many, 16);
    for (auto v : big.values()) CHECK(std::abs(v) <= std::sqrt(2.0) + 1e-12);
}

TEST_CASE("GATv2 on an isolated node returns its neighbor projection") {
    ParameterStore ps(3);
    GATv2 gat(ps, "gat", 3, 2);
    const auto x = Tensor::from({1, 3}, {1, -2, 0.5});
    const auto out = gat(x, edge_list({}));
    CHECK(out.alpha.numel() == 0);
    const Matrix want = x.mat() * gat.theta.mat().rightCols(3).transpose();
    CHECK(out.y[0] == doctest::Approx(want(0, 0)));
    CHECK(out.y[1] == doctest::Approx(want(0, 1)));
}

TEST_CASE("GATv2 treats symmetric nodes alike") {
    ParameterStore ps(4);
    GATv2 gat(ps, "gat", 2, 2);
    const auto x = Tensor::from({2, 2}, {0.3, 0.7, 0.3, 0.7});
    const auto out = gat(x, edge_list({{0, 1}, {1, 0}}));
    CHECK(out.y[0] == doctest::Approx(out.y[2]));
    CHECK(out.y[1] == doctest::Approx(out.y[3]));
    CHECK(out.alpha[0] == doctest::Approx(0.5));
}

TEST_CASE("GATv2 matches the dense masked formulation on a line") {
    ParameterStore ps(5);
    GATv2 gat(ps, "gat", 3, 3);
    Rng rng(5);
    const auto x = Tensor::uniform({3, 3}, 1, rng);
    const std::vector<std::pair<index_t, index_t>> pairs{{0, 1}, {1, 2}, {1, 0}, {2, 1}};
    const auto out = gat(x, edge_list(pairs));
    Matrix alpha;
    const Matrix want = oracles::dense_gatv2(x.mat(), gat.theta.mat(), gat.a.mat(), pairs, gat.slope, &alpha);
    for (index_t i = 0; i < 9; ++i) CHECK(out.y[i] == doctest::Approx(want.data()[i]).epsilon(1e-12));
    for (std::size_t e = 0; e < pairs.size(); ++e) {
        CHECK(out.alpha[static_cast<index_t>(e)] == doctest::Approx(alpha(pairs[e].first, pairs[e].second)));
    }
    // Rows of the dense attention include the self term and sum to one.
    for (index_t r = 0; r < 3; ++r) CHECK(alpha.row(r).sum() == doctest::Approx(1.0));
}

TEST_CASE("sparse attention without aggregation weights is the update projection") {
    ParameterStore ps(6);
    SparseEdgeAttention att(ps, "att", 4, 2);
    fill(att.wagg, 0);
    Rng rng(6);
    const auto x = Tensor::uniform({3, 4}, 1, rng);
    const auto out = att(x, edge_list({{0, 1}, {1, 2}, {2, 0}, {0, 2}}, 2));
    for (index_t h = 0; h < 2; ++h) {
        const Matrix v = x.mat().middleCols(2 * h, 2) * att.wupd.mat().middleRows(2 * h, 2);
        for (index_t r = 0; r < 3; ++r) {
            for (index_t c = 0; c < 2; ++c) CHECK(out.y[r * 4 + 2 * h + c] == doctest::Approx(v(r, c)));
        }
    }
}

TEST_CASE("a single edge per head gets weight one over root M") {
    ParameterStore ps(7);
    SparseEdgeAttention att(ps, "att", 8, 2);
    Rng rng(7);
    const auto x = Tensor::uniform({3, 8}, 1, rng);
    const auto out = att(x, edge_list({{0, 1}, {2, 1}}, 2));
    REQUIRE(out.alpha.numel() == 2);
    CHECK(out.alpha[0] == doctest::Approx(0.5));
    CHECK(out.alpha[1] == doctest::Approx(0.5));
}

TEST_CASE("sparse attention flags match the scalar transcription") {
    Rng rng(8);
    for (int flags = 0; flags < 4; ++flags) {
        ParameterStore ps(static_cast<std::uint64_t>(flags));
        SparseEdgeAttention att(ps, "att", 6, 3);
        att.per_node_softmax = (flags & 1) != 0;
        att.pre_softmax_scaling = (flags & 2) != 0;
        const auto x = Tensor::uniform({5, 6}, 1, rng);
        std::vector<std::pair<index_t, index_t>> pairs;
        for (int e = 0; e < 12; ++e) {
            pairs.emplace_back(static_cast<index_t>(rng.below(5)), static_cast<index_t>(rng.below(5)));
        }
        const auto edges = edge_list(pairs, 3);
        const auto out = att(x, edges);
        std::vector<real> alpha;
        const Matrix want = oracles::scalar_sparse_attention(x.mat(), att.wq.mat(), att.wk.mat(), att.wagg.mat(),
                                                             att.wupd.mat(), 3, edges.src, edges.dst,
                                                             att.per_node_softmax, att.pre_softmax_scaling, &alpha);
        for (index_t i = 0; i < out.y.numel(); ++i) CHECK(out.y[i] == doctest::Approx(want.data()[i]).epsilon(1e-12));
        for (std::size_t e = 0; e < alpha.size(); ++e) CHECK(out.alpha[static_cast<index_t>(e)] == doctest::Approx(alpha[e]));
    }
}

TEST_CASE("character embedding gradient counts occurrences") {
    ParameterStore ps(9);
    CharEmbedding emb(ps, 10, 3);
    const std::vector<index_t> ids{1, 4, 1, 1, 9};
    Tape tape;
    {
        TapeScope scope(tape);
        tape.backward(ops::sum(emb(ids)));
    }
    const auto& g = emb.z.grad();
    for (index_t r = 0; r < 10; ++r) {
        const real count = r == 1 ? 3 : (r == 4 || r == 9) ? 1 : 0;
        for (index_t c = 0; c < 3; ++c) CHECK(g[static_cast<std::size_t>(r * 3 + c)] == count);
    }
}

TEST_CASE("char-to-token pooling matches a brute-force loop") {
    ParameterStore ps(10);
    CharToToken pool(ps, 2);
    Rng rng(10);
    const auto chars = Tensor::uniform({6, 2}, 1, rng);
    const std::vector<index_t> token{0, 0, 1, 2, 2, 2};
    const auto y = pool(chars, token, 3);
    for (index_t t = 0; t < 3; ++t) {
        std::vector<real> feat(4, 0);
        real count = 0;
        feat[2] = feat[3] = -1e300;
        for (index_t c = 0; c < 6; ++c) {
            if (token[static_cast<std::size_t>(c)] != t) continue;
            count += 1;
            for (index_t j = 0; j < 2; ++j) {
                feat[static_cast<std::size_t>(j)] += chars[c * 2 + j];
                feat[static_cast<std::size_t>(2 + j)] = std::max(feat[static_cast<std::size_t>(2 + j)], chars[c * 2 + j]);
            }
        }
        feat[0] /= count;
        feat[1] /= count;
        for (index_t o = 0; o < 2; ++o) {
            real want = pool.proj.b[o];
            for (index_t j = 0; j < 4; ++j) want += pool.proj.w[o * 4 + j] * feat[static_cast<std::size_t>(j)];
            CHECK(y[t * 2 + o] == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("sentiment injection types") {
    Rng rng(11);
    const auto x = Tensor::uniform({4, 6}, 1, rng);
    const std::vector<real> pol{0.7, 0, -0.7, 0}, subj{0.6, 0, 0.67, 0};
    const auto s = sentiment_features(pol, subj);
    CHECK(s.shape() == Shape{4, 2});
    CHECK(s[0] == doctest::Approx(0.7));
    CHECK(s[1] == doctest::Approx(0.6));
    for (int type = 1; type <= 3; ++type) {
        ParameterStore ps(static_cast<std::uint64_t>(type));
        SentimentInject inject(ps, "sent", type, 6, 4);
        const auto y = inject(x, s);
        CHECK(y.shape() == Shape{4, 6});
        const auto y0 = inject(x, Tensor::zeros({4, 2}));
        bool differs = false;
        for (index_t i = 0; i < 6; ++i) differs = differs || y[i] != y0[i];
        CHECK(differs);
        CHECK_THROWS_AS(inject(x, Tensor::zeros({3, 2})), ShapeError);
    }
    ParameterStore ps(1);
    SentimentInject type1(ps, "sent", 1, 6, 4);
    CHECK(type1.out_lin.w.shape() == Shape{6, 8});
}

TEST_CASE("embedding injection concatenates then rectifies") {
    ParameterStore ps(12);
    EmbeddingInject inject(ps, 2, 3);
    CHECK(inject.proj.w.shape() == Shape{2, 5});
    fill(inject.proj.w, 0);
    fill(inject.proj.b, 0);
    inject.proj.w.values()[4] = 1;  // output 0 reads embedding column 2
    inject.proj.w.values()[5] = -1;  // output 1 reads feature column 0
    const auto y = inject(Tensor::from({1, 2}, {2, 0}), Tensor::from({1, 3}, {0, 0, 5}));
    CHECK(y[0] == 5);
    CHECK(y[1] == 0);
}

TEST_CASE("global pool is the ELU of document means") {
    const auto x = Tensor::from({3, 1}, {1, 3, -2});
    const std::vector<index_t> doc{0, 0, 1};
    const auto y = global_pool(x, doc, 2);
    CHECK(y[0] == 2);
    CHECK(y[1] == doctest::Approx(std::exp(-2.0) - 1));
}

TEST_CASE("MLP head") {
    ParameterStore ps(13);
    MlpHead head(ps, 2, 2, 2);
    head.l1.w.values() = {1, 0, 0, 1};
    head.l1.b.values() = {0, 0};
    head.l2.w.values() = {1, 1, 1, -1};
    head.l2.b.values() = {0, 1};
    const auto y = head(Tensor::from({1, 2}, {3, -4}));
    CHECK(y[0] == 3);
    CHECK(y[1] == 4);
}

TEST_CASE("parameter initialization depends on seed and name only") {
    ParameterStore a(1), b(1), c(2);
    const auto ta = a.add_uniform("w", {3, 3}, 1);
    b.add_uniform("other", {2}, 1);
    const auto tb = b.add_uniform("w", {3, 3}, 1);
    const auto tc = c.add_uniform("w", {3, 3}, 1);
    CHECK(ta.values() == tb.values());
    CHECK(ta.values() != tc.values());
    CHECK(b.count() == 11);
    CHECK(b.find("other").numel() == 2);
}

}  // TEST_SUITE
