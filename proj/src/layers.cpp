#include "textgraph/layers.hpp"
#include "textgraph/rng.hpp"

#include <cmath>
#include <numeric>

namespace textgraph::layers {

namespace {

real inv_sqrt(index_t n) { return real(1) / std::sqrt(static_cast<real>(n)); }

}  // namespace

Tensor ParameterStore::add(const std::string& name, Tensor t) {
    for (const auto& p : params_) {
        if (p.name() == name) throw ConfigError("parameter '" + name + "' registered twice");
    }
    t.set_name(name).set_requires_grad(true);
    params_.push_back(t);
    return t;
}

Tensor ParameterStore::add_uniform(const std::string& name, Shape shape, real bound) {
    Rng rng(seed_, Stream::init, {fnv1a(name)});
    return add(name, Tensor::uniform(std::move(shape), bound, rng));
}

Tensor ParameterStore::add_normal(const std::string& name, Shape shape, real stddev) {
    Rng rng(seed_, Stream::init, {fnv1a(name)});
    return add(name, Tensor::normal(std::move(shape), stddev, rng));
}

Tensor ParameterStore::add_constant(const std::string& name, Shape shape, real value) {
    return add(name, Tensor::full(std::move(shape), value));
}

Tensor ParameterStore::find(const std::string& name) const {
    for (const auto& p : params_) {
        if (p.name() == name) return p;
    }
    throw ArgumentError("no parameter named '" + name + "'");
}

index_t ParameterStore::count() const {
    index_t n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

Linear::Linear(ParameterStore& ps, const std::string& name, index_t in, index_t out, bool bias) {
    w = ps.add_uniform(name + ".w", {out, in}, inv_sqrt(in));
    if (bias) b = ps.add_uniform(name + ".b", {out}, inv_sqrt(in));
}

Conv1d::Conv1d(ParameterStore& ps, const std::string& name, index_t in, index_t out, index_t k, bool bias)
    : padding((k - 1) / 2) {
    if (k % 2 == 0) throw ConfigError("Conv1d '" + name + "': kernel size must be odd");
    w = ps.add_uniform(name + ".w", {out, in, k}, inv_sqrt(in * k));
    if (bias) b = ps.add_uniform(name + ".b", {out}, inv_sqrt(in * k));
}

CharEmbedding::CharEmbedding(ParameterStore& ps, index_t charset, index_t d) {
    z = ps.add_normal("char_embedding.z", {charset, d}, real(1));
}

CharBlock::CharBlock(ParameterStore& ps, index_t d)
    : conv1(ps, "char_block.conv1", d, d, 5), conv2(ps, "char_block.conv2", d, d, 5) {}

Tensor CharBlock::operator()(const Tensor& x, std::span<const index_t> segments) const {
    return conv2(conv1(x, segments, true), segments, true);
}

CharToToken::CharToToken(ParameterStore& ps, index_t d) : proj(ps, "char_to_token.proj", 2 * d, d) {}

Tensor CharToToken::operator()(const Tensor& chars, std::span<const index_t> char_token_index,
                               index_t n_tokens) const {
    auto mean = ops::scatter_reduce(chars, char_token_index, n_tokens, ops::Reduce::mean);
    auto max = ops::scatter_reduce(chars, char_token_index, n_tokens, ops::Reduce::max);
    return proj(ops::concat_cols({mean, max}));
}

Tensor positional_encoding(std::span<const index_t> positions, index_t d) {
    if (d % 2 != 0) throw ShapeError("positional_encoding: dimension " + std::to_string(d) + " is odd");
    const auto n = static_cast<index_t>(positions.size());
    auto out = Tensor::zeros({n, d});
    auto m = out.mat();
    for (index_t i = 0; i < d / 2; ++i) {
        const double denom = std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
        for (index_t r = 0; r < n; ++r) {
            const double theta = static_cast<double>(positions[static_cast<std::size_t>(r)]) / denom;
            const auto v = static_cast<real>(std::sin(theta) + std::cos(theta));
            m(r, 2 * i) = v;
            m(r, 2 * i + 1) = v;
        }
    }
    return out;
}

GATv2::GATv2(ParameterStore& ps, const std::string& name, index_t d, index_t d_out, real slope_) : slope(slope_) {
    theta = ps.add_uniform(name + ".theta", {d_out, 2 * d}, inv_sqrt(2 * d));
    a = ps.add_uniform(name + ".a", {1, d_out}, inv_sqrt(d_out));
}

GraphOutput GATv2::operator()(const Tensor& x, const graphgen::EdgeList& edges) const {
    const auto n = x.rows(), d = x.cols();
    if (theta.dim(1) != 2 * d) throw ShapeError("gatv2: features " + x.shape_str() + " for theta " + theta.shape_str());
    const auto E = edges.size();
    std::vector<index_t> src(edges.src.begin(), edges.src.end());
    std::vector<index_t> dst(edges.dst.begin(), edges.dst.end());
    for (index_t i = 0; i < n; ++i) {
        src.push_back(i);
        dst.push_back(i);
    }
    auto p_center = ops::linear(x, ops::slice_cols(theta, 0, d), Tensor());
    auto p_neighbor = ops::linear(x, ops::slice_cols(theta, d, 2 * d), Tensor());
    auto att = ops::gatv2_attention(p_center, p_neighbor, a, src, dst, slope);
    GraphOutput out;
    out.y = att.y;
    out.alpha = Tensor::from({E}, std::vector<real>(att.alpha.values().begin(), att.alpha.values().begin() + E));
    return out;
}

SparseEdgeAttention::SparseEdgeAttention(ParameterStore& ps, const std::string& name, index_t d, index_t heads_)
    : heads(heads_) {
    if (heads < 1 || d % heads != 0) {
        throw ShapeError("sparse_edge_attention: dimension " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
    }
    head_dim = d / heads;
    const auto bound = inv_sqrt(head_dim);
    wq = ps.add_uniform(name + ".wq", {d, head_dim}, bound);
    wk = ps.add_uniform(name + ".wk", {d, head_dim}, bound);
    wagg = ps.add_uniform(name + ".wagg", {d, head_dim}, bound);
    wupd = ps.add_uniform(name + ".wupd", {d, head_dim}, bound);
}

GraphOutput SparseEdgeAttention::operator()(const Tensor& x, const graphgen::EdgeList& edges) const {
    const auto n = x.rows(), d = x.cols();
    if (d != heads * head_dim) {
        throw ShapeError("sparse_edge_attention: features " + x.shape_str() + " for " + std::to_string(heads) + "x" +
                         std::to_string(head_dim) + " heads");
    }
    const auto E = edges.size();
    if (E % heads != 0) {
        throw ShapeError("sparse_edge_attention: " + std::to_string(E) + " edges not divisible by " +
                         std::to_string(heads) + " heads");
    }
    const auto per = E / heads;
    const auto M = head_dim;
    const real inv_sqrt_m = inv_sqrt(M);
    std::vector<Tensor> outputs;
    std::vector<real> alpha_all;
    alpha_all.reserve(static_cast<std::size_t>(E));
    for (index_t h = 0; h < heads; ++h) {
        auto xh = ops::slice_cols(x, h * M, (h + 1) * M);
        auto v_upd = ops::matmul(xh, ops::slice_rows(wupd, h * M, (h + 1) * M));
        if (per == 0) {
            outputs.push_back(v_upd);
            continue;
        }
        std::span<const index_t> src(edges.src.data() + h * per, static_cast<std::size_t>(per));
        std::span<const index_t> dst(edges.dst.data() + h * per, static_cast<std::size_t>(per));
        // Both endpoint slots summed inside the contractions.
        auto s = ops::add(ops::gather_rows(xh, src), ops::gather_rows(xh, dst));
        auto q = ops::matmul(s, ops::slice_rows(wq, h * M, (h + 1) * M));
        auto k = ops::matmul(s, ops::slice_rows(wk, h * M, (h + 1) * M));
        auto scores = ops::row_dot(q, k);
        std::vector<index_t> segment;
        index_t n_segments = 1;
        if (per_node_softmax) {
            segment.assign(src.begin(), src.end());
            n_segments = n;
        } else {
            segment.assign(static_cast<std::size_t>(per), 0);
        }
        Tensor alpha;
        if (pre_softmax_scaling) {
            alpha = ops::segment_softmax(ops::scale(scores, inv_sqrt_m), segment, n_segments);
        } else {
            alpha = ops::segment_softmax(scores, segment, n_segments, inv_sqrt_m);
        }
        alpha_all.insert(alpha_all.end(), alpha.values().begin(), alpha.values().end());
        auto v_agg = ops::scale_rows(ops::matmul(s, ops::slice_rows(wagg, h * M, (h + 1) * M)), alpha);
        auto y = ops::add(v_upd, ops::scatter_reduce(v_agg, src, n, ops::Reduce::sum));
        outputs.push_back(ops::add(y, ops::scatter_reduce(v_agg, dst, n, ops::Reduce::sum)));
    }
    GraphOutput out;
    out.y = heads == 1 ? outputs[0] : ops::concat_cols(outputs);
    const auto n_alpha = static_cast<index_t>(alpha_all.size());
    out.alpha = Tensor::from({n_alpha}, std::move(alpha_all));
    return out;
}

FeatureNorm::FeatureNorm(ParameterStore& ps, const std::string& name, index_t d) {
    gamma = ps.add_constant(name + ".gamma", {d}, real(1));
    beta = ps.add_constant(name + ".beta", {d}, real(0));
}

CnnGnnLayer::CnnGnnLayer(ParameterStore& ps, const std::string& name_, index_t d, GnnVariant variant_, index_t heads,
                         real dropout_, index_t extra_conv_channels, real gat_slope)
    : variant(variant_), dropout(dropout_), name(name_) {
    if (variant == GnnVariant::gatv2) {
        gat = GATv2(ps, name + ".gat", d, d, gat_slope);
    } else {
        attention = SparseEdgeAttention(ps, name + ".attention", d, heads);
    }
    // The normalization that follows cancels any bias.
    conv = Conv1d(ps, name + ".conv", d + extra_conv_channels, d, 3, false);
    norm = FeatureNorm(ps, name + ".norm", d);
}

GraphOutput CnnGnnLayer::operator()(const Tensor& x, const graphgen::EdgeList& edges, const ForwardContext& ctx,
                                    std::span<const index_t> segments, const Tensor& conv_extra) const {
    auto g = variant == GnnVariant::gatv2 ? gat(x, edges) : attention(x, edges);
    const auto conv_in = conv_extra.defined() ? ops::concat_cols({x, conv_extra}) : x;
    auto h = ops::relu(norm(ops::add(g.y, conv(conv_in, segments))));
    Rng rng(ctx.seed, Stream::dropout, {ctx.step, fnv1a(name)});
    g.y = ops::dropout(h, dropout, ctx.training, rng);
    return g;
}

Tensor sentiment_features(std::span<const real> polarity, std::span<const real> subjectivity) {
    if (polarity.size() != subjectivity.size()) throw ShapeError("sentiment_features: length mismatch");
    const auto n = static_cast<index_t>(polarity.size());
    auto out = Tensor::zeros({n, 2});
    for (index_t i = 0; i < n; ++i) {
        out.data()[2 * i] = polarity[static_cast<std::size_t>(i)];
        out.data()[2 * i + 1] = subjectivity[static_cast<std::size_t>(i)];
    }
    return out;
}

SentimentInject::SentimentInject(ParameterStore& ps, const std::string& name, int type_, index_t d, index_t expand)
    : type(type_) {
    switch (type) {
        case 1:
            out_lin = Linear(ps, name + ".out", d + 2, d);
            break;
        case 2:
            expand_lin = Linear(ps, name + ".expand", 2, expand);
            out_lin = Linear(ps, name + ".out", d + expand, d);
            break;
        case 3:
            expand_conv = Conv1d(ps, name + ".expand", 2, expand, 3);
            out_conv = Conv1d(ps, name + ".out", d + expand, d, 3);
            break;
        default:
            throw ConfigError("unknown sentiment layer type " + std::to_string(type));
    }
}

Tensor SentimentInject::operator()(const Tensor& x, const Tensor& sentiment, std::span<const index_t> segments) const {
    if (sentiment.rows() != x.rows()) {
        throw ShapeError("sentiment_inject: sentiment " + sentiment.shape_str() + " for features " + x.shape_str());
    }
    switch (type) {
        case 1:
            return out_lin(ops::concat_cols({x, sentiment}));
        case 2:
            return out_lin(ops::concat_cols({x, ops::relu(expand_lin(sentiment))}));
        default:
            return out_conv(ops::concat_cols({x, expand_conv(sentiment, segments, true)}), segments);
    }
}

EmbeddingInject::EmbeddingInject(ParameterStore& ps, index_t d, index_t d_embed)
    : proj(ps, "embedding_inject.proj", d + d_embed, d) {}

Tensor EmbeddingInject::operator()(const Tensor& x, const Tensor& embeddings) const {
    if (embeddings.rows() != x.rows()) {
        throw ShapeError("embedding_inject: embeddings " + embeddings.shape_str() + " for features " + x.shape_str());
    }
    return ops::relu(proj(ops::concat_cols({x, embeddings})));
}

Tensor global_pool(const Tensor& x, std::span<const index_t> token_doc_id, index_t n_docs) {
    return ops::elu(ops::scatter_reduce(x, token_doc_id, n_docs, ops::Reduce::mean));
}

MlpHead::MlpHead(ParameterStore& ps, index_t d, index_t hidden, index_t n_classes)
    : l1(ps, "head.l1", d, hidden), l2(ps, "head.l2", hidden, n_classes) {}

}  // namespace textgraph::layers
