#pragma once

#include "textgraph/common.hpp"
#include "textgraph/graphgen.hpp"
#include "textgraph/ops.hpp"
#include "textgraph/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace textgraph::layers {

/// Named parameters in registration order.
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

    /// Registers a parameter initialized uniformly on [-bound, bound]. The
    /// stream depends on (seed, name) only.
    Tensor add_uniform(const std::string& name, Shape shape, real bound);
    Tensor add_normal(const std::string& name, Shape shape, real stddev);
    Tensor add_constant(const std::string& name, Shape shape, real value);

    const std::vector<Tensor>& params() const { return params_; }
    std::vector<Tensor>& params() { return params_; }
    Tensor find(const std::string& name) const;
    index_t count() const;
    void zero_grad();

private:
    Tensor add(const std::string& name, Tensor t);
    std::uint64_t seed_;
    std::vector<Tensor> params_;
};

/// Per-call state shared by the layers of one forward pass.
struct ForwardContext {
    bool training = false;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
};

struct Linear {
    Tensor w;  ///< [out x in]
    Tensor b;  ///< [out]

    Linear() = default;
    Linear(ParameterStore& ps, const std::string& name, index_t in, index_t out, bool bias = true);
    Tensor operator()(const Tensor& x) const { return ops::linear(x, w, b); }
};

/// Length-preserving convolution over a channels-last sequence.
struct Conv1d {
    Tensor w;  ///< [out x in x k]
    Tensor b;  ///< undefined when built without bias
    index_t padding = 0;

    Conv1d() = default;
    Conv1d(ParameterStore& ps, const std::string& name, index_t in, index_t out, index_t k, bool bias = true);
    Tensor operator()(const Tensor& x, std::span<const index_t> segments = {}, bool relu = false) const {
        return ops::conv1d_nc(x, w, b, padding, segments, relu);
    }
};

struct CharEmbedding {
    Tensor z;  ///< [charset x d]

    CharEmbedding() = default;
    CharEmbedding(ParameterStore& ps, index_t charset, index_t d);
    Tensor operator()(std::span<const index_t> char_ids) const { return ops::gather_rows(z, char_ids); }
};

/// Two kernel-5 convolutions with ReLU over the character sequence.
struct CharBlock {
    Conv1d conv1;
    Conv1d conv2;

    CharBlock() = default;
    CharBlock(ParameterStore& ps, index_t d);
    Tensor operator()(const Tensor& x, std::span<const index_t> segments = {}) const;
};

/// Scatter-mean and scatter-max of character features per token,
/// concatenated and projected back to d.
struct CharToToken {
    Linear proj;

    CharToToken() = default;
    CharToToken(ParameterStore& ps, index_t d);
    Tensor operator()(const Tensor& chars, std::span<const index_t> char_token_index, index_t n_tokens) const;
};

/// Rows sin(theta_i) + cos(theta_i) in both columns 2i and 2i+1 with
/// theta_i = pos / 10000^(2i/d). Throws ShapeError for odd d.
Tensor positional_encoding(std::span<const index_t> positions, index_t d);

/// Result of a graph layer: node features and one attention value per edge.
struct GraphOutput {
    Tensor y;
    Tensor alpha;
};

/// Single-head GATv2. Each edge is centered on its source node; node i
/// attends over its out-edges plus itself.
struct GATv2 {
    Tensor theta;  ///< [d_out x 2d] = [Theta_center | Theta_neighbor]
    Tensor a;      ///< [d_out]
    real slope = real(0.2);

    GATv2() = default;
    GATv2(ParameterStore& ps, const std::string& name, index_t d, index_t d_out, real slope = real(0.2));
    GraphOutput operator()(const Tensor& x, const graphgen::EdgeList& edges) const;
};

/// Multi-head attention restricted to edges. Head h owns feature columns
/// [h*M, (h+1)*M) and the h-th contiguous chunk of E/H edges.
struct SparseEdgeAttention {
    index_t heads = 1;
    index_t head_dim = 0;
    Tensor wq, wk, wagg, wupd;  ///< each [H*M x M], head h in rows [h*M, (h+1)*M)
    bool per_node_softmax = false;
    bool pre_softmax_scaling = false;

    SparseEdgeAttention() = default;
    SparseEdgeAttention(ParameterStore& ps, const std::string& name, index_t d, index_t heads);
    GraphOutput operator()(const Tensor& x, const graphgen::EdgeList& edges) const;
};

struct FeatureNorm {
    Tensor gamma;
    Tensor beta;
    real eps = real(1e-5);

    FeatureNorm() = default;
    FeatureNorm(ParameterStore& ps, const std::string& name, index_t d);
    Tensor operator()(const Tensor& x) const { return ops::feature_norm(x, gamma, beta, eps); }
};

enum class GnnVariant { gatv2, sparse_attention };

/// Graph branch plus kernel-3 convolution branch, summed, normalized,
/// ReLU and dropout. `extra_conv_channels` widens the convolution input.
struct CnnGnnLayer {
    GnnVariant variant = GnnVariant::gatv2;
    GATv2 gat;
    SparseEdgeAttention attention;
    Conv1d conv;
    FeatureNorm norm;
    real dropout = 0;
    std::string name;

    CnnGnnLayer() = default;
    CnnGnnLayer(ParameterStore& ps, const std::string& name, index_t d, GnnVariant variant, index_t heads,
                real dropout, index_t extra_conv_channels = 0, real gat_slope = real(0.2));
    /// `conv_extra` supplies the additional convolution channels when configured.
    GraphOutput operator()(const Tensor& x, const graphgen::EdgeList& edges, const ForwardContext& ctx,
                           std::span<const index_t> segments = {}, const Tensor& conv_extra = Tensor()) const;
};

/// Polarity and subjectivity as two columns.
Tensor sentiment_features(std::span<const real> polarity, std::span<const real> subjectivity);

/// Type 1: concat then linear. Type 2: ReLU(linear expansion of the two
/// values), concat, linear. Type 3: as type 2 with kernel-3 convolutions.
struct SentimentInject {
    int type = 1;
    Linear expand_lin, out_lin;
    Conv1d expand_conv, out_conv;

    SentimentInject() = default;
    SentimentInject(ParameterStore& ps, const std::string& name, int type, index_t d, index_t expand);
    Tensor operator()(const Tensor& x, const Tensor& sentiment, std::span<const index_t> segments = {}) const;
};

/// ReLU(linear([x | embeddings])).
struct EmbeddingInject {
    Linear proj;

    EmbeddingInject() = default;
    EmbeddingInject(ParameterStore& ps, index_t d, index_t d_embed);
    Tensor operator()(const Tensor& x, const Tensor& embeddings) const;
};

/// ELU of the per-document mean of token features.
Tensor global_pool(const Tensor& x, std::span<const index_t> token_doc_id, index_t n_docs);

/// logits = ReLU(h Theta1^T + b1) Theta2^T + b2.
struct MlpHead {
    Linear l1, l2;

    MlpHead() = default;
    MlpHead(ParameterStore& ps, index_t d, index_t hidden, index_t n_classes);
    Tensor operator()(const Tensor& h) const { return l2(ops::relu(l1(h))); }
};

}  // namespace textgraph::layers
