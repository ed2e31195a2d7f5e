#pragma once

#include "textgraph/batching.hpp"
#include "textgraph/corpus.hpp"
#include "textgraph/graphgen.hpp"
#include "textgraph/layers.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace textgraph::model {

enum class SentimentPosition { P1, P2, P3 };

struct ModelConfig {
    index_t hidden_dim = 64;
    index_t inject_dim = 64;
    index_t char_vocab = corpus::kCharsetSize;
    int n_layers = 2;
    layers::GnnVariant gnn_variant = layers::GnnVariant::gatv2;
    std::vector<SentimentPosition> sentiment_positions{SentimentPosition::P2, SentimentPosition::P3};
    int sentiment_type = 3;
    index_t sentiment_expand = 16;
    bool embedding_inject = true;
    index_t mlp_hidden = 64;
    graphgen::GraphConfig graph;
    real dropout = real(0.2);
    real gat_slope = real(0.2);
    bool boundary_mask = false;
    bool per_node_softmax = false;
    bool pre_softmax_scaling = false;
    bool update_every_layer = false;

    double lr = 0.0032;
    double weight_decay = 1.1e-5;
    std::vector<int> milestones{15, 20, 30, 38, 40, 45, 50};
    double lr_gamma = 0.5;
    int epochs = 70;
    int batch_size = 224;
    int n_classes = 2;
    std::uint64_t seed = 0;

    void validate() const;
    bool has_sentiment(SentimentPosition p) const;
};

struct ForwardResult {
    Tensor logits;
    std::vector<graphgen::EdgeList> edges;  ///< graph seen by each CNN-GNN layer
    std::vector<Tensor> attention;          ///< per layer, aligned with `edges`
};

class Model {
public:
    explicit Model(ModelConfig cfg);

    /// Full pipeline. Training mode enables dropout and regenerates random
    /// edges per step; evaluation uses step 0 and is deterministic.
    ForwardResult forward(const batching::CompactBatch& batch, bool training, std::uint64_t step = 0) const;

    const ModelConfig& config() const { return cfg_; }
    layers::ParameterStore& parameters() { return params_; }
    const layers::ParameterStore& parameters() const { return params_; }

    /// Parameters in their native precision plus the resolved configuration.
    void save(const std::string& path, const std::string& meta_json = "{}") const;
    static Model load(const std::string& path);

private:
    ModelConfig cfg_;
    layers::ParameterStore params_;
    layers::CharEmbedding embedding_;
    layers::CharBlock char_block_;
    layers::CharToToken char_to_token_;
    std::vector<layers::CnnGnnLayer> cnn_gnn_;
    std::optional<layers::SentimentInject> sentiment_p2_;
    std::optional<layers::SentimentInject> sentiment_p3_;
    std::optional<layers::EmbeddingInject> inject_;
    layers::MlpHead head_;
};

/// Multiply-accumulate counts per component.
struct FlopReport {
    std::vector<std::pair<std::string, double>> components;
    double total = 0;
    double per_doc = 0;

    double component(const std::string& name) const;
    std::string to_json() const;
};

/// n * k * c_in * c_out.
double conv_macs(index_t n, index_t c_in, index_t c_out, index_t k);
/// Depthwise plus pointwise cost.
double depthwise_separable_macs(index_t n, index_t c_in, index_t c_out, index_t k);
/// Closed-form estimate; edge counts use n_tokens * (k1 + k2), scaled by
/// p_keep when sub-sampling is enabled.
FlopReport flop_estimate(const ModelConfig& cfg, index_t n_chars, index_t n_tokens, index_t n_docs);
FlopReport flop_estimate(const ModelConfig& cfg, const batching::CompactBatch& batch);

}  // namespace textgraph::model
