#include "textgraph/model.hpp"
#include "textgraph/config.hpp"
#include "textgraph/container.hpp"
#include "textgraph/rng.hpp"

#include <algorithm>

namespace textgraph::model {

namespace {

std::vector<index_t> char_segments(const batching::CompactBatch& batch) {
    std::vector<index_t> out;
    index_t c = 0;
    for (auto n : batch.chars_per_doc) {
        out.push_back(c);
        c += n;
    }
    return out;
}

}  // namespace

void ModelConfig::validate() const {
    if (hidden_dim < 2 || hidden_dim % 2 != 0) throw ConfigError("hidden_dim must be even and >= 2");
    if (inject_dim < 1) throw ConfigError("inject_dim must be >= 1");
    if (char_vocab < 1) throw ConfigError("char_vocab must be >= 1");
    if (n_layers < 0) throw ConfigError("n_layers must be >= 0");
    if (sentiment_type < 1 || sentiment_type > 3) throw ConfigError("sentiment_type must be 1, 2 or 3");
    if (sentiment_expand < 1) throw ConfigError("sentiment_expand must be >= 1");
    if (has_sentiment(SentimentPosition::P1) && n_layers < 1) {
        throw ConfigError("sentiment position P1 needs at least one CNN-GNN layer");
    }
    if (mlp_hidden < 1) throw ConfigError("mlp_hidden must be >= 1");
    if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must be in [0, 1)");
    if (gnn_variant == layers::GnnVariant::sparse_attention && hidden_dim % graph.heads != 0) {
        throw ConfigError("hidden_dim must be divisible by graph heads for sparse attention");
    }
    if (lr <= 0) throw ConfigError("lr must be > 0");
    if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
    if (lr_gamma <= 0) throw ConfigError("lr_gamma must be > 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
    graph.validate();
}

bool ModelConfig::has_sentiment(SentimentPosition p) const {
    return std::find(sentiment_positions.begin(), sentiment_positions.end(), p) != sentiment_positions.end();
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)), params_(cfg_.seed) {
    cfg_.validate();
    const auto d = cfg_.hidden_dim;
    embedding_ = layers::CharEmbedding(params_, cfg_.char_vocab, d);
    char_block_ = layers::CharBlock(params_, d);
    char_to_token_ = layers::CharToToken(params_, d);
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const index_t extra = l == 0 && cfg_.has_sentiment(SentimentPosition::P1) ? 2 : 0;
        auto layer = layers::CnnGnnLayer(params_, "cnn_gnn" + std::to_string(l + 1), d, cfg_.gnn_variant,
                                         cfg_.graph.heads, cfg_.dropout, extra, cfg_.gat_slope);
        layer.attention.per_node_softmax = cfg_.per_node_softmax;
        layer.attention.pre_softmax_scaling = cfg_.pre_softmax_scaling;
        cnn_gnn_.push_back(std::move(layer));
    }
    if (cfg_.has_sentiment(SentimentPosition::P2)) {
        sentiment_p2_.emplace(params_, "sentiment_p2", cfg_.sentiment_type, d, cfg_.sentiment_expand);
    }
    if (cfg_.embedding_inject) inject_.emplace(params_, d, cfg_.inject_dim);
    if (cfg_.has_sentiment(SentimentPosition::P3)) {
        sentiment_p3_.emplace(params_, "sentiment_p3", cfg_.sentiment_type, d, cfg_.sentiment_expand);
    }
    head_ = layers::MlpHead(params_, d, cfg_.mlp_hidden, cfg_.n_classes);
}

ForwardResult Model::forward(const batching::CompactBatch& batch, bool training, std::uint64_t step) const {
    const auto d = cfg_.hidden_dim;
    const auto n_tokens = batch.n_tokens();
    if (batch.n_docs() < 1 || n_tokens < 1) throw AssemblyError("forward: empty batch");
    if (cfg_.embedding_inject && batch.embedding_dim != cfg_.inject_dim) {
        throw ShapeError("forward: batch embeddings have dimension " + std::to_string(batch.embedding_dim) +
                         ", model expects " + std::to_string(cfg_.inject_dim));
    }
    const std::uint64_t graph_step = training ? step + 1 : 0;
    layers::ForwardContext ctx{training, cfg_.seed, step};

    std::vector<index_t> char_segs, token_segs;
    if (cfg_.boundary_mask) {
        char_segs = char_segments(batch);
        token_segs = batch.doc_lower_bounds;
    }

    auto chars = char_block_(embedding_(batch.char_ids), char_segs);
    auto x = char_to_token_(chars, batch.char_token_index, n_tokens);
    x = ops::add(x, layers::positional_encoding(batch.token_pos_in_doc, d));

    auto graph_cfg = cfg_.graph;
    graph_cfg.rng_seed = mix_seed({cfg_.seed, graph_cfg.rng_seed});
    ForwardResult result;
    auto edges = graphgen::generate_graph(batch, graph_cfg, graph_step);

    Tensor sentiment;
    if (!cfg_.sentiment_positions.empty()) sentiment = layers::sentiment_features(batch.polarity, batch.subjectivity);

    for (std::size_t l = 0; l < cnn_gnn_.size(); ++l) {
        const bool p1 = l == 0 && cfg_.has_sentiment(SentimentPosition::P1);
        auto out = cnn_gnn_[l](x, edges, ctx, token_segs, p1 ? sentiment : Tensor());
        x = out.y;
        result.edges.push_back(edges);
        result.attention.push_back(out.alpha);
        if (l + 1 < cnn_gnn_.size() && (l == 0 || cfg_.update_every_layer)) {
            edges = graphgen::update_graph(edges, out.alpha.values(), graph_cfg.keep_per_node, batch, graph_cfg,
                                           graph_step * 64 + l);
        }
    }
    if (sentiment_p2_) x = (*sentiment_p2_)(x, sentiment, token_segs);
    if (inject_) x = (*inject_)(x, Tensor::from({n_tokens, batch.embedding_dim}, batch.embeddings));
    if (sentiment_p3_) x = (*sentiment_p3_)(x, sentiment, token_segs);
    auto pooled = layers::global_pool(x, batch.token_doc_id, batch.n_docs());
    result.logits = head_(pooled);
    return result;
}

void Model::save(const std::string& path, const std::string& meta_json) const {
    io::Container c;
    c.kind = "checkpoint";
    c.meta["dtype"] = kRealName;
    c.meta["config"] = config::to_flat(cfg_).values();
    c.meta["meta"] = nlohmann::json::parse(meta_json);
    for (const auto& p : params_.params()) c.put_real(p.name(), p.shape(), p.values());
    c.save(path);
}

Model Model::load(const std::string& path) {
    auto c = io::Container::load(path);
    if (c.kind != "checkpoint") throw FormatError(path + ": not a checkpoint (kind '" + c.kind + "')");
    config::FlatConfig flat;
    for (const auto& [k, v] : c.meta.at("config").items()) flat.set(k, v.get<std::string>());
    Model m(config::model_config_from(flat));
    for (auto& p : m.params_.params()) {
        if (!c.has(p.name())) throw FormatError(path + ": checkpoint lacks parameter '" + p.name() + "'");
        const auto& a = c.array(p.name());
        if (a.shape != p.shape()) {
            throw FormatError(path + ": parameter '" + p.name() + "' has shape " + shape_str(a.shape) + ", expected " +
                              p.shape_str());
        }
        p.values() = c.get_real(p.name());
    }
    return m;
}

}  // namespace textgraph::model
