#include "textgraph/model.hpp"

#include <json.hpp>

namespace textgraph::model {

double FlopReport::component(const std::string& name) const {
    for (const auto& [k, v] : components) {
        if (k == name) return v;
    }
    return 0;
}

std::string FlopReport::to_json() const {
    nlohmann::json parts = nlohmann::json::object();
    for (const auto& [k, v] : components) parts[k] = v;
    return nlohmann::json{{"components", parts}, {"total", total}, {"per_doc", per_doc}}.dump();
}

double conv_macs(index_t n, index_t c_in, index_t c_out, index_t k) {
    return static_cast<double>(n) * static_cast<double>(k) * static_cast<double>(c_in) * static_cast<double>(c_out);
}

double depthwise_separable_macs(index_t n, index_t c_in, index_t c_out, index_t k) {
    return static_cast<double>(n) * static_cast<double>(k) * static_cast<double>(c_in) + conv_macs(n, c_in, c_out, 1);
}

FlopReport flop_estimate(const ModelConfig& cfg, index_t n_chars, index_t n_tokens, index_t n_docs) {
    FlopReport r;
    auto add = [&](std::string name, double v) {
        r.components.emplace_back(std::move(name), v);
        r.total += v;
    };
    const auto d = cfg.hidden_dim;
    const double n = static_cast<double>(n_tokens);
    const double dd = static_cast<double>(d);
    const double keep = cfg.graph.subsample ? cfg.graph.p_keep : 1.0;
    const double edges = n * static_cast<double>(cfg.graph.n_lattice + cfg.graph.n_random) * keep;

    add("char_embedding", static_cast<double>(n_chars) * dd);
    add("char_block", 2 * conv_macs(n_chars, d, d, 5));
    add("char_to_token", static_cast<double>(n_chars) * dd * 2 + n * 2 * dd * dd);
    add("positional_encoding", n * dd);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto tag = "cnn_gnn" + std::to_string(l + 1);
        const index_t extra = l == 0 && cfg.has_sentiment(SentimentPosition::P1) ? 2 : 0;
        double gnn = 0;
        if (cfg.gnn_variant == layers::GnnVariant::gatv2) {
            // Two projections, then score and weighted sum per edge and self loop.
            gnn = 2 * n * dd * dd + (edges + n) * 3 * dd;
        } else {
            const double m = dd / static_cast<double>(cfg.graph.heads);
            // Q, K, V_agg per edge and V_upd per node, each an M x M product per head.
            gnn = edges * (3 * m * m + m) + n * dd * m;
        }
        add(tag + ".gnn", gnn);
        add(tag + ".conv", conv_macs(n_tokens, d + extra, d, 3));
        add(tag + ".norm", 2 * n * dd);
    }
    const double expand = static_cast<double>(cfg.sentiment_expand);
    for (auto p : {SentimentPosition::P2, SentimentPosition::P3}) {
        if (!cfg.has_sentiment(p)) continue;
        const std::string tag = p == SentimentPosition::P2 ? "sentiment_p2" : "sentiment_p3";
        double v = 0;
        switch (cfg.sentiment_type) {
            case 1: v = n * (dd + 2) * dd; break;
            case 2: v = n * 2 * expand + n * (dd + expand) * dd; break;
            default:
                v = conv_macs(n_tokens, 2, cfg.sentiment_expand, 3) +
                    conv_macs(n_tokens, d + cfg.sentiment_expand, d, 3);
        }
        add(tag, v);
    }
    if (cfg.embedding_inject) add("embedding_inject", n * (dd + static_cast<double>(cfg.inject_dim)) * dd);
    add("global_pool", n * dd);
    const double docs = static_cast<double>(n_docs);
    add("head", docs * (dd * static_cast<double>(cfg.mlp_hidden) +
                        static_cast<double>(cfg.mlp_hidden) * static_cast<double>(cfg.n_classes)));
    r.per_doc = n_docs > 0 ? r.total / docs : 0;
    return r;
}

FlopReport flop_estimate(const ModelConfig& cfg, const batching::CompactBatch& batch) {
    return flop_estimate(cfg, batch.n_chars(), batch.n_tokens(), batch.n_docs());
}

}  // namespace textgraph::model
