#include "textgraph/graphgen.hpp"
#include "textgraph/rng.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace textgraph::graphgen {

namespace {

index_t random_target(Rng& rng, index_t doc_len, index_t pos_in_doc, index_t lower) {
    const auto r = static_cast<index_t>(static_cast<double>(2 * doc_len + 1) * rng.uniform());
    return (((r % doc_len) + pos_in_doc + 1) % doc_len) + lower;
}

// Undirected pairs in an open-addressing table.
class PairSet {
public:
    explicit PairSet(std::size_t expected) {
        std::size_t cap = 16;
        while (cap < 2 * expected) cap <<= 1;
        slots_.assign(cap, 0);
        mask_ = cap - 1;
    }

    bool insert(index_t a, index_t b) {
        if (2 * (size_ + 1) > slots_.size()) grow();
        return place(key(a, b));
    }

private:
    static std::uint64_t key(index_t a, index_t b) {
        // Zero marks an empty slot.
        return (static_cast<std::uint64_t>(std::min(a, b)) << 32 | static_cast<std::uint64_t>(std::max(a, b))) + 1;
    }

    bool place(std::uint64_t k) {
        auto i = static_cast<std::size_t>((k * 0x9e3779b97f4a7c15ULL) >> 20) & mask_;
        while (slots_[i] != 0) {
            if (slots_[i] == k) return false;
            i = (i + 1) & mask_;
        }
        slots_[i] = k;
        ++size_;
        return true;
    }

    void grow() {
        std::vector<std::uint64_t> old(slots_.size() * 2, 0);
        old.swap(slots_);
        mask_ = slots_.size() - 1;
        size_ = 0;
        for (auto k : old) {
            if (k != 0) place(k);
        }
    }

    std::vector<std::uint64_t> slots_;
    std::size_t mask_ = 0;
    std::size_t size_ = 0;
};

constexpr int kRefillAttempts = 16;

// Lattice slot outcomes for every token of a document.
constexpr char kKeep = 0, kDrop = 1, kFirstHalf = 2;

// Spreads equal-score survivors across the chunk instead of favoring its head.
std::uint64_t tie_hash(index_t e) {
    auto x = static_cast<std::uint64_t>(e);
    return splitmix64(x);
}

EdgeKind kind_of(const EdgeList& edges, index_t e) {
    return static_cast<index_t>(edges.kind.size()) == edges.size() ? edges.kind[static_cast<std::size_t>(e)]
                                                                    : EdgeKind::lattice;
}

}  // namespace

void GraphConfig::validate() const {
    if (lattice_begin < 1 || lattice_step < 1) throw ConfigError("lattice begin and step must be >= 1");
    if (n_lattice < 0 || n_random < 0) throw ConfigError("edge counts must be >= 0");
    if (heads < 1) throw ConfigError("heads must be >= 1");
    if (!(p_keep > 0.0 && p_keep <= 1.0)) throw ConfigError("p_keep must be in (0, 1]");
    if (keep_per_node < 0) throw ConfigError("keep_per_node must be >= 0");
}

GraphMetadata calc_graph_metadata(const batching::CompactBatch& batch, const GraphConfig& cfg,
                                  std::uint64_t step) {
    cfg.validate();
    GraphMetadata meta;
    meta.n_tokens = batch.n_tokens();
    meta.n_lattice = cfg.n_lattice;
    meta.n_random = cfg.n_random;
    const auto n = static_cast<std::size_t>(meta.n_tokens);
    const auto k1 = static_cast<std::size_t>(cfg.n_lattice);
    const auto k2 = static_cast<std::size_t>(cfg.n_random);
    meta.lattice.resize(n * k1);
    meta.random.resize(n * k2);
    meta.batch_pos.resize(n);
    std::iota(meta.batch_pos.begin(), meta.batch_pos.end(), index_t{0});
    meta.pos_in_doc = batch.token_pos_in_doc;
    meta.token_doc = batch.token_doc_id;
    meta.doc_len = batch.tokens_per_doc;
    for (std::size_t j = 0; j < k1; ++j) {
        meta.lattice_offsets.push_back(cfg.lattice_begin + static_cast<index_t>(j) * cfg.lattice_step);
    }

    for (index_t d = 0; d < batch.n_docs(); ++d) {
        const auto lower = batch.doc_lower_bounds[d];
        const auto len = batch.tokens_per_doc[d];
        for (index_t i = lower; i < lower + len; ++i) {
            const auto p_n = i - lower;
            for (std::size_t j = 0; j < k1; ++j) {
                const auto offset = meta.lattice_offsets[j];
                meta.lattice[static_cast<std::size_t>(i) * k1 + j] = ((offset + p_n) % len) + lower;
            }
        }
        Rng rng(cfg.rng_seed, Stream::graph, {batch.doc_keys[d], step});
        for (std::size_t j = 0; j < k2; ++j) {
            for (index_t i = lower; i < lower + len; ++i) {
                meta.random[static_cast<std::size_t>(i) * k2 + j] = random_target(rng, len, i - lower, lower);
            }
        }
    }
    return meta;
}

void assign_heads(EdgeList& edges, int heads) {
    if (heads < 1) throw ArgumentError("heads must be >= 1");
    const auto keep = edges.size() - edges.size() % heads;
    edges.src.resize(static_cast<std::size_t>(keep));
    edges.dst.resize(static_cast<std::size_t>(keep));
    edges.kind.resize(static_cast<std::size_t>(keep), EdgeKind::lattice);
    edges.heads = heads;
    edges.head.resize(static_cast<std::size_t>(keep));
    const auto per = keep / heads;
    for (index_t e = 0; e < keep; ++e) edges.head[static_cast<std::size_t>(e)] = static_cast<int>(e / per);
}

EdgeList create_edges(const GraphMetadata& meta, int heads) {
    const auto n = static_cast<std::size_t>(meta.n_tokens);
    const auto k1 = static_cast<std::size_t>(meta.n_lattice);
    const auto k2 = static_cast<std::size_t>(meta.n_random);

    // A candidate (token i, slot j) repeats an earlier one when an earlier
    // slot of i or of its target produces the same pair. Lattice repeats depend
    // only on the offsets modulo the document length.
    std::vector<std::vector<char>> lattice_rule(meta.doc_len.size());
    for (std::size_t d = 0; d < meta.doc_len.size(); ++d) {
        const auto len = meta.doc_len[d];
        auto& rule = lattice_rule[d];
        rule.assign(k1, kKeep);
        for (std::size_t j = 0; j < k1; ++j) {
            const auto o = meta.lattice_offsets[j] % len;
            const auto back = (len - o) % len;
            if (o == 0) {
                rule[j] = kDrop;
                continue;
            }
            for (std::size_t e = 0; e < j; ++e) {
                const auto oe = meta.lattice_offsets[e] % len;
                if (oe == o || oe == back) rule[j] = kDrop;
            }
            if (rule[j] == kKeep && o == back) rule[j] = kFirstHalf;
        }
    }
    const auto keep_lattice = [&](std::size_t i, std::size_t j) {
        const auto d = static_cast<std::size_t>(meta.token_doc[i]);
        const auto rule = lattice_rule[d][j];
        if (rule != kFirstHalf) return rule == kKeep;
        return meta.pos_in_doc[i] < meta.doc_len[d] / 2;
    };
    const auto keep_random = [&](std::size_t i, std::size_t r) {
        const auto s = meta.batch_pos[i];
        const auto t = meta.random[i * k2 + r];
        if (t == s) return false;
        const auto len = meta.doc_len[static_cast<std::size_t>(meta.token_doc[i])];
        const auto fwd = (t - s + len) % len, bwd = (s - t + len) % len;
        for (std::size_t j = 0; j < k1; ++j) {
            const auto o = meta.lattice_offsets[j] % len;
            if (o == fwd || o == bwd) return false;
        }
        for (std::size_t e = 0; e < r; ++e) {
            if (meta.random[i * k2 + e] == t) return false;
        }
        const auto ti = static_cast<std::size_t>(t);
        for (std::size_t e = 0; e < k2; ++e) {
            if (e > r || (e == r && ti > i)) break;
            if (meta.random[ti * k2 + e] == s) return false;
        }
        return true;
    };

    // Spread the random slots evenly between the lattice slots.
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t j = 0; j < k1; ++j) order.emplace_back((j + 0.5) / static_cast<double>(k1), j);
    for (std::size_t j = 0; j < k2; ++j) order.emplace_back((j + 0.5) / static_cast<double>(k2), k1 + j);
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    EdgeList out;
    out.raw_count = static_cast<index_t>(n * (k1 + k2));
    out.src.reserve(n * (k1 + k2));
    out.dst.reserve(n * (k1 + k2));
    out.kind.reserve(n * (k1 + k2));
    for (const auto& [pos, j] : order) {
        const auto kind = j < k1 ? EdgeKind::lattice : EdgeKind::random;
        for (std::size_t i = 0; i < n; ++i) {
            if (j < k1 ? !keep_lattice(i, j) : !keep_random(i, j - k1)) continue;
            out.src.push_back(meta.batch_pos[i]);
            out.dst.push_back(j < k1 ? meta.lattice[i * k1 + j] : meta.random[i * k2 + (j - k1)]);
            out.kind.push_back(kind);
        }
    }
    assign_heads(out, heads);
    return out;
}

EdgeList subsample_edges(const EdgeList& edges, std::span<const real> subsample_p, double p_keep, int heads) {
    if (!(p_keep > 0.0 && p_keep <= 1.0)) throw ArgumentError("p_keep must be in (0, 1]");
    if (heads < 1) throw ArgumentError("heads must be >= 1");
    const auto E = edges.size();
    std::vector<real> score(static_cast<std::size_t>(E));
    std::vector<EdgeKind> kind(static_cast<std::size_t>(E));
    std::vector<std::uint64_t> hash(static_cast<std::size_t>(E));
    for (index_t e = 0; e < E; ++e) {
        const auto i = static_cast<std::size_t>(e);
        score[i] = subsample_p[static_cast<std::size_t>(edges.src[e])] +
                   subsample_p[static_cast<std::size_t>(edges.dst[e])];
        kind[i] = kind_of(edges, e);
        hash[i] = tie_hash(e);
    }
    auto better = [&](index_t a, index_t b) {
        const auto ia = static_cast<std::size_t>(a), ib = static_cast<std::size_t>(b);
        if (score[ia] != score[ib]) return score[ia] > score[ib];
        if (kind[ia] != kind[ib]) return kind[ia] < kind[ib];
        return hash[ia] != hash[ib] ? hash[ia] < hash[ib] : a < b;
    };

    // Make E divisible by H by dropping the lowest-scoring remainder.
    std::vector<index_t> alive(static_cast<std::size_t>(E));
    std::iota(alive.begin(), alive.end(), index_t{0});
    if (const auto rem = E % heads; rem != 0) {
        std::vector<index_t> ranked = alive;
        std::nth_element(ranked.begin(), ranked.end() - rem, ranked.end(), better);
        std::vector<char> drop(static_cast<std::size_t>(E), 0);
        for (auto it = ranked.end() - rem; it != ranked.end(); ++it) drop[static_cast<std::size_t>(*it)] = 1;
        alive.erase(std::remove_if(alive.begin(), alive.end(),
                                   [&](index_t e) { return drop[static_cast<std::size_t>(e)] != 0; }),
                    alive.end());
    }
    const auto per = static_cast<index_t>(alive.size()) / heads;
    const auto keep_count = static_cast<index_t>(p_keep * static_cast<double>(per) + 1e-9);
    if (keep_count == 0 && per > 0) warn("subsample_edges: keep_count is 0, heads will be empty");

    EdgeList out;
    out.raw_count = edges.raw_count;
    out.src.reserve(static_cast<std::size_t>(keep_count * heads));
    out.dst.reserve(static_cast<std::size_t>(keep_count * heads));
    std::vector<index_t> chunk;
    for (int h = 0; h < heads; ++h) {
        chunk.assign(alive.begin() + h * per, alive.begin() + (h + 1) * per);
        if (keep_count < per) {
            std::nth_element(chunk.begin(), chunk.begin() + keep_count, chunk.end(), better);
            chunk.resize(static_cast<std::size_t>(keep_count));
            std::sort(chunk.begin(), chunk.end());
        }
        for (auto e : chunk) {
            out.src.push_back(edges.src[e]);
            out.dst.push_back(edges.dst[e]);
            out.kind.push_back(kind_of(edges, e));
        }
    }
    assign_heads(out, heads);
    return out;
}

EdgeList update_graph(const EdgeList& edges, std::span<const real> attention, int keep_per_node,
                      const batching::CompactBatch& batch, const GraphConfig& cfg, std::uint64_t step) {
    const auto E = edges.size();
    if (static_cast<index_t>(attention.size()) != E) {
        throw ArgumentError("update_graph: attention has " + std::to_string(attention.size()) +
                            " entries for " + std::to_string(E) + " edges");
    }
    const auto n = static_cast<std::size_t>(batch.n_tokens());

    // Bucket edges by source node (CSR), preserving edge order.
    std::vector<index_t> offsets(n + 1, 0);
    for (auto s : edges.src) ++offsets[static_cast<std::size_t>(s) + 1];
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    std::vector<index_t> by_src(static_cast<std::size_t>(E));
    {
        auto fill = offsets;
        for (index_t e = 0; e < E; ++e) by_src[static_cast<std::size_t>(fill[static_cast<std::size_t>(edges.src[e])]++)] = e;
    }

    std::vector<char> retained(static_cast<std::size_t>(E), 1);
    std::vector<index_t> refill(n, 0);
    for (std::size_t v = 0; v < n; ++v) {
        const auto begin = by_src.begin() + offsets[v];
        const auto end = by_src.begin() + offsets[v + 1];
        const auto degree = end - begin;
        if (degree <= keep_per_node) continue;
        // Stable insertion sort by descending attention; degrees are small.
        for (auto it = begin + 1; it != end; ++it) {
            const auto e = *it;
            const auto a = attention[static_cast<std::size_t>(e)];
            auto hole = it;
            while (hole != begin && attention[static_cast<std::size_t>(*(hole - 1))] < a) {
                *hole = *(hole - 1);
                --hole;
            }
            *hole = e;
        }
        for (auto it = begin + keep_per_node; it != end; ++it) retained[static_cast<std::size_t>(*it)] = 0;
        refill[v] = degree - keep_per_node;
    }

    EdgeList out;
    out.raw_count = edges.raw_count;
    PairSet present(static_cast<std::size_t>(E));
    for (index_t e = 0; e < E; ++e) {
        if (!retained[static_cast<std::size_t>(e)]) continue;
        out.src.push_back(edges.src[e]);
        out.dst.push_back(edges.dst[e]);
        out.kind.push_back(kind_of(edges, e));
        present.insert(edges.src[e], edges.dst[e]);
    }
    for (index_t d = 0; d < batch.n_docs(); ++d) {
        const auto lower = batch.doc_lower_bounds[d];
        const auto len = batch.tokens_per_doc[d];
        Rng rng(cfg.rng_seed, Stream::refill, {batch.doc_keys[d], step});
        for (index_t i = lower; i < lower + len; ++i) {
            for (index_t k = 0; k < refill[static_cast<std::size_t>(i)]; ++k) {
                for (int attempt = 0; attempt < kRefillAttempts; ++attempt) {
                    const auto t = random_target(rng, len, i - lower, lower);
                    if (t == i || !present.insert(i, t)) continue;
                    out.src.push_back(i);
                    out.dst.push_back(t);
                    out.kind.push_back(EdgeKind::refill);
                    break;
                }
            }
        }
    }
    assign_heads(out, edges.heads);
    return out;
}

EdgeList generate_graph(const batching::CompactBatch& batch, const GraphConfig& cfg, std::uint64_t step) {
    auto meta = calc_graph_metadata(batch, cfg, step);
    auto edges = create_edges(meta, cfg.heads);
    if (cfg.subsample && cfg.p_keep < 1.0) {
        edges = subsample_edges(edges, batch.subsample_p, cfg.p_keep, cfg.heads);
    }
    return edges;
}

index_t count_cross_document_edges(const EdgeList& edges, const batching::CompactBatch& batch) {
    index_t bad = 0;
    for (index_t e = 0; e < edges.size(); ++e) {
        if (batch.token_doc_id[static_cast<std::size_t>(edges.src[e])] !=
            batch.token_doc_id[static_cast<std::size_t>(edges.dst[e])]) {
            ++bad;
        }
    }
    return bad;
}

}  // namespace textgraph::graphgen
