#pragma once

#include "textgraph/batching.hpp"
#include "textgraph/common.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace textgraph::graphgen {

struct GraphConfig {
    int lattice_begin = 2;   ///< m: first lattice offset
    int lattice_step = 2;    ///< s
    int n_lattice = 10;      ///< k1
    int n_random = 6;        ///< k2
    int heads = 4;           ///< H
    bool subsample = true;   ///< run edge sub-sampling at generation
    double p_keep = 5.0 / 6.0;
    int keep_per_node = 6;   ///< edges each node keeps in update_graph
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// Per-token lattice and random targets (row-major n x k1 and n x k2) plus
/// batch positions.
struct GraphMetadata {
    index_t n_tokens = 0;
    int n_lattice = 0;
    int n_random = 0;
    std::vector<index_t> lattice;
    std::vector<index_t> random;
    std::vector<index_t> batch_pos;
    std::vector<index_t> pos_in_doc;       ///< p_n
    std::vector<index_t> token_doc;        ///< document slot of each token
    std::vector<index_t> doc_len;          ///< |D| per document
    std::vector<index_t> lattice_offsets;  ///< m + j*s per lattice slot
};

enum class EdgeKind : std::uint8_t { lattice = 0, random = 1, refill = 2 };

/// Directed edges over batch token indices, split into `heads` contiguous
/// chunks of equal size.
struct EdgeList {
    std::vector<index_t> src;
    std::vector<index_t> dst;
    std::vector<int> head;
    std::vector<EdgeKind> kind;
    int heads = 1;
    index_t raw_count = 0;  ///< pairs produced before self-loop and duplicate removal

    index_t size() const { return static_cast<index_t>(src.size()); }
    index_t per_head() const { return heads > 0 ? size() / heads : 0; }
};

/// Lattice targets ((m + j*s + p_n) mod |D|) + l_n and random targets
/// (((r mod |D|) + p_n + 1) mod |D|) + l_n with r = int((2|D| + 1) * u),
/// u uniform on [0, 1). Each document draws from its own stream keyed by
/// (rng_seed, document key, step).
GraphMetadata calc_graph_metadata(const batching::CompactBatch& batch, const GraphConfig& cfg,
                                  std::uint64_t step = 0);

/// Pairs every token with its targets. Self-loops and repeated undirected
/// pairs are dropped, visiting all lattice slots before the random ones and
/// keeping the first occurrence. Survivors are laid out slot by slot (every
/// token's pair for one slot, then the next slot) with the random slots spread
/// evenly between the lattice slots, so each head chunk sees the same mix.
/// Trailing edges are dropped until the count divides by `heads`.
EdgeList create_edges(const GraphMetadata& meta, int heads);

/// Per head, keeps the int(p_keep * E/H) edges with the largest
/// subsample_p[src] + subsample_p[dst], preserving edge order. Ties prefer
/// lattice edges, then the lower edge index.
EdgeList subsample_edges(const EdgeList& edges, std::span<const real> subsample_p, double p_keep, int heads);

/// For each source node keeps its `keep_per_node` highest-attention edges and
/// refills the removed budget with fresh random same-document targets.
EdgeList update_graph(const EdgeList& edges, std::span<const real> attention, int keep_per_node,
                      const batching::CompactBatch& batch, const GraphConfig& cfg, std::uint64_t step);

/// calc_graph_metadata -> create_edges -> subsample_edges (when enabled).
EdgeList generate_graph(const batching::CompactBatch& batch, const GraphConfig& cfg, std::uint64_t step = 0);

/// Drops trailing edges until the count divides by `heads` and labels heads.
void assign_heads(EdgeList& edges, int heads);

/// Number of edges whose endpoints lie in different documents.
index_t count_cross_document_edges(const EdgeList& edges, const batching::CompactBatch& batch);

}  // namespace textgraph::graphgen
