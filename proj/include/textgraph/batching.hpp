#pragma once

#include "textgraph/common.hpp"
#include "textgraph/corpus.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace textgraph::batching {

/// Result of greedy k-way partitioning. Ids >= the number of input lengths
/// are zero-length dummies added so the item count divides by k.
struct Partition {
    std::vector<std::vector<index_t>> batches;
    std::vector<std::int64_t> sums;
    std::vector<std::int64_t> counts;
    index_t n_real = 0;

    /// Batch contents with dummy ids removed.
    std::vector<index_t> real_items(std::size_t b) const;
};

/// Greedy k-way number partitioning with equal batch counts. Items are placed
/// in descending length order into the smallest-sum partition that still has
/// room (lowest index on ties). With `shuffle` and epoch > 0 the sorted order
/// is shuffled inside consecutive ranges of k items first. Partitions are
/// returned by descending sum.
Partition greedy_k_partition(std::span<const std::int64_t> lengths, int k, int epoch, bool shuffle,
                             std::uint64_t rng_seed);

/// Padding-free batch: every document's characters and token metadata laid
/// end to end.
struct CompactBatch {
    std::vector<index_t> char_ids;
    std::vector<index_t> chars_per_doc;
    std::vector<index_t> char_token_index;
    std::vector<index_t> tokens_per_doc;
    std::vector<index_t> token_char_counts;
    std::vector<index_t> token_pos_in_doc;    ///< p_n
    std::vector<index_t> token_pos_in_batch;  ///< p_b
    std::vector<index_t> token_doc_id;        ///< document slot in this batch
    std::vector<index_t> doc_lower_bounds;    ///< l_n
    std::vector<real> subsample_p;
    std::vector<real> polarity;
    std::vector<real> subjectivity;
    std::vector<real> embeddings;  ///< n_tokens x embedding_dim, row-major
    int embedding_dim = 0;
    std::vector<int> labels;
    std::vector<index_t> doc_ids;            ///< corpus ids
    std::vector<std::uint64_t> doc_keys;     ///< content hashes keying per-document random streams

    index_t n_docs() const { return static_cast<index_t>(tokens_per_doc.size()); }
    index_t n_tokens() const { return static_cast<index_t>(token_pos_in_batch.size()); }
    index_t n_chars() const { return static_cast<index_t>(char_ids.size()); }
    index_t doc_upper_bound(index_t n) const { return doc_lower_bounds[n] + tokens_per_doc[n]; }
    /// Document slot of every character.
    std::vector<index_t> char_doc_ids() const;
};

/// Content hash of a document's token characters.
std::uint64_t document_key(const corpus::Document& doc);

/// Throws AssemblyError for an empty batch, a document without tokens or a
/// zero-length token.
CompactBatch assemble_compact_batch(std::span<const corpus::Document> documents,
                                    const corpus::CorpusTables& tables);
CompactBatch assemble_compact_batch(std::span<const corpus::Document* const> documents,
                                    const corpus::CorpusTables& tables);

/// Batch whose documents have the given token counts; each token is one
/// character, sub-sampling weights are 1 and embeddings are zero. Used for
/// graph statistics and timing.
CompactBatch uniform_token_batch(std::span<const index_t> tokens_per_doc, int embedding_dim = 0);

/// Verifies the structural invariants; throws AssemblyError naming the first violation.
void check_invariants(const CompactBatch& batch);

/// Concatenation of two batches (documents of `b` follow those of `a`).
CompactBatch concat(const CompactBatch& a, const CompactBatch& b);

}  // namespace textgraph::batching
