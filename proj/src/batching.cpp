#include "textgraph/batching.hpp"
#include "textgraph/rng.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace textgraph::batching {

std::vector<index_t> Partition::real_items(std::size_t b) const {
    std::vector<index_t> out;
    for (auto id : batches[b]) {
        if (id < n_real) out.push_back(id);
    }
    return out;
}

Partition greedy_k_partition(std::span<const std::int64_t> lengths, int k, int epoch, bool shuffle,
                             std::uint64_t rng_seed) {
    const auto n_real = static_cast<index_t>(lengths.size());
    if (k < 1) throw ArgumentError("greedy_k_partition: k must be >= 1");
    if (k > n_real) {
        throw ArgumentError("greedy_k_partition: k = " + std::to_string(k) + " exceeds item count " +
                            std::to_string(n_real));
    }
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        if (lengths[i] < 0) {
            throw ArgumentError("greedy_k_partition: item " + std::to_string(i) + " has negative length " +
                                std::to_string(lengths[i]));
        }
    }
    std::vector<std::int64_t> padded(lengths.begin(), lengths.end());
    while (padded.size() % static_cast<std::size_t>(k) != 0) padded.push_back(0);
    const auto n = padded.size();
    const auto capacity = static_cast<std::int64_t>(n / static_cast<std::size_t>(k));

    std::vector<index_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](index_t a, index_t b) { return padded[a] > padded[b]; });

    if (shuffle && epoch > 0) {
        Rng rng(rng_seed, Stream::partition, {static_cast<std::uint64_t>(epoch)});
        for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(k)) {
            const auto end = std::min(n, begin + static_cast<std::size_t>(k));
            rng.shuffle(order.begin() + static_cast<std::ptrdiff_t>(begin),
                        order.begin() + static_cast<std::ptrdiff_t>(end));
        }
    }

    Partition p;
    p.n_real = n_real;
    p.batches.assign(static_cast<std::size_t>(k), {});
    p.sums.assign(static_cast<std::size_t>(k), 0);
    p.counts.assign(static_cast<std::size_t>(k), 0);
    for (auto item : order) {
        std::size_t best = p.batches.size();
        for (std::size_t j = 0; j < p.batches.size(); ++j) {
            if (p.counts[j] >= capacity) continue;
            if (best == p.batches.size() || p.sums[j] < p.sums[best]) best = j;
        }
        p.batches[best].push_back(item);
        p.sums[best] += padded[static_cast<std::size_t>(item)];
        ++p.counts[best];
    }

    std::vector<std::size_t> by_sum(p.batches.size());
    std::iota(by_sum.begin(), by_sum.end(), 0);
    std::stable_sort(by_sum.begin(), by_sum.end(),
                     [&](std::size_t a, std::size_t b) { return p.sums[a] > p.sums[b]; });
    Partition sorted;
    sorted.n_real = n_real;
    for (auto j : by_sum) {
        sorted.batches.push_back(std::move(p.batches[j]));
        sorted.sums.push_back(p.sums[j]);
        sorted.counts.push_back(p.counts[j]);
    }
    return sorted;
}

std::vector<index_t> CompactBatch::char_doc_ids() const {
    std::vector<index_t> out;
    out.reserve(char_ids.size());
    for (index_t d = 0; d < n_docs(); ++d) {
        out.insert(out.end(), static_cast<std::size_t>(chars_per_doc[d]), d);
    }
    return out;
}

std::uint64_t document_key(const corpus::Document& doc) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : doc.tokens) {
        for (index_t c = t.char_start; c < t.char_start + t.char_len; ++c) {
            h = mix_seed({h, static_cast<std::uint64_t>(doc.chars[static_cast<std::size_t>(c)])});
        }
        h = mix_seed({h, 0xffffffffULL});
    }
    return h;
}

CompactBatch assemble_compact_batch(std::span<const corpus::Document* const> documents,
                                    const corpus::CorpusTables& tables) {
    if (documents.empty()) throw AssemblyError("cannot assemble an empty batch");
    CompactBatch b;
    b.embedding_dim = tables.options().embedding_dim;
    index_t token_base = 0;
    for (std::size_t n = 0; n < documents.size(); ++n) {
        const auto& doc = *documents[n];
        if (doc.tokens.empty()) {
            throw AssemblyError("document " + std::to_string(doc.id) + " has no tokens");
        }
        b.doc_lower_bounds.push_back(token_base);
        b.tokens_per_doc.push_back(static_cast<index_t>(doc.tokens.size()));
        b.labels.push_back(doc.label);
        b.doc_ids.push_back(doc.id);
        b.doc_keys.push_back(document_key(doc));
        index_t doc_chars = 0;
        for (std::size_t j = 0; j < doc.tokens.size(); ++j) {
            const auto& t = doc.tokens[j];
            if (t.char_len < 1) {
                throw AssemblyError("document " + std::to_string(doc.id) + " token " + std::to_string(j) +
                                    " has zero length");
            }
            const index_t token_index = token_base + static_cast<index_t>(j);
            for (index_t c = t.char_start; c < t.char_start + t.char_len; ++c) {
                b.char_ids.push_back(doc.chars.at(static_cast<std::size_t>(c)));
                b.char_token_index.push_back(token_index);
            }
            doc_chars += t.char_len;
            b.token_char_counts.push_back(t.char_len);
            b.token_pos_in_doc.push_back(static_cast<index_t>(j));
            b.token_pos_in_batch.push_back(token_index);
            b.token_doc_id.push_back(static_cast<index_t>(n));
            b.subsample_p.push_back(static_cast<real>(t.subsample_p));
            b.polarity.push_back(static_cast<real>(t.polarity));
            b.subjectivity.push_back(static_cast<real>(t.subjectivity));
            auto e = tables.embedding_for(t);
            b.embeddings.insert(b.embeddings.end(), e.begin(), e.end());
        }
        b.chars_per_doc.push_back(doc_chars);
        token_base += static_cast<index_t>(doc.tokens.size());
    }
    return b;
}

CompactBatch assemble_compact_batch(std::span<const corpus::Document> documents,
                                    const corpus::CorpusTables& tables) {
    std::vector<const corpus::Document*> ptrs;
    ptrs.reserve(documents.size());
    for (const auto& d : documents) ptrs.push_back(&d);
    return assemble_compact_batch(std::span<const corpus::Document* const>(ptrs), tables);
}

CompactBatch uniform_token_batch(std::span<const index_t> tokens_per_doc, int embedding_dim) {
    if (tokens_per_doc.empty()) throw AssemblyError("cannot assemble an empty batch");
    CompactBatch b;
    b.embedding_dim = embedding_dim;
    index_t base = 0;
    for (std::size_t n = 0; n < tokens_per_doc.size(); ++n) {
        const auto m = tokens_per_doc[n];
        if (m < 1) throw AssemblyError("document " + std::to_string(n) + " has no tokens");
        b.doc_lower_bounds.push_back(base);
        b.tokens_per_doc.push_back(m);
        b.chars_per_doc.push_back(m);
        b.labels.push_back(0);
        b.doc_ids.push_back(static_cast<index_t>(n));
        b.doc_keys.push_back(mix_seed({0x5a5a5a5aULL, static_cast<std::uint64_t>(n)}));
        for (index_t j = 0; j < m; ++j) {
            b.char_ids.push_back('a');
            b.char_token_index.push_back(base + j);
            b.token_char_counts.push_back(1);
            b.token_pos_in_doc.push_back(j);
            b.token_pos_in_batch.push_back(base + j);
            b.token_doc_id.push_back(static_cast<index_t>(n));
            b.subsample_p.push_back(1);
            b.polarity.push_back(0);
            b.subjectivity.push_back(0);
        }
        base += m;
    }
    b.embeddings.assign(static_cast<std::size_t>(base * embedding_dim), real(0));
    return b;
}

void check_invariants(const CompactBatch& b) {
    auto fail = [](const std::string& what) { throw AssemblyError("compact batch invariant: " + what); };
    const auto n_tok = b.n_tokens();
    index_t chars = 0;
    index_t toks = 0;
    for (index_t n = 0; n < b.n_docs(); ++n) {
        if (b.doc_lower_bounds[n] != toks) fail("doc_lower_bounds is not the cumulative token count");
        chars += b.chars_per_doc[n];
        toks += b.tokens_per_doc[n];
    }
    if (chars != b.n_chars()) fail("sum(chars_per_doc) != length(char_ids)");
    if (toks != n_tok) fail("sum(tokens_per_doc) != token count");
    if (static_cast<index_t>(b.char_token_index.size()) != b.n_chars()) fail("char_token_index length");
    for (auto* v : {&b.token_char_counts, &b.token_pos_in_doc, &b.token_doc_id}) {
        if (static_cast<index_t>(v->size()) != n_tok) fail("token array length");
    }
    if (static_cast<index_t>(b.subsample_p.size()) != n_tok || static_cast<index_t>(b.polarity.size()) != n_tok ||
        static_cast<index_t>(b.subjectivity.size()) != n_tok) {
        fail("token metadata length");
    }
    if (static_cast<index_t>(b.embeddings.size()) != n_tok * b.embedding_dim) fail("embedding matrix size");
    for (index_t i = 0; i < n_tok; ++i) {
        if (b.token_pos_in_batch[i] != i) fail("p_b is not consecutive");
        const auto d = b.token_doc_id[i];
        if (b.token_pos_in_doc[i] != i - b.doc_lower_bounds[d]) fail("p_n != p_b - l_n");
    }
    index_t c = 0;
    for (index_t i = 0; i < n_tok; ++i) {
        for (index_t r = 0; r < b.token_char_counts[i]; ++r, ++c) {
            if (b.char_token_index[c] != i) fail("char_token_index is not repeat-interleave of token indices");
        }
    }
}

CompactBatch concat(const CompactBatch& a, const CompactBatch& b) {
    if (a.embedding_dim != b.embedding_dim) throw AssemblyError("concat: embedding dims differ");
    CompactBatch out = a;
    const auto tok_off = a.n_tokens();
    const auto doc_off = a.n_docs();
    auto append = [](auto& dst, const auto& src) { dst.insert(dst.end(), src.begin(), src.end()); };
    append(out.char_ids, b.char_ids);
    append(out.chars_per_doc, b.chars_per_doc);
    for (auto v : b.char_token_index) out.char_token_index.push_back(v + tok_off);
    append(out.tokens_per_doc, b.tokens_per_doc);
    append(out.token_char_counts, b.token_char_counts);
    append(out.token_pos_in_doc, b.token_pos_in_doc);
    for (auto v : b.token_pos_in_batch) out.token_pos_in_batch.push_back(v + tok_off);
    for (auto v : b.token_doc_id) out.token_doc_id.push_back(v + doc_off);
    for (auto v : b.doc_lower_bounds) out.doc_lower_bounds.push_back(v + tok_off);
    append(out.subsample_p, b.subsample_p);
    append(out.polarity, b.polarity);
    append(out.subjectivity, b.subjectivity);
    append(out.embeddings, b.embeddings);
    append(out.labels, b.labels);
    append(out.doc_ids, b.doc_ids);
    append(out.doc_keys, b.doc_keys);
    return out;
}

}  // namespace textgraph::batching
