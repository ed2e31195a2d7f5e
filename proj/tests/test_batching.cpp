#include "textgraph/batching.hpp"
#include "textgraph/container.hpp"
#include "textgraph/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace textgraph;
using namespace textgraph::batching;

namespace {

std::vector<std::int64_t> sorted_items(const Partition& p, std::size_t b, std::span<const std::int64_t> lengths) {
    std::vector<std::int64_t> out;
    for (auto i : p.real_items(b)) out.push_back(lengths[static_cast<std::size_t>(i)]);
    std::sort(out.begin(), out.end(), std::greater<>());
    return out;
}

corpus::CorpusTables tables_for(const std::vector<corpus::LabeledText>& texts) {
    return corpus::CorpusTables::build(texts);
}

}  // namespace

TEST_SUITE("batching") {

TEST_CASE("greedy partition hand trace") {
    const std::vector<std::int64_t> lengths{10, 9, 5, 4, 2, 2};
    const auto p = greedy_k_partition(lengths, 2, 0, false, 0);
    REQUIRE(p.batches.size() == 2);
    CHECK(p.sums == std::vector<std::int64_t>{16, 16});
    CHECK(p.counts == std::vector<std::int64_t>{3, 3});
    std::vector<std::vector<std::int64_t>> sets{sorted_items(p, 0, lengths), sorted_items(p, 1, lengths)};
    std::sort(sets.begin(), sets.end());
    CHECK(sets[0] == std::vector<std::int64_t>{9, 5, 2});
    CHECK(sets[1] == std::vector<std::int64_t>{10, 4, 2});
}

TEST_CASE("greedy partition trivial cases") {
    const std::vector<std::int64_t> one{7};
    const auto p1 = greedy_k_partition(one, 1, 0, false, 0);
    CHECK(p1.sums == std::vector<std::int64_t>{7});
    const std::vector<std::int64_t> fours{3, 3, 3, 3};
    const auto p2 = greedy_k_partition(fours, 2, 0, false, 0);
    CHECK(p2.sums == std::vector<std::int64_t>{6, 6});
    CHECK(p2.counts == std::vector<std::int64_t>{2, 2});
}

TEST_CASE("dummy items pad the count to a multiple of k") {
    const std::vector<std::int64_t> lengths{5, 4, 3, 2, 1};
    const auto p = greedy_k_partition(lengths, 2, 0, false, 0);
    CHECK(p.n_real == 5);
    CHECK(p.counts == std::vector<std::int64_t>{3, 3});
    std::size_t real_total = 0;
    for (std::size_t b = 0; b < p.batches.size(); ++b) real_total += p.real_items(b).size();
    CHECK(real_total == 5);
}

TEST_CASE("partition balance property over random inputs") {
    Rng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        const auto n = 1 + rng.below(300);
        std::vector<std::int64_t> lengths(n);
        for (auto& x : lengths) {
            x = trial % 3 == 0 ? static_cast<std::int64_t>(std::exp(5 + 1.5 * rng.normal())) + 1
                               : static_cast<std::int64_t>(1 + rng.below(1000));
        }
        const int k = 1 + static_cast<int>(rng.below(std::min<std::uint64_t>(n, 25)));
        const int epoch = static_cast<int>(rng.below(4));
        const auto p = greedy_k_partition(lengths, k, epoch, true, rng.next());
        REQUIRE(static_cast<int>(p.batches.size()) == k);
        CHECK(std::all_of(p.counts.begin(), p.counts.end(), [&](auto c) { return c == p.counts[0]; }));
        const auto [mn, mx] = std::minmax_element(p.sums.begin(), p.sums.end());
        CHECK(*mx - *mn <= *std::max_element(lengths.begin(), lengths.end()));
        CHECK(std::is_sorted(p.sums.begin(), p.sums.end(), std::greater<>()));
        // Every real item appears exactly once.
        std::vector<int> seen(n, 0);
        for (std::size_t b = 0; b < p.batches.size(); ++b) {
            for (auto i : p.real_items(b)) ++seen[static_cast<std::size_t>(i)];
        }
        CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
    }
}

TEST_CASE("partition determinism and epoch-zero seed independence") {
    std::vector<std::int64_t> lengths;
    Rng rng(3);
    for (int i = 0; i < 100; ++i) lengths.push_back(static_cast<std::int64_t>(1 + rng.below(500)));
    const auto a = greedy_k_partition(lengths, 7, 0, true, 1);
    const auto b = greedy_k_partition(lengths, 7, 0, true, 999);
    CHECK(a.batches == b.batches);
    const auto c = greedy_k_partition(lengths, 7, 3, true, 5);
    const auto d = greedy_k_partition(lengths, 7, 3, true, 5);
    CHECK(c.batches == d.batches);
    const auto e = greedy_k_partition(lengths, 7, 3, true, 6);
    CHECK(c.batches != e.batches);
}

TEST_CASE("invalid partition arguments") {
    const std::vector<std::int64_t> lengths{1, 2};
    CHECK_THROWS_AS(greedy_k_partition(lengths, 0, 0, false, 0), ArgumentError);
    const std::vector<std::int64_t> negative{1, -2};
    CHECK_THROWS_AS(greedy_k_partition(negative, 1, 0, false, 0), ArgumentError);
}

TEST_CASE("compact batch offsets") {
    const std::vector<corpus::LabeledText> texts{{0, "a b c"}, {1, "d e"}};
    const auto tables = tables_for(texts);
    const std::vector<corpus::Document> docs{tables.make_document(0, texts[0]), tables.make_document(1, texts[1])};
    const auto b = assemble_compact_batch(docs, tables);
    CHECK(b.doc_lower_bounds == std::vector<index_t>{0, 3});
    CHECK(b.token_pos_in_batch == std::vector<index_t>{0, 1, 2, 3, 4});
    CHECK(b.token_pos_in_doc == std::vector<index_t>{0, 1, 2, 0, 1});
    CHECK(b.token_doc_id == std::vector<index_t>{0, 0, 0, 1, 1});
    CHECK(b.labels == std::vector<int>{0, 1});
    check_invariants(b);
}

TEST_CASE("characters map to their token") {
    const std::vector<corpus::LabeledText> texts{{0, "ab"}};
    const auto tables = tables_for(texts);
    const std::vector<corpus::Document> docs{tables.make_document(0, texts[0])};
    const auto b = assemble_compact_batch(docs, tables);
    CHECK(b.char_token_index == std::vector<index_t>{0, 0});
    CHECK(b.char_ids == std::vector<index_t>{'a', 'b'});
}

TEST_CASE("three twelve-token texts give disjoint index ranges") {
    std::vector<corpus::LabeledText> texts;
    for (int d = 0; d < 3; ++d) {
        std::string t;
        for (int i = 0; i < 12; ++i) t += "w" + std::to_string(d * 12 + i) + " ";
        texts.push_back({d % 2, t});
    }
    const auto tables = tables_for(texts);
    std::vector<corpus::Document> docs;
    for (int d = 0; d < 3; ++d) docs.push_back(tables.make_document(d, texts[static_cast<std::size_t>(d)]));
    const auto b = assemble_compact_batch(docs, tables);
    CHECK(b.n_tokens() == 36);
    for (index_t d = 0; d < 3; ++d) {
        CHECK(b.doc_lower_bounds[d] == 12 * d);
        CHECK(b.doc_upper_bound(d) == 12 * (d + 1));
    }
}

TEST_CASE("compact batch conservation over random documents") {
    Rng rng(17);
    std::vector<corpus::LabeledText> texts;
    for (int d = 0; d < 40; ++d) {
        std::string t;
        const auto n = 1 + rng.below(30);
        for (std::uint64_t i = 0; i < n; ++i) t += std::string(1 + rng.below(6), static_cast<char>('a' + rng.below(26))) + (rng.below(5) == 0 ? ", " : " ");
        texts.push_back({static_cast<int>(rng.below(2)), t});
    }
    const auto tables = tables_for(texts);
    std::vector<corpus::Document> docs;
    for (std::size_t d = 0; d < texts.size(); ++d) docs.push_back(tables.make_document(static_cast<index_t>(d), texts[d]));
    const auto b = assemble_compact_batch(docs, tables);
    CHECK(std::accumulate(b.chars_per_doc.begin(), b.chars_per_doc.end(), index_t{0}) == b.n_chars());
    CHECK(std::accumulate(b.tokens_per_doc.begin(), b.tokens_per_doc.end(), index_t{0}) == b.n_tokens());
    CHECK(static_cast<index_t>(b.subsample_p.size()) == b.n_tokens());
    CHECK(static_cast<index_t>(b.embeddings.size()) == b.n_tokens() * b.embedding_dim);
    check_invariants(b);
}

TEST_CASE("empty batches and empty documents are rejected") {
    const std::vector<corpus::LabeledText> texts{{0, "x"}};
    const auto tables = tables_for(texts);
    const std::vector<corpus::Document> none;
    CHECK_THROWS_AS(assemble_compact_batch(none, tables), AssemblyError);
    const std::vector<corpus::Document> blank{tables.make_document(0, {0, "   "})};
    CHECK_THROWS_AS(assemble_compact_batch(blank, tables), AssemblyError);
}

TEST_CASE("concat and uniform batches keep the invariants") {
    const std::vector<index_t> a_len{3, 1}, b_len{2};
    const auto a = uniform_token_batch(a_len, 4);
    const auto b = uniform_token_batch(b_len, 4);
    const auto c = concat(a, b);
    check_invariants(c);
    CHECK(c.n_docs() == 3);
    CHECK(c.doc_lower_bounds == std::vector<index_t>{0, 3, 4});
    CHECK(c.token_pos_in_doc == std::vector<index_t>{0, 1, 2, 0, 0, 1});
}

TEST_CASE("batch container round trip") {
    const std::vector<corpus::LabeledText> texts{{0, "one two three"}, {1, "four, five"}};
    const auto tables = tables_for(texts);
    const std::vector<corpus::Document> docs{tables.make_document(0, texts[0]), tables.make_document(1, texts[1])};
    const std::vector<CompactBatch> batches{assemble_compact_batch(docs, tables), uniform_token_batch(std::vector<index_t>{4}, 64)};
    const auto bytes = io::batches_to_container(batches).to_bytes();
    const auto back = io::batches_from_container(io::Container::from_bytes(bytes));
    REQUIRE(back.size() == 2);
    CHECK(back[0].char_ids == batches[0].char_ids);
    CHECK(back[0].embeddings == batches[0].embeddings);
    CHECK(back[0].doc_keys == batches[0].doc_keys);
    CHECK(back[1].token_pos_in_batch == batches[1].token_pos_in_batch);
    CHECK(io::batches_to_container(back).to_bytes() == bytes);

    auto corrupt = bytes;
    corrupt[0] = 'X';
    CHECK_THROWS_AS(io::Container::from_bytes(corrupt), FormatError);
    CHECK_THROWS_AS(io::Container::from_bytes(std::string_view(bytes).substr(0, bytes.size() / 2)), FormatError);
}

}  // TEST_SUITE
