#include "textgraph/batching.hpp"
#include "textgraph/graphgen.hpp"
#include "textgraph/graphstats.hpp"
#include "textgraph/oracles.hpp"
#include "textgraph/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace textgraph;
using namespace textgraph::graphgen;

namespace {

GraphConfig small_config(int k1, int k2) {
    GraphConfig cfg;
    cfg.n_lattice = k1;
    cfg.n_random = k2;
    cfg.heads = 1;
    cfg.subsample = false;
    return cfg;
}

EdgeList make_edges(std::vector<std::pair<index_t, index_t>> pairs, int heads = 1) {
    EdgeList e;
    for (const auto& [s, t] : pairs) {
        e.src.push_back(s);
        e.dst.push_back(t);
    }
    assign_heads(e, heads);
    return e;
}

std::vector<std::pair<index_t, index_t>> pairs_of(const EdgeList& e) {
    std::vector<std::pair<index_t, index_t>> out;
    for (index_t i = 0; i < e.size(); ++i) out.emplace_back(e.src[static_cast<std::size_t>(i)], e.dst[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace

TEST_SUITE("graphgen") {

TEST_CASE("lattice targets") {
    const auto batch = batching::uniform_token_batch(std::vector<index_t>{10, 10});
    auto cfg = small_config(4, 0);
    const auto meta = calc_graph_metadata(batch, cfg);
    const std::vector<index_t> expected{9, 1, 3, 5};
    CHECK(std::vector<index_t>(meta.lattice.begin() + 7 * 4, meta.lattice.begin() + 8 * 4) == expected);
    CHECK(meta.lattice[10 * 4] == 12);
}

TEST_CASE("single-token documents target themselves and get no edges") {
    const auto batch = batching::uniform_token_batch(std::vector<index_t>{1});
    const auto cfg = small_config(3, 2);
    const auto meta = calc_graph_metadata(batch, cfg);
    CHECK(std::all_of(meta.lattice.begin(), meta.lattice.end(), [](index_t t) { return t == 0; }));
    CHECK(std::all_of(meta.random.begin(), meta.random.end(), [](index_t t) { return t == 0; }));
    const auto edges = create_edges(meta, 1);
    CHECK(edges.size() == 0);
    CHECK(edges.raw_count == 5);
}

TEST_CASE("random targets stay inside the document") {
    const auto batch = batching::uniform_token_batch(std::vector<index_t>{7, 30, 2});
    const auto cfg = small_config(2, 6);
    for (std::uint64_t step = 0; step < 20; ++step) {
        const auto meta = calc_graph_metadata(batch, cfg, step);
        for (std::size_t i = 0; i < meta.random.size(); ++i) {
            const auto token = static_cast<index_t>(i / 6);
            const auto doc = batch.token_doc_id[static_cast<std::size_t>(token)];
            CHECK(meta.random[i] >= batch.doc_lower_bounds[doc]);
            CHECK(meta.random[i] < batch.doc_upper_bound(doc));
        }
    }
}

TEST_CASE("raw pair count and deduplicated simple graph") {
    const auto batch = batching::uniform_token_batch(std::vector<index_t>{12, 12, 12});
    auto cfg = small_config(8, 4);
    cfg.lattice_begin = 2;
    cfg.lattice_step = 2;
    const auto edges = generate_graph(batch, cfg);
    CHECK(edges.raw_count == 36 * 12);
    CHECK(edges.size() <= 432);
    std::set<std::pair<index_t, index_t>> undirected;
    for (const auto& [s, t] : pairs_of(edges)) {
        CHECK(s != t);
        CHECK(undirected.insert({std::min(s, t), std::max(s, t)}).second);
    }
    CHECK(count_cross_document_edges(edges, batch) == 0);
}

TEST_CASE("deduplication matches a set-based oracle") {
    Rng rng(31);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<index_t> lengths(1 + rng.below(5));
        for (auto& l : lengths) l = static_cast<index_t>(1 + rng.below(trial % 2 == 0 ? 12 : 60));
        const auto batch = batching::uniform_token_batch(lengths);
        auto cfg = small_config(static_cast<int>(rng.below(9)), static_cast<int>(rng.below(7)));
        cfg.lattice_begin = 1 + static_cast<int>(rng.below(4));
        cfg.lattice_step = 1 + static_cast<int>(rng.below(4));
        cfg.rng_seed = rng.next();
        const auto meta = calc_graph_metadata(batch, cfg, static_cast<std::uint64_t>(trial));
        const auto edges = create_edges(meta, 1);

        const auto n = static_cast<std::size_t>(batch.n_tokens());
        const auto k1 = static_cast<std::size_t>(cfg.n_lattice), k2 = static_cast<std::size_t>(cfg.n_random);
        std::set<std::pair<index_t, index_t>> seen;
        std::vector<std::pair<index_t, index_t>> lattice, random;
        for (std::size_t j = 0; j < k1 + k2; ++j) {
            for (std::size_t i = 0; i < n; ++i) {
                const auto s = static_cast<index_t>(i);
                const auto t = j < k1 ? meta.lattice[i * k1 + j] : meta.random[i * k2 + j - k1];
                if (s == t || !seen.insert({std::min(s, t), std::max(s, t)}).second) continue;
                (j < k1 ? lattice : random).emplace_back(s, t);
            }
        }
        std::vector<std::pair<index_t, index_t>> got_lattice, got_random;
        for (index_t e = 0; e < edges.size(); ++e) {
            const auto u = static_cast<std::size_t>(e);
            (edges.kind[u] == EdgeKind::lattice ? got_lattice : got_random).emplace_back(edges.src[u], edges.dst[u]);
        }
        std::sort(lattice.begin(), lattice.end());
        std::sort(random.begin(), random.end());
        std::sort(got_lattice.begin(), got_lattice.end());
        std::sort(got_random.begin(), got_random.end());
        REQUIRE(got_lattice == lattice);
        REQUIRE(got_random == random);
    }
}

TEST_CASE("generation is deterministic per seed and step") {
    const auto batch = batching::uniform_token_batch(std::vector<index_t>{50, 80});
    GraphConfig cfg;
    cfg.rng_seed = 4;
    const auto a = generate_graph(batch, cfg, 3);
    const auto b = generate_graph(batch, cfg, 3);
    CHECK(a.src == b.src);
    CHECK(a.dst == b.dst);
    const auto c = generate_graph(batch, cfg, 4);
    CHECK((a.src != c.src || a.dst != c.dst));
}

TEST_CASE("document streams do not depend on batch position") {
    std::string long_text;
    for (int i = 0; i < 40; ++i) long_text += "t" + std::to_string(i) + " ";
    const std::vector<corpus::LabeledText> texts{{0, "a b c d e"}, {1, long_text}};
    const auto tables = corpus::CorpusTables::build(texts);
    const std::vector<corpus::Document> solo{tables.make_document(1, texts[1])};
    const std::vector<corpus::Document> pair{tables.make_document(0, texts[0]), tables.make_document(1, texts[1])};
    const auto a = calc_graph_metadata(batching::assemble_compact_batch(solo, tables), small_config(0, 4));
    const auto b = calc_graph_metadata(batching::assemble_compact_batch(pair, tables), small_config(0, 4));
    for (std::size_t i = 0; i < a.random.size(); ++i) CHECK(a.random[i] + 5 == b.random[5 * 4 + i]);
}

TEST_CASE("head chunks have equal size") {
    const auto batch = batching::uniform_token_batch(std::vector<index_t>{37, 11});
    GraphConfig cfg;
    cfg.subsample = false;
    const auto edges = generate_graph(batch, cfg);
    CHECK(edges.size() % cfg.heads == 0);
    CHECK(edges.heads == cfg.heads);
    for (index_t e = 0; e < edges.size(); ++e) CHECK(edges.head[static_cast<std::size_t>(e)] == e / edges.per_head());
}

TEST_CASE("sub-sampling identity and top-k") {
    const auto all = make_edges({{0, 1}, {2, 3}, {4, 5}, {6, 7}, {1, 2}, {3, 4}});
    const std::vector<real> ones(8, 1.0);
    const auto same = subsample_edges(all, ones, 1.0, 1);
    CHECK(pairs_of(same) == pairs_of(all));

    const std::vector<real> p{1.0, 1.0, 0.75, 0.75, 0.5, 0.5, 0.25, 0.25};
    const auto four = make_edges({{4, 5}, {0, 1}, {6, 7}, {2, 3}});
    const auto kept = subsample_edges(four, p, 0.5, 1);
    CHECK(pairs_of(kept) == std::vector<std::pair<index_t, index_t>>{{0, 1}, {2, 3}});
}

TEST_CASE("sub-sampling keeps int(p_keep * E/H) per head") {
    std::vector<std::pair<index_t, index_t>> pairs;
    for (index_t i = 0; i < 16; ++i) pairs.emplace_back(i, (i + 1) % 16);
    const auto edges = make_edges(pairs, 2);
    Rng rng(1);
    std::vector<real> p(16);
    for (auto& x : p) x = static_cast<real>(rng.uniform());
    const auto kept = subsample_edges(edges, p, 0.25, 2);
    CHECK(kept.size() == 4);
    CHECK(kept.per_head() == 2);
    // Brute force: each head keeps its two best-scoring edges.
    for (int h = 0; h < 2; ++h) {
        std::vector<std::pair<real, index_t>> scores;
        for (index_t e = 8 * h; e < 8 * (h + 1); ++e) scores.push_back({p[static_cast<std::size_t>(pairs[static_cast<std::size_t>(e)].first)] + p[static_cast<std::size_t>(pairs[static_cast<std::size_t>(e)].second)], e});
        std::sort(scores.begin(), scores.end(), std::greater<>());
        std::set<index_t> best{scores[0].second, scores[1].second};
        for (index_t k = 2 * h; k < 2 * h + 2; ++k) {
            const std::pair<index_t, index_t> got{kept.src[static_cast<std::size_t>(k)], kept.dst[static_cast<std::size_t>(k)]};
            const auto idx = static_cast<index_t>(std::find(pairs.begin(), pairs.end(), got) - pairs.begin());
            CHECK(best.count(idx) == 1);
        }
    }
}

TEST_CASE("update_graph without pruning is the identity") {
    const auto batch = batching::uniform_token_batch(std::vector<index_t>{30});
    auto cfg = small_config(4, 2);
    const auto edges = generate_graph(batch, cfg);
    const std::vector<real> att(static_cast<std::size_t>(edges.size()), 0.5);
    const auto out = update_graph(edges, att, cfg.n_lattice + cfg.n_random, batch, cfg, 1);
    CHECK(pairs_of(out) == pairs_of(edges));
}

TEST_CASE("update_graph keeps the strongest edge and refills the rest") {
    const auto batch = batching::uniform_token_batch(std::vector<index_t>{10});
    const auto edges = make_edges({{0, 3}, {0, 5}, {0, 7}});
    const std::vector<real> att{0.05, 0.9, 0.05};
    const auto out = update_graph(edges, att, 1, batch, small_config(0, 0), 0);
    REQUIRE(out.size() == 3);
    CHECK(out.src[0] == 0);
    CHECK(out.dst[0] == 5);
    for (std::size_t e = 1; e < 3; ++e) {
        CHECK(out.src[e] == 0);
        CHECK(out.kind[e] == EdgeKind::refill);
        CHECK(out.dst[e] != 0);
        CHECK(out.dst[e] != 5);
    }
    CHECK(out.dst[1] != out.dst[2]);
}

TEST_CASE("refilled edges respect document boundaries") {
    Rng rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<index_t> lengths(1 + rng.below(6));
        for (auto& l : lengths) l = static_cast<index_t>(1 + rng.below(25));
        const auto batch = batching::uniform_token_batch(lengths);
        GraphConfig cfg;
        cfg.heads = 1 + static_cast<int>(rng.below(4));
        cfg.rng_seed = rng.next();
        const auto edges = generate_graph(batch, cfg, static_cast<std::uint64_t>(trial));
        std::vector<real> att(static_cast<std::size_t>(edges.size()));
        for (auto& a : att) a = static_cast<real>(rng.uniform());
        const auto out = update_graph(edges, att, static_cast<int>(rng.below(5)), batch, cfg, 1);
        REQUIRE(count_cross_document_edges(out, batch) == 0);
    }
}

TEST_CASE("invalid configurations are rejected") {
    GraphConfig cfg;
    cfg.heads = 0;
    CHECK_THROWS(cfg.validate());
    cfg = GraphConfig{};
    cfg.p_keep = 1.5;
    CHECK_THROWS(cfg.validate());
    const auto edges = make_edges({{0, 1}});
    const auto batch = batching::uniform_token_batch(std::vector<index_t>{2});
    const std::vector<real> wrong(3, 0.0);
    CHECK_THROWS_AS(update_graph(edges, wrong, 1, batch, GraphConfig{}, 0), ArgumentError);
}

}  // TEST_SUITE

TEST_SUITE("graphstats") {

TEST_CASE("complete graph and path") {
    const auto k3 = graphstats::analyze(make_edges({{0, 1}, {1, 2}, {2, 0}}), 0, 3);
    CHECK(k3.density == doctest::Approx(1.0));
    CHECK(k3.diameter == 1);
    CHECK(k3.avg_clustering == doctest::Approx(1.0));
    CHECK(k3.avg_shortest_path == doctest::Approx(1.0));

    const auto p4 = graphstats::analyze(make_edges({{0, 1}, {1, 2}, {2, 3}}), 0, 4);
    CHECK(p4.density == doctest::Approx(0.5));
    CHECK(p4.diameter == 3);
    CHECK(p4.avg_clustering == 0.0);
    CHECK(p4.avg_shortest_path == doctest::Approx(10.0 / 6.0));
}

TEST_CASE("range restriction and duplicate directions") {
    const auto e = make_edges({{5, 6}, {6, 5}, {6, 7}, {0, 1}});
    const auto r = graphstats::analyze(e, 5, 8);
    CHECK(r.nodes == 3);
    CHECK(r.edges == 2);
    CHECK(r.diameter == 2);
}

TEST_CASE("disconnected pairs are excluded and diameter uses the largest component") {
    const auto r = graphstats::analyze_pairs({{0, 1}, {1, 2}, {2, 3}, {4, 5}}, 7);
    CHECK(r.diameter == 3);
    CHECK(r.avg_shortest_path == doctest::Approx((2.0 * (3 + 2 + 1 + 1 + 1 + 2) + 2.0) / 14.0));
}

TEST_CASE("analyze agrees with Floyd-Warshall on random graphs") {
    Rng rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const auto n = static_cast<index_t>(1 + rng.below(50));
        std::vector<std::pair<index_t, index_t>> pairs;
        const auto m = rng.below(static_cast<std::uint64_t>(3 * n + 1));
        for (std::uint64_t i = 0; i < m; ++i) {
            pairs.emplace_back(static_cast<index_t>(rng.below(static_cast<std::uint64_t>(n))),
                               static_cast<index_t>(rng.below(static_cast<std::uint64_t>(n))));
        }
        const auto got = graphstats::analyze_pairs(pairs, n);
        const auto want = oracles::brute_force_topology(pairs, n);
        REQUIRE(got.edges == want.edges);
        CHECK(got.density == doctest::Approx(want.density).epsilon(1e-12));
        CHECK(got.avg_clustering == doctest::Approx(want.avg_clustering).epsilon(1e-12));
        CHECK(got.avg_shortest_path == doctest::Approx(want.avg_shortest_path).epsilon(1e-12));
        CHECK(got.diameter == want.diameter);
    }
}

TEST_CASE("adding an edge never lengthens a shortest path") {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = static_cast<index_t>(2 + rng.below(30));
        std::vector<std::pair<index_t, index_t>> pairs;
        for (int i = 0; i < n; ++i) {
            pairs.emplace_back(static_cast<index_t>(rng.below(static_cast<std::uint64_t>(n))),
                               static_cast<index_t>(rng.below(static_cast<std::uint64_t>(n))));
        }
        const auto before = oracles::floyd_warshall(pairs, n);
        pairs.emplace_back(static_cast<index_t>(rng.below(static_cast<std::uint64_t>(n))),
                           static_cast<index_t>(rng.below(static_cast<std::uint64_t>(n))));
        const auto after = oracles::floyd_warshall(pairs, n);
        for (std::size_t i = 0; i < before.size(); ++i) {
            for (std::size_t j = 0; j < before.size(); ++j) {
                if (before[i][j] >= 0) CHECK(after[i][j] <= before[i][j]);
                if (before[i][j] >= 0) CHECK(after[i][j] >= 0);
            }
        }
    }
}

TEST_CASE("generated 360-token graph reproduces the published sample") {
    const auto batch = batching::uniform_token_batch(std::vector<index_t>{360});
    GraphConfig cfg;
    cfg.lattice_begin = 2;
    cfg.lattice_step = 2;
    cfg.n_lattice = 8;
    cfg.n_random = 4;
    const auto r = graphstats::analyze(generate_graph(batch, cfg), 0, 360);
    CHECK(r.density == doctest::Approx(0.0551).epsilon(0.005 / 0.0551));
    CHECK(r.diameter == 4);
}

}  // TEST_SUITE
