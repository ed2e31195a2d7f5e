#include "textgraph/config.hpp"
#include "textgraph/metrics.hpp"
#include "textgraph/model.hpp"
#include "textgraph/optim.hpp"
#include "textgraph/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <unistd.h>

using namespace textgraph;

namespace {

model::ModelConfig tiny_config() {
    model::ModelConfig cfg;
    cfg.hidden_dim = 8;
    cfg.inject_dim = 8;
    cfg.char_vocab = 128;
    cfg.mlp_hidden = 8;
    cfg.sentiment_expand = 4;
    cfg.dropout = 0;
    cfg.boundary_mask = true;
    cfg.graph.heads = 2;
    cfg.graph.n_lattice = 4;
    cfg.graph.n_random = 2;
    cfg.graph.keep_per_node = 3;
    return cfg;
}

corpus::CorpusOptions tiny_corpus() {
    corpus::CorpusOptions o;
    o.embedding_dim = 8;
    o.charset_size = 128;
    return o;
}

struct Fixture {
    std::vector<corpus::LabeledText> texts;
    corpus::CorpusTables tables;
    std::vector<corpus::Document> docs;

    explicit Fixture(std::vector<corpus::LabeledText> t) : texts(std::move(t)) {
        tables = corpus::CorpusTables::build(texts, tiny_corpus());
        docs = trainer::make_documents(texts, tables);
    }

    batching::CompactBatch batch(std::vector<std::size_t> order) const {
        std::vector<const corpus::Document*> ptrs;
        for (auto i : order) ptrs.push_back(&docs[i]);
        return batching::assemble_compact_batch(std::span<const corpus::Document* const>(ptrs), tables);
    }
};

Fixture small_fixture() {
    return Fixture({{1, "a truly great and moving film"},
                    {0, "awful, just awful acting here"},
                    {1, "great"},
                    {0, "the plot was dull and the pacing slow"}});
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() / ("textgraph-test-" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_SUITE("model") {

TEST_CASE("a one-token document yields one row of logits") {
    const Fixture f({{0, "x"}});
    model::Model m(tiny_config());
    const auto out = m.forward(f.batch({0}), false);
    CHECK(out.logits.shape() == Shape{1, 2});
    for (auto v : out.logits.values()) CHECK(std::isfinite(v));
}

TEST_CASE("duplicated documents get identical logits") {
    const auto f = small_fixture();
    model::Model m(tiny_config());
    const auto out = m.forward(f.batch({0, 0}), false);
    CHECK(out.logits[0] == out.logits[2]);
    CHECK(out.logits[1] == out.logits[3]);
}

TEST_CASE("reordering documents reorders the logits") {
    const auto f = small_fixture();
    for (auto variant : {layers::GnnVariant::gatv2, layers::GnnVariant::sparse_attention}) {
        auto cfg = tiny_config();
        cfg.gnn_variant = variant;
        cfg.graph.subsample = false;
        // Per-node normalization and a single head keep documents independent.
        cfg.graph.heads = 1;
        cfg.per_node_softmax = true;
        model::Model m(cfg);
        const auto a = m.forward(f.batch({0, 1, 2, 3}), false).logits;
        const auto b = m.forward(f.batch({2, 0, 3, 1}), false).logits;
        const std::vector<index_t> where{1, 3, 0, 2};
        for (index_t d = 0; d < 4; ++d) {
            for (index_t c = 0; c < 2; ++c) {
                CHECK(a[d * 2 + c] == doctest::Approx(b[where[static_cast<std::size_t>(d)] * 2 + c]).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("evaluation forward passes are deterministic") {
    const auto f = small_fixture();
    model::Model m(tiny_config());
    const auto batch = f.batch({0, 1, 2, 3});
    CHECK(m.forward(batch, false).logits.values() == m.forward(batch, false).logits.values());
    model::Model again(tiny_config());
    CHECK(m.forward(batch, false).logits.values() == again.forward(batch, false).logits.values());
}

TEST_CASE("embedding dimension mismatch is rejected") {
    const auto f = small_fixture();
    auto cfg = tiny_config();
    cfg.inject_dim = 16;
    model::Model m(cfg);
    CHECK_THROWS_AS(m.forward(f.batch({0}), false), ShapeError);
}

TEST_CASE("a few small optimizer steps lower the loss") {
    const auto f = small_fixture();
    model::Model m(tiny_config());
    const auto batch = f.batch({0, 1, 2, 3});
    optim::AdamW opt(m.parameters().params(), 1e-3, 0.0);
    double previous = 1e300;
    for (int step = 0; step < 10; ++step) {
        Tape tape;
        double loss_value = 0;
        {
            TapeScope scope(tape);
            const auto loss = ops::cross_entropy(m.forward(batch, false).logits, batch.labels);
            loss_value = loss.item();
            opt.zero_grad();
            tape.backward(loss);
        }
        opt.step();
        CHECK(loss_value < previous);
        previous = loss_value;
    }
}

TEST_CASE("checkpoints round trip") {
    const auto f = small_fixture();
    TempDir dir;
    const auto path = (dir.path / "m.ckpt").string();
    auto cfg = tiny_config();
    cfg.seed = 42;
    model::Model m(cfg);
    m.save(path, R"({"note": "x"})");
    const auto back = model::Model::load(path);
    CHECK(back.config().seed == 42);
    CHECK(back.parameters().count() == m.parameters().count());
    const auto batch = f.batch({0, 1, 2, 3});
    CHECK(back.forward(batch, false).logits.values() == m.forward(batch, false).logits.values());
    CHECK_THROWS(model::Model::load((dir.path / "missing.ckpt").string()));
}

}  // TEST_SUITE

TEST_SUITE("training") {

TEST_CASE("learning-rate schedule") {
    const optim::MultiStepLR lr(0.0032, {15, 20, 30, 38, 40, 45, 50}, 0.5);
    CHECK(lr.lr_at(0) == doctest::Approx(0.0032));
    CHECK(lr.lr_at(14) == doctest::Approx(0.0032));
    CHECK(lr.lr_at(15) == doctest::Approx(0.0016));
    CHECK(lr.lr_at(69) == doctest::Approx(0.0032 * std::pow(0.5, 7)));
}

TEST_CASE("AdamW first step moves each coordinate by about lr") {
    auto p = Tensor::from({3}, {1, -2, 0.5}, true);
    optim::AdamW opt({p}, 0.1, 0.0);
    p.grad() = {2, -0.001, 0};
    opt.step();
    CHECK(p[0] == doctest::Approx(0.9));
    CHECK(p[1] == doctest::Approx(-1.9).epsilon(1e-4));
    CHECK(p[2] == 0.5);

    auto q = Tensor::from({1}, {2}, true);
    optim::AdamW decay({q}, 0.1, 0.5);
    decay.step();
    CHECK(q[0] == doctest::Approx(2 - 0.1 * 0.5 * 2));
}

TEST_CASE("classification metrics") {
    metrics::ConfusionMatrix cm(2);
    cm.add(0, 0);
    cm.add(0, 0);
    cm.add(0, 1);
    cm.add(1, 1);
    const auto m = cm.metrics();
    CHECK(m.accuracy == doctest::Approx(0.75));
    CHECK(m.precision == doctest::Approx((1.0 + 0.5) / 2));
    CHECK(m.recall == doctest::Approx((2.0 / 3.0 + 1.0) / 2));
    CHECK(m.f1 == doctest::Approx((0.8 + 2.0 / 3.0) / 2));
    metrics::ConfusionMatrix none(2);
    none.add(0, 0);
    CHECK(none.metrics().precision == doctest::Approx(0.5));
}

TEST_CASE("flop estimate") {
    auto cfg = tiny_config();
    const auto a = model::flop_estimate(cfg, 500, 100, 4);
    const auto b = model::flop_estimate(cfg, 1000, 200, 8);
    CHECK(b.total == doctest::Approx(2 * a.total));
    CHECK(b.per_doc == doctest::Approx(a.per_doc));
    CHECK(model::conv_macs(100, 64, 64, 3) == 1'228'800);
    cfg.n_layers = 0;
    const auto z = model::flop_estimate(cfg, 500, 100, 4);
    CHECK(z.component("cnn_gnn1.gnn") == 0);
    CHECK(z.total < a.total);
}

TEST_CASE("corpus split is deterministic and sized") {
    std::vector<corpus::LabeledText> texts;
    for (int i = 0; i < 23; ++i) texts.push_back({i % 2, "doc " + std::to_string(i)});
    const auto a = trainer::split_corpus(texts, 0.2, 1);
    const auto b = trainer::split_corpus(texts, 0.2, 1);
    CHECK(a.validation.size() == 5);
    CHECK(a.train.size() == 18);
    for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].text == b.train[i].text);
}

TEST_CASE("training writes the best checkpoint and reports every epoch") {
    auto f = small_fixture();
    TempDir dir;
    auto cfg = tiny_config();
    cfg.epochs = 2;
    cfg.batch_size = 2;
    model::Model m(cfg);
    trainer::TrainOptions opts;
    opts.checkpoint_path = (dir.path / "best.ckpt").string();
    const auto report = trainer::train(m, f.docs, f.docs, f.tables, opts);
    CHECK(report.epochs.size() == 3);
    CHECK(report.best_epoch >= 0);
    CHECK(std::filesystem::exists(opts.checkpoint_path));
    const auto best = model::Model::load(opts.checkpoint_path);
    const auto eval = trainer::evaluate(best, f.docs, f.tables, 2);
    CHECK(eval.metrics.accuracy == doctest::Approx(report.best_val_accuracy));
}

}  // TEST_SUITE

TEST_SUITE("config") {

TEST_CASE("flat config parsing, overrides and round trip") {
    std::istringstream in("# comment\nhidden_dim=32\n\nlr = 0.001\nheads=4\nhidden_dim=16\n");
    auto flat = config::FlatConfig::parse(in);
    flat.apply("dropout=0.1");
    const auto s = config::resolve(flat);
    CHECK(s.model.hidden_dim == 16);
    CHECK(s.model.lr == 0.001);
    CHECK(s.model.graph.heads == 4);
    CHECK(s.model.dropout == doctest::Approx(0.1));
    const auto again = config::resolve(config::to_flat(s));
    CHECK(config::to_flat(again).dump() == config::to_flat(s).dump());
    CHECK(config::to_flat(s).get("val_fraction") == std::optional<std::string>("0.2"));
}

TEST_CASE("bad settings are rejected") {
    config::FlatConfig f;
    f.set("no_such_key", "1");
    CHECK_THROWS_AS(config::resolve(f), ConfigError);
    config::FlatConfig g;
    g.set("hidden_dim", "abc");
    CHECK_THROWS_AS(config::resolve(g), ConfigError);
    config::FlatConfig h;
    CHECK_THROWS(h.apply("missing_equals"));
}

}  // TEST_SUITE
