#include "textgraph/acceptance.hpp"
#include "textgraph/batching.hpp"
#include "textgraph/config.hpp"
#include "textgraph/container.hpp"
#include "textgraph/corpus.hpp"
#include "textgraph/graphgen.hpp"
#include "textgraph/graphstats.hpp"
#include "textgraph/model.hpp"
#include "textgraph/trainer.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>
#include <malloc.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace textgraph;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

/// Raised for bad inputs; reported with exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = 0;
    int epochs = -1;
};

// Large training batches allocate and free hundreds of megabytes per step;
// keep that memory in the heap instead of returning it to the kernel.
void tune_allocator() {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 256 << 20);
}

fs::path run_root() {
    const char* env = std::getenv("TEXTGRAPH_RUN_ROOT");
    return env && *env ? fs::path(env) : fs::path("runs");
}

config::RunSettings resolve_settings(const Common& c) {
    config::FlatConfig flat;
    if (!c.config_path.empty()) flat = config::FlatConfig::load(c.config_path);
    for (const auto& o : c.overrides) flat.apply(o);
    if (c.seed_given) flat.set("seed", std::to_string(c.seed));
    if (c.threads > 0) flat.set("threads", std::to_string(c.threads));
    if (c.epochs >= 0) flat.set("epochs", std::to_string(c.epochs));
    auto settings = config::resolve(flat);
    settings.model.validate();
    Eigen::setNbThreads(std::max(1, settings.threads));
    return settings;
}

json config_json(const config::RunSettings& s) {
    const auto flat = config::to_flat(s);
    return json(flat.values());
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot write " + path.string());
    out << text;
}

std::vector<corpus::LabeledText> load_texts(const std::string& path, int synthetic_docs, std::uint64_t seed) {
    if (!path.empty()) {
        if (!fs::exists(path)) throw UsageError("corpus not found: " + path);
        return corpus::read_corpus(path);
    }
    if (synthetic_docs <= 0) throw UsageError("either --corpus or --synthetic is required");
    corpus::SyntheticCorpusOptions o;
    o.n_docs = synthetic_docs;
    o.seed = seed;
    return corpus::synthetic_keyword_corpus(o);
}

struct Inputs {
    std::string corpus;
    std::string validation;
    std::string embeddings;
    std::string lexicon;
    int synthetic = 0;
};

void add_inputs(CLI::App* cmd, Inputs& in) {
    cmd->add_option("--corpus", in.corpus, "labeled corpus (.jsonl or .csv)");
    cmd->add_option("--validation", in.validation, "separate validation corpus; otherwise val_fraction is split off");
    cmd->add_option("--embeddings", in.embeddings, "pretrained token embeddings (token, tab, space-separated values per line)");
    cmd->add_option("--lexicon", in.lexicon, "sentiment lexicon (token, polarity, subjectivity tab-separated per line)");
    cmd->add_option("--synthetic", in.synthetic, "use a generated keyword corpus with this many documents");
}

json inputs_json(const Inputs& in) {
    return {{"corpus", in.corpus}, {"validation", in.validation}, {"embeddings", in.embeddings},
            {"lexicon", in.lexicon}, {"synthetic", in.synthetic}};
}

Inputs inputs_from_json(const json& j) {
    Inputs in;
    in.corpus = j.value("corpus", "");
    in.validation = j.value("validation", "");
    in.embeddings = j.value("embeddings", "");
    in.lexicon = j.value("lexicon", "");
    in.synthetic = j.value("synthetic", 0);
    return in;
}

corpus::CorpusTables build_tables(const std::vector<corpus::LabeledText>& base, const Inputs& in,
                                  const config::RunSettings& s) {
    auto opts = s.corpus;
    opts.charset_size = s.model.char_vocab;
    opts.embedding_dim = static_cast<int>(s.model.inject_dim);
    auto tables = corpus::CorpusTables::build(base, opts);
    if (!in.embeddings.empty()) {
        if (!fs::exists(in.embeddings)) throw UsageError("embeddings not found: " + in.embeddings);
        tables.set_embeddings(corpus::load_embedding_table(in.embeddings, opts.embedding_dim));
    }
    if (!in.lexicon.empty()) {
        if (!fs::exists(in.lexicon)) throw UsageError("lexicon not found: " + in.lexicon);
        tables.set_lexicon(corpus::load_sentiment_lexicon(in.lexicon));
    }
    return tables;
}

/// Train/validation texts exactly as the trainer saw them.
trainer::Split load_split(const Inputs& in, const config::RunSettings& s) {
    auto texts = load_texts(in.corpus, in.synthetic, s.model.seed);
    if (!in.validation.empty()) {
        if (!fs::exists(in.validation)) throw UsageError("validation corpus not found: " + in.validation);
        return {std::move(texts), corpus::read_corpus(in.validation)};
    }
    return trainer::split_corpus(texts, s.val_fraction, s.model.seed);
}

// ---------------------------------------------------------------------------

int cmd_preprocess(const Common& common, const Inputs& in, std::string out_dir) {
    const auto s = resolve_settings(common);
    const auto texts = load_texts(in.corpus, in.synthetic, s.model.seed);
    if (texts.empty()) throw UsageError("corpus is empty");
    const auto tables = build_tables(texts, in, s);
    const auto docs = trainer::make_documents(texts, tables);
    const auto plans = trainer::plan_batches(docs, s.model.batch_size, 0, false, s.model.seed);
    std::vector<batching::CompactBatch> batches;
    json batch_docs = json::array(), batch_chars = json::array(), batch_tokens = json::array();
    index_t total_chars = 0, total_tokens = 0, max_chars = 0;
    for (const auto& plan : plans) {
        batches.push_back(batching::assemble_compact_batch(std::span<const corpus::Document* const>(plan), tables));
        const auto& b = batches.back();
        batch_docs.push_back(b.n_docs());
        batch_chars.push_back(b.n_chars());
        batch_tokens.push_back(b.n_tokens());
        total_chars += b.n_chars();
        total_tokens += b.n_tokens();
        max_chars = std::max(max_chars, b.n_chars());
    }
    const double mean_chars = static_cast<double>(total_chars) / static_cast<double>(batches.size());

    if (out_dir.empty()) out_dir = (run_root() / "preprocess").string();
    const fs::path out(out_dir);
    fs::create_directories(out);
    const auto cfg = config_json(s);
    io::save_batches((out / "batches.tgb").string(), batches, {{"config", cfg}, {"inputs", inputs_json(in)}});

    const auto& freq = tables.frequencies();
    const std::map<std::string, std::int64_t> sorted(freq.counts.begin(), freq.counts.end());
    write_text(out / "frequencies.json",
               json{{"base_corpus_token_count", freq.base_corpus_token_count}, {"counts", sorted}}.dump(2) + "\n");

    const json summary{{"n_docs", docs.size()},
                       {"n_tokens", total_tokens},
                       {"n_chars", total_chars},
                       {"vocab_size", tables.vocab_size()},
                       {"n_batches", batches.size()},
                       {"batch_docs", batch_docs},
                       {"batch_tokens", batch_tokens},
                       {"batch_chars", batch_chars},
                       {"max_over_mean_chars", mean_chars > 0 ? static_cast<double>(max_chars) / mean_chars : 0.0},
                       {"config", cfg}};
    write_text(out / "summary.json", summary.dump(2) + "\n");
    write_text(out / "config.txt", config::to_flat(s).dump());
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

int cmd_graph_stats(const Common& common, long long tokens, int repeats) {
    if (tokens < 2) throw UsageError("--tokens must be at least 2");
    if (repeats < 1) throw UsageError("--repeats must be positive");
    const auto s = resolve_settings(common);
    const std::vector<index_t> lengths{static_cast<index_t>(tokens)};
    const auto batch = batching::uniform_token_batch(lengths);
    json runs = json::array();
    for (int r = 0; r < repeats; ++r) {
        auto g = s.model.graph;
        g.rng_seed = s.model.graph.rng_seed + static_cast<std::uint64_t>(r);
        const auto t0 = std::chrono::steady_clock::now();
        const auto edges = graphgen::generate_graph(batch, g);
        const double gen_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const auto report = graphstats::analyze(edges, 0, static_cast<index_t>(tokens));
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        runs.push_back({{"graph_seed", g.rng_seed},
                        {"tokens", report.nodes},
                        {"edges", report.edges},
                        {"density", report.density},
                        {"diameter", report.diameter},
                        {"avg_clustering", report.avg_clustering},
                        {"avg_shortest_path", report.avg_shortest_path},
                        {"generation_seconds", gen_seconds},
                        {"seconds", seconds}});
    }
    json out = repeats == 1 ? runs[0] : json{{"runs", runs}};
    out["config"] = config_json(s);
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

int cmd_train(const Common& common, const Inputs& in, std::string run_dir) {
    const auto s = resolve_settings(common);
    if (run_dir.empty()) run_dir = (run_root() / ("train-seed" + std::to_string(s.model.seed))).string();
    const fs::path dir(run_dir);
    fs::create_directories(dir);
    write_text(dir / "config.txt", config::to_flat(s).dump());

    const auto split = load_split(in, s);
    const auto tables = build_tables(split.train, in, s);
    const auto train_docs = trainer::make_documents(split.train, tables);
    const auto val_docs = trainer::make_documents(split.validation, tables);
    std::cerr << "train " << train_docs.size() << " docs, validation " << val_docs.size() << " docs\n";

    model::Model net(s.model);
    trainer::TrainOptions opts;
    opts.checkpoint_path = (dir / "model.ckpt").string();
    opts.checkpoint_meta = {{"settings", config_json(s)}, {"inputs", inputs_json(in)}};
    opts.run_dir = dir.string();
    opts.early_stop_accuracy = s.early_stop_accuracy;
    opts.log = &std::cerr;
    auto report = trainer::train(net, train_docs, val_docs, tables, opts);
    auto j = report.to_json();
    j["settings"] = config_json(s);
    write_text(dir / "report.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

int cmd_eval(const Common& common, const std::string& checkpoint, Inputs in, bool inputs_given) {
    if (checkpoint.empty() || !fs::exists(checkpoint)) throw UsageError("checkpoint not found: " + checkpoint);
    const auto container = io::Container::load(checkpoint);
    const auto& meta = container.meta.contains("meta") ? container.meta.at("meta") : json::object();

    config::FlatConfig flat;
    if (meta.contains("settings")) {
        for (const auto& [k, v] : meta.at("settings").items()) flat.set(k, v.get<std::string>());
    }
    for (const auto& [k, v] : container.meta.at("config").items()) flat.set(k, v.get<std::string>());
    for (const auto& o : common.overrides) flat.apply(o);
    const auto s = config::resolve(flat);
    if (!inputs_given) {
        if (!meta.contains("inputs")) throw UsageError("checkpoint records no inputs; pass --corpus or --synthetic");
        in = inputs_from_json(meta.at("inputs"));
    }

    const auto net = model::Model::load(checkpoint);
    const auto split = load_split(in, s);
    const auto tables = build_tables(split.train, in, s);
    const auto docs = trainer::make_documents(split.validation.empty() ? split.train : split.validation, tables);
    const auto result = trainer::evaluate(net, docs, tables, s.model.batch_size);
    json out{{"checkpoint", checkpoint},
             {"epoch", meta.value("epoch", -1)},
             {"n_docs", docs.size()},
             {"validation", trainer::eval_json(result)},
             {"settings", config_json(s)}};
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

int cmd_gradcheck(const Common& common) {
    const auto s = resolve_settings(common);
    const auto cases = acceptance::gradient_suite(s.model.seed);
    bool all = true;
    for (const auto& c : cases) {
        all = all && c.passed;
        std::printf("%-52s max_rel_error %.3e  tol %.0e  %s\n", c.name.c_str(), c.max_rel_error, c.tolerance,
                    c.passed ? "ok" : ("FAIL at " + c.worst).c_str());
    }
    std::printf("%s: %zu gradient checks\n", all ? "PASS" : "FAIL", cases.size());
    return all ? kExitOk : kExitFailure;
}

int cmd_accept(const Common& common, const std::vector<int>& only, const std::string& json_path,
               const std::string& work_dir, bool quiet) {
    acceptance::AcceptanceOptions opts;
    opts.only = only;
    opts.seed = common.seed;
    opts.work_dir = work_dir;
    opts.log = quiet ? nullptr : &std::cerr;
    for (int id : only) {
        if (id < 1 || id > acceptance::kCriterionCount) throw UsageError("no acceptance criterion " + std::to_string(id));
    }
    const auto results = acceptance::run_acceptance(opts);
    bool all = true;
    for (const auto& r : results) {
        all = all && r.passed;
        std::cout << acceptance::format_line(r) << "\n";
    }
    std::cout << (all ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL") << "\n";
    if (!json_path.empty()) write_text(json_path, acceptance::to_json(results).dump(2) + "\n");
    return all ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"Compact-batch CNN-GNN text classifier"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--config", common.config_path, "flat key=value configuration file");
    app.add_option("--set", common.overrides, "override one configuration key (key=value)");
    auto* seed_opt = app.add_option("--seed", common.seed, "run seed");
    app.add_option("--threads", common.threads, "worker threads");
    app.fallthrough();

    Inputs pre_in, train_in, eval_in;
    std::string pre_out, train_dir, checkpoint, accept_json, accept_dir;
    long long tokens = 0;
    int repeats = 1;
    std::vector<int> only;
    bool quiet = false;

    auto* pre = app.add_subcommand("preprocess", "tokenize a corpus and write compact batches");
    add_inputs(pre, pre_in);
    pre->add_option("--out", pre_out, "output directory (default $TEXTGRAPH_RUN_ROOT/preprocess)");

    auto* gs = app.add_subcommand("graph-stats", "topology of the graph over one synthetic document");
    gs->add_option("--tokens,-n", tokens, "document length")->required();
    gs->add_option("--repeats", repeats, "graphs with consecutive graph seeds");

    auto* tr = app.add_subcommand("train", "train and write report.json and model.ckpt to a run directory");
    add_inputs(tr, train_in);
    tr->add_option("--run-dir", train_dir, "run directory (default $TEXTGRAPH_RUN_ROOT/train-seed<seed>)");
    tr->add_option("--epochs", common.epochs, "epochs (0 reports the initialization only)");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on its validation split");
    ev->add_option("--checkpoint", checkpoint, "checkpoint written by train")->required();
    add_inputs(ev, eval_in);

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every layer and the tiny model");

    auto* ac = app.add_subcommand("accept", "run the acceptance suite");
    ac->add_option("--only", only, "criterion ids")->delimiter(',');
    ac->add_option("--json", accept_json, "write the results as JSON");
    ac->add_option("--work-dir", accept_dir, "scratch directory");
    ac->add_flag("--quiet,-q", quiet, "no progress output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    common.seed_given = seed_opt->count() > 0;

    try {
        if (*pre) return cmd_preprocess(common, pre_in, pre_out);
        if (*gs) return cmd_graph_stats(common, tokens, repeats);
        if (*tr) return cmd_train(common, train_in, train_dir);
        if (*ev) {
            const bool given = !eval_in.corpus.empty() || eval_in.synthetic > 0;
            return cmd_eval(common, checkpoint, eval_in, given);
        }
        if (*gc) return cmd_gradcheck(common);
        if (*ac) return cmd_accept(common, only, accept_json, accept_dir, quiet);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FormatError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}
