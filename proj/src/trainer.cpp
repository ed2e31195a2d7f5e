#include "textgraph/trainer.hpp"
#include "textgraph/config.hpp"
#include "textgraph/optim.hpp"
#include "textgraph/rng.hpp"

#include <chrono>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace textgraph::trainer {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

index_t char_load(const corpus::Document& d) {
    index_t n = 0;
    for (const auto& t : d.tokens) n += t.char_len;
    return n;
}

int argmax_row(const Matrix& m, index_t r) {
    int best = 0;
    for (index_t c = 1; c < m.cols(); ++c) {
        if (m(r, c) > m(r, best)) best = static_cast<int>(c);
    }
    return best;
}

void check_labels(const batching::CompactBatch& b, int n_classes) {
    for (auto l : b.labels) {
        if (l < 0 || l >= n_classes) {
            throw ConfigError("label " + std::to_string(l) + " outside [0, " + std::to_string(n_classes) + ")");
        }
    }
}

}  // namespace

nlohmann::json eval_json(const EvalResult& r) {
    return {{"loss", r.loss},
            {"accuracy", r.metrics.accuracy},
            {"precision", r.metrics.precision},
            {"recall", r.metrics.recall},
            {"f1", r.metrics.f1},
            {"n", r.metrics.n},
            {"confusion", r.confusion}};
}

nlohmann::json TrainReport::to_json() const {
    nlohmann::json epochs_json = nlohmann::json::array();
    for (const auto& e : epochs) {
        epochs_json.push_back({{"epoch", e.epoch},
                               {"lr", e.lr},
                               {"train_loss", e.epoch == 0 ? nlohmann::json(nullptr) : nlohmann::json(e.train_loss)},
                               {"steps", e.steps},
                               {"validation", eval_json(e.validation)},
                               {"seconds", e.seconds}});
    }
    return {{"epochs", epochs_json},
            {"best_epoch", best_epoch},
            {"best_val_accuracy", best_val_accuracy},
            {"early_stopped", early_stopped},
            {"total_seconds", total_seconds},
            {"flops", nlohmann::json::parse(flops.to_json())},
            {"config", config},
            {"checkpoint", checkpoint}};
}

nlohmann::json TrainReport::metrics_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : epochs) {
        out.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation", eval_json(e.validation)}});
    }
    return {{"epochs", out}, {"best_epoch", best_epoch}, {"best_val_accuracy", best_val_accuracy}};
}

Split split_corpus(const std::vector<corpus::LabeledText>& texts, double val_fraction, std::uint64_t seed) {
    if (val_fraction < 0 || val_fraction >= 1) throw ConfigError("val_fraction must be in [0, 1)");
    std::vector<std::size_t> order(texts.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed, Stream::split);
    rng.shuffle(order.begin(), order.end());
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(texts.size())));
    Split s;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_val ? s.validation : s.train).push_back(texts[order[i]]);
    }
    return s;
}

std::vector<corpus::Document> make_documents(const std::vector<corpus::LabeledText>& texts,
                                             const corpus::CorpusTables& tables) {
    std::vector<corpus::Document> docs;
    docs.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        auto d = tables.make_document(static_cast<index_t>(i), texts[i]);
        if (d.tokens.empty()) {
            warn("document " + std::to_string(i) + " has no tokens and is skipped");
            continue;
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

std::vector<std::vector<const corpus::Document*>> plan_batches(const std::vector<corpus::Document>& docs,
                                                               int batch_size, int epoch, bool shuffle,
                                                               std::uint64_t seed) {
    std::vector<std::vector<const corpus::Document*>> out;
    if (docs.empty()) return out;
    std::vector<std::int64_t> lengths;
    lengths.reserve(docs.size());
    for (const auto& d : docs) lengths.push_back(char_load(d));
    const auto k = static_cast<int>((docs.size() + static_cast<std::size_t>(batch_size) - 1) /
                                    static_cast<std::size_t>(batch_size));
    auto part = batching::greedy_k_partition(lengths, k, epoch, shuffle, seed);
    for (std::size_t b = 0; b < part.batches.size(); ++b) {
        std::vector<const corpus::Document*> batch;
        for (auto id : part.real_items(b)) batch.push_back(&docs[static_cast<std::size_t>(id)]);
        if (!batch.empty()) out.push_back(std::move(batch));
    }
    return out;
}

EvalResult evaluate(const model::Model& model, const std::vector<corpus::Document>& docs,
                    const corpus::CorpusTables& tables, int batch_size) {
    const auto& cfg = model.config();
    metrics::ConfusionMatrix cm(cfg.n_classes);
    double loss_sum = 0;
    for (const auto& plan : plan_batches(docs, batch_size, 0, false, cfg.seed)) {
        auto batch = batching::assemble_compact_batch(std::span<const corpus::Document* const>(plan), tables);
        check_labels(batch, cfg.n_classes);
        auto res = model.forward(batch, false);
        loss_sum += static_cast<double>(ops::cross_entropy(res.logits, batch.labels).item()) *
                    static_cast<double>(batch.n_docs());
        auto probs = ops::softmax_rows(res.logits);
        for (index_t i = 0; i < batch.n_docs(); ++i) cm.add(batch.labels[static_cast<std::size_t>(i)], argmax_row(probs, i));
    }
    EvalResult r;
    r.metrics = cm.metrics();
    r.loss = cm.total() > 0 ? loss_sum / static_cast<double>(cm.total()) : 0.0;
    r.confusion = cm.counts();
    return r;
}

TrainReport train(model::Model& model, const std::vector<corpus::Document>& train_docs,
                  const std::vector<corpus::Document>& val_docs, const corpus::CorpusTables& tables,
                  const TrainOptions& options) {
    const auto t_start = std::chrono::steady_clock::now();
    const auto& cfg = model.config();
    if (train_docs.empty()) throw ArgumentError("train: no training documents");
    const auto& eval_docs = val_docs.empty() ? train_docs : val_docs;
    TrainReport report;
    report.config = config::to_flat(cfg).values();
    report.checkpoint = options.checkpoint_path;

    optim::AdamW opt(model.parameters().params(), cfg.lr, cfg.weight_decay);
    optim::MultiStepLR sched(cfg.lr, cfg.milestones, cfg.lr_gamma);

    const auto save_checkpoint = [&](int epoch) {
        if (options.checkpoint_path.empty()) return;
        auto meta = options.checkpoint_meta.is_object() ? options.checkpoint_meta : nlohmann::json::object();
        meta["epoch"] = epoch;
        model.save(options.checkpoint_path, meta.dump());
    };

    auto log = [&](const EpochRecord& e) {
        if (!options.log) return;
        *options.log << "epoch " << e.epoch << " lr " << e.lr << " train_loss " << e.train_loss << " val_loss "
                     << e.validation.loss << " val_acc " << e.validation.metrics.accuracy << " (" << e.seconds
                     << " s)\n";
        options.log->flush();
    };

    {
        const auto t0 = std::chrono::steady_clock::now();
        EpochRecord init;
        init.lr = sched.lr_at(0);
        init.validation = evaluate(model, eval_docs, tables, cfg.batch_size);
        init.seconds = seconds_since(t0);
        report.best_val_accuracy = init.validation.metrics.accuracy;
        report.epochs.push_back(init);
        save_checkpoint(0);
        log(init);
    }

    index_t load_chars = 0, load_tokens = 0, load_docs = 0, load_batches = 0;
    std::uint64_t step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = sched.lr_at(epoch - 1);
        opt.set_lr(rec.lr);
        double loss_sum = 0;
        index_t docs_seen = 0;
        const auto plans = plan_batches(train_docs, cfg.batch_size, epoch, true, cfg.seed);
        for (std::size_t b = 0; b < plans.size(); ++b) {
            auto batch = batching::assemble_compact_batch(std::span<const corpus::Document* const>(plans[b]), tables);
            check_labels(batch, cfg.n_classes);
            if (epoch == 1) {
                load_chars += batch.n_chars();
                load_tokens += batch.n_tokens();
                load_docs += batch.n_docs();
                ++load_batches;
            }
            double loss_value = 0;
            {
                Tape tape;
                TapeScope scope(tape);
                auto res = model.forward(batch, true, step);
                auto loss = ops::cross_entropy(res.logits, batch.labels);
                loss_value = static_cast<double>(loss.item());
                if (!std::isfinite(loss_value)) {
                    if (!options.run_dir.empty()) {
                        std::filesystem::create_directories(options.run_dir);
                        std::ofstream(std::filesystem::path(options.run_dir) / "failure.json")
                            << nlohmann::json{{"epoch", epoch}, {"batch", b}, {"step", step},
                                              {"doc_ids", batch.doc_ids}, {"loss", std::to_string(loss_value)}}
                                   .dump(2);
                    }
                    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                        std::to_string(b) + ", step " + std::to_string(step));
                }
                tape.backward(loss);
            }
            opt.step();
            opt.zero_grad();
            ++step;
            ++rec.steps;
            loss_sum += loss_value * static_cast<double>(batch.n_docs());
            docs_seen += batch.n_docs();
        }
        rec.train_loss = docs_seen > 0 ? loss_sum / static_cast<double>(docs_seen) : 0.0;
        rec.validation = evaluate(model, eval_docs, tables, cfg.batch_size);
        rec.seconds = seconds_since(t0);
        report.epochs.push_back(rec);
        log(rec);
        if (rec.validation.metrics.accuracy > report.best_val_accuracy) {
            report.best_val_accuracy = rec.validation.metrics.accuracy;
            report.best_epoch = epoch;
            save_checkpoint(epoch);
        }
        if (options.early_stop_accuracy > 0 && rec.validation.metrics.accuracy >= options.early_stop_accuracy) {
            report.early_stopped = true;
            break;
        }
    }
    if (load_batches > 0) {
        report.flops = model::flop_estimate(cfg, load_chars / load_batches, load_tokens / load_batches,
                                            std::max<index_t>(1, load_docs / load_batches));
    }
    report.total_seconds = seconds_since(t_start);
    return report;
}

}  // namespace textgraph::trainer
