#pragma once

#include "textgraph/batching.hpp"
#include "textgraph/corpus.hpp"
#include "textgraph/metrics.hpp"
#include "textgraph/model.hpp"

#include <json.hpp>

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace textgraph::trainer {

struct EvalResult {
    double loss = 0;
    metrics::ClassMetrics metrics;
    std::vector<index_t> confusion;  ///< row-major n_classes x n_classes
};

struct EpochRecord {
    int epoch = 0;  ///< 0 is the untrained initialization
    double lr = 0;
    double train_loss = 0;
    index_t steps = 0;
    EvalResult validation;
    double seconds = 0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_val_accuracy = 0;
    bool early_stopped = false;
    double total_seconds = 0;
    model::FlopReport flops;  ///< for the mean training batch
    std::map<std::string, std::string> config;
    std::string checkpoint;

    nlohmann::json to_json() const;
    /// Evaluation metrics only (no timings), for run-to-run comparison.
    nlohmann::json metrics_json() const;
};

struct TrainOptions {
    std::string checkpoint_path;  ///< empty: no checkpoint
    nlohmann::json checkpoint_meta = nlohmann::json::object();  ///< stored with every checkpoint
    std::string run_dir;          ///< receives failure.json on a non-finite loss
    double early_stop_accuracy = 0.0;
    std::ostream* log = nullptr;
};

struct Split {
    std::vector<corpus::LabeledText> train;
    std::vector<corpus::LabeledText> validation;
};

/// Deterministic shuffled split; the validation part holds round(fraction * n) items.
Split split_corpus(const std::vector<corpus::LabeledText>& texts, double val_fraction, std::uint64_t seed);

std::vector<corpus::Document> make_documents(const std::vector<corpus::LabeledText>& texts,
                                             const corpus::CorpusTables& tables);

/// ceil(n / batch_size) balanced batches by character load.
std::vector<std::vector<const corpus::Document*>> plan_batches(const std::vector<corpus::Document>& docs,
                                                               int batch_size, int epoch, bool shuffle,
                                                               std::uint64_t seed);

EvalResult evaluate(const model::Model& model, const std::vector<corpus::Document>& docs,
                    const corpus::CorpusTables& tables, int batch_size);

/// Trains for cfg.epochs with AdamW and the multi-step schedule, keeping the
/// parameters of the best validation epoch in the checkpoint. Throws
/// TrainingError on a non-finite loss.
TrainReport train(model::Model& model, const std::vector<corpus::Document>& train_docs,
                  const std::vector<corpus::Document>& val_docs, const corpus::CorpusTables& tables,
                  const TrainOptions& options);

nlohmann::json eval_json(const EvalResult& r);

}  // namespace textgraph::trainer
