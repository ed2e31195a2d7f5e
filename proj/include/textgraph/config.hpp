#pragma once

#include "textgraph/corpus.hpp"
#include "textgraph/model.hpp"

#include <istream>
#include <map>
#include <optional>
#include <string>

namespace textgraph::config {

/// Flat key=value settings. Blank lines and lines starting with '#' are
/// ignored; later assignments win.
class FlatConfig {
public:
    static FlatConfig parse(std::istream& in);
    static FlatConfig load(const std::string& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    /// Applies one "key=value" override.
    void apply(const std::string& assignment);
    std::optional<std::string> get(const std::string& key) const;
    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const { return values_; }
    /// One "key=value" line per entry in key order.
    std::string dump() const;

private:
    std::map<std::string, std::string> values_;
};

/// Everything a run needs besides its inputs.
struct RunSettings {
    model::ModelConfig model;
    corpus::CorpusOptions corpus;
    double val_fraction = 0.2;
    double early_stop_accuracy = 0.0;  ///< 0 disables early stopping
    int threads = 1;
};

/// Defaults overridden by `flat`. Unknown keys or malformed values raise ConfigError.
RunSettings resolve(const FlatConfig& flat, RunSettings base = {});
/// Every key with its resolved value.
FlatConfig to_flat(const RunSettings& settings);
FlatConfig to_flat(const model::ModelConfig& cfg);
model::ModelConfig model_config_from(const FlatConfig& flat);

}  // namespace textgraph::config
