#include "textgraph/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace textgraph::config {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
    }
}

long long parse_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not an unsigned integer");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

const char* variant_name(layers::GnnVariant v) {
    return v == layers::GnnVariant::gatv2 ? "gatv2" : "sparse_attention";
}

std::string positions_str(const std::vector<model::SentimentPosition>& ps) {
    if (ps.empty()) return "none";
    std::string out;
    for (auto p : ps) {
        if (!out.empty()) out += ",";
        out += p == model::SentimentPosition::P1 ? "P1" : p == model::SentimentPosition::P2 ? "P2" : "P3";
    }
    return out;
}

std::string milestones_str(const std::vector<int>& ms) {
    std::string out;
    for (auto m : ms) {
        if (!out.empty()) out += ",";
        out += std::to_string(m);
    }
    return out.empty() ? "none" : out;
}

}  // namespace

FlatConfig FlatConfig::parse(std::istream& in) {
    FlatConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
        }
        c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return c;
}

FlatConfig FlatConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    return parse(in);
}

void FlatConfig::apply(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::optional<std::string> FlatConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string FlatConfig::dump() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

FlatConfig to_flat(const model::ModelConfig& m) {
    FlatConfig f;
    f.set("hidden_dim", std::to_string(m.hidden_dim));
    f.set("inject_dim", std::to_string(m.inject_dim));
    f.set("char_vocab", std::to_string(m.char_vocab));
    f.set("n_layers", std::to_string(m.n_layers));
    f.set("gnn_variant", variant_name(m.gnn_variant));
    f.set("sentiment_positions", positions_str(m.sentiment_positions));
    f.set("sentiment_type", std::to_string(m.sentiment_type));
    f.set("sentiment_expand", std::to_string(m.sentiment_expand));
    f.set("embedding_inject", m.embedding_inject ? "true" : "false");
    f.set("mlp_hidden", std::to_string(m.mlp_hidden));
    f.set("lattice_begin", std::to_string(m.graph.lattice_begin));
    f.set("lattice_step", std::to_string(m.graph.lattice_step));
    f.set("n_lattice", std::to_string(m.graph.n_lattice));
    f.set("n_random", std::to_string(m.graph.n_random));
    f.set("heads", std::to_string(m.graph.heads));
    f.set("p_keep", fmt_double(m.graph.p_keep));
    f.set("subsample", m.graph.subsample ? "true" : "false");
    f.set("keep_per_node", std::to_string(m.graph.keep_per_node));
    f.set("graph_seed", std::to_string(m.graph.rng_seed));
    f.set("dropout", fmt_double(m.dropout));
    f.set("gat_slope", fmt_double(m.gat_slope));
    f.set("boundary_mask", m.boundary_mask ? "true" : "false");
    f.set("per_node_softmax", m.per_node_softmax ? "true" : "false");
    f.set("pre_softmax_scaling", m.pre_softmax_scaling ? "true" : "false");
    f.set("update_every_layer", m.update_every_layer ? "true" : "false");
    f.set("lr", fmt_double(m.lr));
    f.set("weight_decay", fmt_double(m.weight_decay));
    f.set("milestones", milestones_str(m.milestones));
    f.set("lr_gamma", fmt_double(m.lr_gamma));
    f.set("epochs", std::to_string(m.epochs));
    f.set("batch_size", std::to_string(m.batch_size));
    f.set("n_classes", std::to_string(m.n_classes));
    f.set("seed", std::to_string(m.seed));
    return f;
}

FlatConfig to_flat(const RunSettings& s) {
    auto f = to_flat(s.model);
    f.set("subsample_threshold", fmt_double(s.corpus.subsample_threshold));
    f.set("subsample_mode", s.corpus.subsample_mode == corpus::SubsampleMode::linear ? "linear" : "sigmoid");
    f.set("sigmoid_threshold", fmt_double(s.corpus.sigmoid_threshold));
    f.set("embedding_seed", std::to_string(s.corpus.embedding_seed));
    f.set("val_fraction", fmt_double(s.val_fraction));
    f.set("early_stop_accuracy", fmt_double(s.early_stop_accuracy));
    f.set("threads", std::to_string(s.threads));
    return f;
}

RunSettings resolve(const FlatConfig& flat, RunSettings s) {
    auto& m = s.model;
    for (const auto& [key, v] : flat.values()) {
        if (key == "hidden_dim") m.hidden_dim = parse_int(key, v);
        else if (key == "inject_dim") m.inject_dim = parse_int(key, v);
        else if (key == "char_vocab") m.char_vocab = parse_int(key, v);
        else if (key == "n_layers") m.n_layers = static_cast<int>(parse_int(key, v));
        else if (key == "gnn_variant") {
            if (v == "gatv2") m.gnn_variant = layers::GnnVariant::gatv2;
            else if (v == "sparse_attention") m.gnn_variant = layers::GnnVariant::sparse_attention;
            else throw ConfigError("gnn_variant must be gatv2 or sparse_attention, got '" + v + "'");
        } else if (key == "sentiment_positions") {
            m.sentiment_positions.clear();
            if (v != "none") {
                for (const auto& p : split_list(v)) {
                    if (p == "P1") m.sentiment_positions.push_back(model::SentimentPosition::P1);
                    else if (p == "P2") m.sentiment_positions.push_back(model::SentimentPosition::P2);
                    else if (p == "P3") m.sentiment_positions.push_back(model::SentimentPosition::P3);
                    else throw ConfigError("unknown sentiment position '" + p + "'");
                }
            }
        } else if (key == "sentiment_type") m.sentiment_type = static_cast<int>(parse_int(key, v));
        else if (key == "sentiment_expand") m.sentiment_expand = parse_int(key, v);
        else if (key == "embedding_inject") m.embedding_inject = parse_bool(key, v);
        else if (key == "mlp_hidden") m.mlp_hidden = parse_int(key, v);
        else if (key == "lattice_begin") m.graph.lattice_begin = static_cast<int>(parse_int(key, v));
        else if (key == "lattice_step") m.graph.lattice_step = static_cast<int>(parse_int(key, v));
        else if (key == "n_lattice") m.graph.n_lattice = static_cast<int>(parse_int(key, v));
        else if (key == "n_random") m.graph.n_random = static_cast<int>(parse_int(key, v));
        else if (key == "heads") m.graph.heads = static_cast<int>(parse_int(key, v));
        else if (key == "p_keep") m.graph.p_keep = parse_double(key, v);
        else if (key == "subsample") m.graph.subsample = parse_bool(key, v);
        else if (key == "keep_per_node") m.graph.keep_per_node = static_cast<int>(parse_int(key, v));
        else if (key == "graph_seed") m.graph.rng_seed = parse_u64(key, v);
        else if (key == "dropout") m.dropout = static_cast<real>(parse_double(key, v));
        else if (key == "gat_slope") m.gat_slope = static_cast<real>(parse_double(key, v));
        else if (key == "boundary_mask") m.boundary_mask = parse_bool(key, v);
        else if (key == "per_node_softmax") m.per_node_softmax = parse_bool(key, v);
        else if (key == "pre_softmax_scaling") m.pre_softmax_scaling = parse_bool(key, v);
        else if (key == "update_every_layer") m.update_every_layer = parse_bool(key, v);
        else if (key == "lr") m.lr = parse_double(key, v);
        else if (key == "weight_decay") m.weight_decay = parse_double(key, v);
        else if (key == "milestones") {
            m.milestones.clear();
            if (v != "none") {
                for (const auto& p : split_list(v)) m.milestones.push_back(static_cast<int>(parse_int(key, p)));
            }
        } else if (key == "lr_gamma") m.lr_gamma = parse_double(key, v);
        else if (key == "epochs") m.epochs = static_cast<int>(parse_int(key, v));
        else if (key == "batch_size") m.batch_size = static_cast<int>(parse_int(key, v));
        else if (key == "n_classes") m.n_classes = static_cast<int>(parse_int(key, v));
        else if (key == "seed") m.seed = parse_u64(key, v);
        else if (key == "subsample_threshold") s.corpus.subsample_threshold = parse_double(key, v);
        else if (key == "subsample_mode") {
            if (v == "linear") s.corpus.subsample_mode = corpus::SubsampleMode::linear;
            else if (v == "sigmoid") s.corpus.subsample_mode = corpus::SubsampleMode::sigmoid;
            else throw ConfigError("subsample_mode must be linear or sigmoid, got '" + v + "'");
        } else if (key == "sigmoid_threshold") s.corpus.sigmoid_threshold = parse_double(key, v);
        else if (key == "embedding_seed") s.corpus.embedding_seed = parse_u64(key, v);
        else if (key == "val_fraction") s.val_fraction = parse_double(key, v);
        else if (key == "early_stop_accuracy") s.early_stop_accuracy = parse_double(key, v);
        else if (key == "threads") s.threads = static_cast<int>(parse_int(key, v));
        else throw ConfigError("unknown config key '" + key + "'");
    }
    s.corpus.charset_size = m.char_vocab;
    s.corpus.embedding_dim = static_cast<int>(m.inject_dim);
    m.validate();
    if (s.threads < 1) throw ConfigError("threads must be >= 1");
    return s;
}

model::ModelConfig model_config_from(const FlatConfig& flat) { return resolve(flat).model; }

}  // namespace textgraph::config
