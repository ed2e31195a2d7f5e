#include "textgraph/corpus.hpp"
#include "textgraph/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <iterator>
#include <limits>
#include <sstream>

namespace textgraph::corpus {

// ---------------------------------------------------------------------------
// Frequencies and sub-sampling
// ---------------------------------------------------------------------------

std::int64_t FrequencyTable::count(std::string_view token) const {
    auto it = counts.find(lower(token));
    return it == counts.end() ? 1 : it->second;
}

FrequencyTable build_frequency_table(std::span<const std::string> texts,
                                     std::span<const std::string> vocabulary) {
    FrequencyTable table;
    for (const auto& t : vocabulary) table.counts[t] = 1;

    std::unordered_map<std::string, std::int64_t> temp;
    for (const auto& text : texts) {
        for (const auto& tok : tokenize(text)) {
            ++temp[lower(tok.text)];
            ++table.base_corpus_token_count;
        }
    }
    for (auto& [key, value] : table.counts) {
        auto it = temp.find(lower(key));
        value = it != temp.end() ? it->second : 1;
    }
    return table;
}

double linear_subsample_prob(std::int64_t freq, std::int64_t base_total, double threshold) {
    if (freq < 1 || base_total < 1 || !(threshold > 0.0)) {
        throw ArgumentError("linear_subsample_prob needs freq >= 1, base_total >= 1, threshold > 0");
    }
    const double f_norm = static_cast<double>(freq) / static_cast<double>(base_total);
    return std::min(1.0, threshold / f_norm);
}

double sigmoid_subsample_prob(double freq, double threshold) {
    if (!(threshold > 0.0)) throw ArgumentError("sigmoid_subsample_prob needs threshold > 0");
    const double z = 0.05 * (freq / threshold - 90.0);
    const double sig = 1.0 / (1.0 + std::exp(-z));
    return 1.0 - 0.95 * sig;
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

void EmbeddingTable::put(const std::string& token, std::span<const real> values) {
    if (static_cast<int>(values.size()) != dim_) {
        throw FormatError("embedding for '" + token + "' has " + std::to_string(values.size()) +
                          " values, expected " + std::to_string(dim_));
    }
    auto it = index_.find(token);
    if (it != index_.end()) {
        std::copy(values.begin(), values.end(),
                  values_.begin() + it->second * static_cast<index_t>(dim_));
        return;
    }
    index_.emplace(token, static_cast<index_t>(keys_.size()));
    keys_.push_back(token);
    values_.insert(values_.end(), values.begin(), values.end());
}

void EmbeddingTable::normalize() {
    const auto rows = keys_.size();
    if (rows == 0) return;
    const auto d = static_cast<std::size_t>(dim_);
    for (std::size_t j = 0; j < d; ++j) {
        real lo = values_[j];
        real hi = values_[j];
        for (std::size_t r = 1; r < rows; ++r) {
            lo = std::min(lo, values_[r * d + j]);
            hi = std::max(hi, values_[r * d + j]);
        }
        const real range = hi - lo;
        for (std::size_t r = 0; r < rows; ++r) {
            auto& v = values_[r * d + j];
            v = range > 0 ? (v - lo) / range : real(0);
        }
    }
}

std::optional<index_t> EmbeddingTable::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::span<const real> EmbeddingTable::row(index_t r) const {
    return {values_.data() + r * dim_, static_cast<std::size_t>(dim_)};
}

EmbeddingTable parse_embedding_table(std::istream& in, int dim) {
    if (dim < 1) throw ArgumentError("embedding dimension must be >= 1");
    EmbeddingTable table(dim);
    std::string line;
    std::vector<real> values;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw FormatError("embedding line " + std::to_string(line_no) + ": missing tab");
        }
        std::string token = line.substr(0, tab);
        std::istringstream fields(line.substr(tab + 1));
        values.clear();
        double v;
        while (fields >> v) values.push_back(static_cast<real>(v));
        if (!fields.eof()) {
            throw FormatError("embedding line " + std::to_string(line_no) + ": non-numeric value");
        }
        if (static_cast<int>(values.size()) != dim) {
            throw FormatError("embedding line " + std::to_string(line_no) + ": " +
                              std::to_string(values.size()) + " values, expected " + std::to_string(dim));
        }
        if (table.find(token)) warn("duplicate embedding for '" + token + "', keeping the last row");
        table.put(token, values);
    }
    table.normalize();
    return table;
}

EmbeddingTable load_embedding_table(const std::string& path, int dim) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open embedding file " + path);
    return parse_embedding_table(in, dim);
}

std::vector<real> hashed_fallback_embedding(std::string_view token, int dim, std::uint64_t seed) {
    std::uint64_t state = mix_seed({fnv1a(token), seed, static_cast<std::uint64_t>(Stream::embedding)});
    std::vector<real> out(static_cast<std::size_t>(dim));
    for (auto& v : out) v = static_cast<real>(static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53);
    return out;
}

// ---------------------------------------------------------------------------
// Sentiment lexicon
// ---------------------------------------------------------------------------

void SentimentLexicon::put(std::string_view token, Sentiment s) {
    entries_[lower(token)] = s;
}

Sentiment SentimentLexicon::lookup(std::string_view token) const {
    auto it = entries_.find(lower(token));
    return it == entries_.end() ? Sentiment{} : it->second;
}

namespace {

double parse_double(const std::string& field, int line_no, const char* what) {
    try {
        std::size_t used = 0;
        double v = std::stod(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
        return v;
    } catch (const std::exception&) {
        throw FormatError("lexicon line " + std::to_string(line_no) + ": bad " + what + " '" + field + "'");
    }
}

}  // namespace

SentimentLexicon parse_sentiment_lexicon(std::istream& in) {
    SentimentLexicon lex;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> parts;
        std::size_t start = 0;
        while (true) {
            auto tab = line.find('\t', start);
            parts.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (parts.size() != 3) {
            throw FormatError("lexicon line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
        }
        Sentiment s{parse_double(parts[1], line_no, "polarity"), parse_double(parts[2], line_no, "subjectivity")};
        if (s.polarity < -1.0 || s.polarity > 1.0) {
            throw FormatError("lexicon line " + std::to_string(line_no) + ": polarity outside [-1, 1]");
        }
        if (s.subjectivity < 0.0 || s.subjectivity > 1.0) {
            throw FormatError("lexicon line " + std::to_string(line_no) + ": subjectivity outside [0, 1]");
        }
        lex.put(parts[0], s);
    }
    return lex;
}

SentimentLexicon load_sentiment_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open lexicon file " + path);
    return parse_sentiment_lexicon(in);
}

// ---------------------------------------------------------------------------
// Corpus readers
// ---------------------------------------------------------------------------

std::vector<LabeledText> read_jsonl(std::istream& in) {
    std::vector<LabeledText> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = nlohmann::json::parse(line);
            out.push_back({j.at("label").get<int>(), j.at("text").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("jsonl line " + std::to_string(line_no) + ": " + e.what());
        }
        if (out.back().label < 0) throw FormatError("jsonl line " + std::to_string(line_no) + ": negative label");
    }
    return out;
}

std::vector<LabeledText> read_csv(std::istream& in) {
    const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const char c = data[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < data.size() && data[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            record.push_back(std::move(field));
            field.clear();
            field_started = false;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < data.size() && data[i + 1] == '\n') ++i;
            record.push_back(std::move(field));
            field.clear();
            field_started = false;
            if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
            record.clear();
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (quoted) throw FormatError("csv: unterminated quoted field");
    if (field_started || !record.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }

    std::vector<LabeledText> out;
    for (std::size_t r = 0; r < records.size(); ++r) {
        auto& rec = records[r];
        if (rec.size() != 2) {
            throw FormatError("csv record " + std::to_string(r + 1) + ": expected 2 fields, got " +
                              std::to_string(rec.size()));
        }
        int label = 0;
        auto [ptr, ec] = std::from_chars(rec[0].data(), rec[0].data() + rec[0].size(), label);
        if (ec != std::errc() || ptr != rec[0].data() + rec[0].size() || label < 0) {
            if (r == 0) continue;  // header
            throw FormatError("csv record " + std::to_string(r + 1) + ": bad label '" + rec[0] + "'");
        }
        out.push_back({label, std::move(rec[1])});
    }
    return out;
}

std::vector<LabeledText> read_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open corpus " + path);
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return read_csv(in);
    return read_jsonl(in);
}

// ---------------------------------------------------------------------------
// CorpusTables
// ---------------------------------------------------------------------------

index_t char_id(char32_t cp, index_t charset_size) {
    return static_cast<index_t>(cp) < charset_size ? static_cast<index_t>(cp) : 0;
}

CorpusTables CorpusTables::build(std::span<const LabeledText> base_corpus, CorpusOptions options) {
    CorpusTables t;
    t.options_ = options;
    t.vocab_.push_back("<unk>");
    std::vector<std::string> texts;
    texts.reserve(base_corpus.size());
    for (const auto& doc : base_corpus) {
        texts.push_back(doc.text);
        for (const auto& tok : tokenize(doc.text)) {
            auto key = lower(tok.text);
            if (t.vocab_index_.emplace(key, static_cast<index_t>(t.vocab_.size())).second) {
                t.vocab_.push_back(std::move(key));
            }
        }
    }
    t.freq_ = build_frequency_table(texts, std::span(t.vocab_).subspan(1));
    return t;
}

void CorpusTables::set_embeddings(EmbeddingTable table) {
    options_.embedding_dim = table.dim();
    embeddings_ = std::move(table);
}

index_t CorpusTables::vocab_id(std::string_view token) const {
    auto it = vocab_index_.find(lower(token));
    return it == vocab_index_.end() ? 0 : it->second;
}

double CorpusTables::subsample_prob(std::string_view token) const {
    const auto f = freq_.count(token);
    if (options_.subsample_mode == SubsampleMode::sigmoid) {
        return sigmoid_subsample_prob(static_cast<double>(f), options_.sigmoid_threshold);
    }
    return linear_subsample_prob(f, std::max<std::int64_t>(1, freq_.base_corpus_token_count),
                                 options_.subsample_threshold);
}

Document CorpusTables::make_document(index_t id, const LabeledText& text) const {
    auto cps = decode_utf8(text.text);
    return assemble(id, text, tokenize(text.text), cps);
}

Document CorpusTables::make_document(index_t id, const LabeledText& text, std::span<const CharSpan> spans) const {
    auto cps = decode_utf8(text.text);
    return assemble(id, text, tokenize_precomputed(text.text, spans), cps);
}

Document CorpusTables::assemble(index_t id, const LabeledText& text, std::vector<TokenSpan> spans,
                                const std::vector<char32_t>& cps) const {
    Document doc;
    doc.id = id;
    doc.text = text.text;
    doc.label = text.label;
    doc.chars.reserve(cps.size());
    for (auto cp : cps) doc.chars.push_back(char_id(cp, options_.charset_size));
    doc.tokens.reserve(spans.size());
    for (std::size_t k = 0; k < spans.size(); ++k) {
        auto& sp = spans[k];
        TokenMeta m;
        m.vocab_id = vocab_id(sp.text);
        m.char_start = sp.char_start;
        m.char_len = sp.char_len;
        m.pos_in_doc = static_cast<index_t>(k);
        m.subsample_p = subsample_prob(sp.text);
        if (lexicon_) {
            auto s = lexicon_->lookup(sp.text);
            m.polarity = s.polarity;
            m.subjectivity = s.subjectivity;
        }
        if (embeddings_) {
            m.embedding_row = embeddings_->find(sp.text);
            if (!m.embedding_row) m.embedding_row = embeddings_->find(lower(sp.text));
        }
        m.text = std::move(sp.text);
        doc.tokens.push_back(std::move(m));
    }
    return doc;
}

std::vector<real> CorpusTables::embedding_for(const TokenMeta& token) const {
    if (embeddings_ && token.embedding_row) {
        auto row = embeddings_->row(*token.embedding_row);
        return {row.begin(), row.end()};
    }
    return hashed_fallback_embedding(lower(token.text), options_.embedding_dim, options_.embedding_seed);
}

}  // namespace textgraph::corpus
