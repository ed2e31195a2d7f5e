#pragma once

#include "textgraph/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace textgraph::corpus {

/// Character set size; code points at or above it map to the OOV id 0.
inline constexpr index_t kCharsetSize = 12288;

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

struct TokenSpan {
    std::string text;
    index_t char_start = 0;  ///< offset in code points
    index_t char_len = 0;    ///< length in code points, >= 1

    bool operator==(const TokenSpan&) const = default;
};

/// A caller-supplied span in code points, e.g. from an external tokenizer.
struct CharSpan {
    index_t start = 0;
    index_t len = 0;
};

enum class TokenizeMode { whitespace_punct, precomputed_spans };

/// Decodes UTF-8 into code points. Throws FormatError on malformed input.
std::vector<char32_t> decode_utf8(std::string_view text);

bool is_separator(char32_t cp);
bool is_punctuation(char32_t cp);

/// ASCII lowercasing; used for frequency, lexicon and vocabulary keys only.
std::string lower(std::string_view s);

/// Splits on whitespace; each punctuation character becomes its own token.
std::vector<TokenSpan> tokenize(std::string_view text);

/// Validates externally produced spans (ordered, non-overlapping, in range,
/// non-empty) and materializes their text. Throws SpanError.
std::vector<TokenSpan> tokenize_precomputed(std::string_view text, std::span<const CharSpan> spans);

std::vector<TokenSpan> tokenize(std::string_view text, TokenizeMode mode,
                                std::span<const CharSpan> spans = {});

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

struct FrequencyTable {
    std::unordered_map<std::string, std::int64_t> counts;
    std::int64_t base_corpus_token_count = 0;

    /// Count for a token (lowercased lookup); tokens outside the table count 1.
    std::int64_t count(std::string_view token) const;
};

/// Token frequencies: every vocabulary entry starts at 1 and is overwritten by
/// its lowercased occurrence count across `texts` when it occurs.
FrequencyTable build_frequency_table(std::span<const std::string> texts,
                                     std::span<const std::string> vocabulary);

/// min(1, threshold / (freq / base_total)).
double linear_subsample_prob(std::int64_t freq, std::int64_t base_total, double threshold);

/// 1 - 0.95 * sigmoid(0.05 * (freq / threshold - 90)).
double sigmoid_subsample_prob(double freq, double threshold);

/// Token embeddings, min-max normalized per dimension into [0, 1].
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(int dim) : dim_(dim) {}

    int dim() const { return dim_; }
    std::size_t size() const { return keys_.size(); }

    /// Inserts or replaces (last wins) a raw row. Call normalize() afterwards.
    void put(const std::string& token, std::span<const real> values);
    void normalize();

    std::optional<index_t> find(std::string_view token) const;
    std::span<const real> row(index_t r) const;
    const std::string& key(index_t r) const { return keys_[static_cast<std::size_t>(r)]; }

private:
    int dim_ = 0;
    std::vector<std::string> keys_;
    std::vector<real> values_;
    std::unordered_map<std::string, index_t> index_;
};

/// Rows are `token<TAB>v1 v2 ... v_dim`. Throws FormatError on a dimension
/// mismatch; duplicate tokens keep the last row and emit a warning.
EmbeddingTable parse_embedding_table(std::istream& in, int dim);
EmbeddingTable load_embedding_table(const std::string& path, int dim);

/// Deterministic pseudo-random vector in [0, 1]^dim keyed by (token, seed).
std::vector<real> hashed_fallback_embedding(std::string_view token, int dim, std::uint64_t seed);

struct Sentiment {
    double polarity = 0.0;
    double subjectivity = 0.0;
};

class SentimentLexicon {
public:
    void put(std::string_view token, Sentiment s);
    /// Absent tokens are neutral (0, 0). Lookup is case-insensitive.
    Sentiment lookup(std::string_view token) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::unordered_map<std::string, Sentiment> entries_;
};

/// Rows are `token<TAB>polarity<TAB>subjectivity`.
SentimentLexicon parse_sentiment_lexicon(std::istream& in);
SentimentLexicon load_sentiment_lexicon(const std::string& path);

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

struct TokenMeta {
    std::string text;
    index_t vocab_id = 0;
    index_t char_start = 0;
    index_t char_len = 1;
    index_t pos_in_doc = 0;
    double subsample_p = 1.0;
    double polarity = 0.0;
    double subjectivity = 0.0;
    std::optional<index_t> embedding_row;
};

struct Document {
    index_t id = 0;
    std::string text;
    int label = 0;
    std::vector<index_t> chars;  ///< character ids of every code point of text
    std::vector<TokenMeta> tokens;
};

struct LabeledText {
    int label = 0;
    std::string text;
};

/// JSON lines with {"label": int, "text": str}.
std::vector<LabeledText> read_jsonl(std::istream& in);
/// Two-column CSV `label,text`; RFC 4180 quoting. A header row whose first
/// field is not an integer is skipped.
std::vector<LabeledText> read_csv(std::istream& in);
/// Dispatches on extension: `.csv` reads CSV, anything else JSON lines.
std::vector<LabeledText> read_corpus(const std::string& path);

enum class SubsampleMode { linear, sigmoid };

struct CorpusOptions {
    double subsample_threshold = 1e-4;
    SubsampleMode subsample_mode = SubsampleMode::linear;
    double sigmoid_threshold = 1.0;
    index_t charset_size = kCharsetSize;
    int embedding_dim = 64;
    std::uint64_t embedding_seed = 0;
};

index_t char_id(char32_t cp, index_t charset_size = kCharsetSize);

/// Vocabulary, frequencies and optional embedding/sentiment tables shared by
/// every document of a run. Read-only after construction.
class CorpusTables {
public:
    CorpusTables() = default;

    /// Builds vocabulary and frequencies from a base corpus.
    static CorpusTables build(std::span<const LabeledText> base_corpus, CorpusOptions options = {});

    Document make_document(index_t id, const LabeledText& text) const;
    Document make_document(index_t id, const LabeledText& text, std::span<const CharSpan> spans) const;

    /// Table row for the token when present (exact, then lowercased), else
    /// the hashed fallback vector.
    std::vector<real> embedding_for(const TokenMeta& token) const;

    index_t vocab_id(std::string_view token) const;
    std::size_t vocab_size() const { return vocab_.size(); }
    const std::vector<std::string>& vocabulary() const { return vocab_; }

    const FrequencyTable& frequencies() const { return freq_; }
    const CorpusOptions& options() const { return options_; }

    void set_embeddings(EmbeddingTable table);
    void set_lexicon(SentimentLexicon lexicon) { lexicon_ = std::move(lexicon); }
    const std::optional<EmbeddingTable>& embeddings() const { return embeddings_; }
    const std::optional<SentimentLexicon>& lexicon() const { return lexicon_; }

    double subsample_prob(std::string_view token) const;

private:
    Document assemble(index_t id, const LabeledText& text, std::vector<TokenSpan> spans,
                      const std::vector<char32_t>& cps) const;

    CorpusOptions options_;
    std::vector<std::string> vocab_;  ///< id 0 is reserved for unknown tokens
    std::unordered_map<std::string, index_t> vocab_index_;
    FrequencyTable freq_;
    std::optional<EmbeddingTable> embeddings_;
    std::optional<SentimentLexicon> lexicon_;
};

/// Synthetic two-class corpus: filler words with class-indicative keywords
/// planted at random positions.
struct SyntheticCorpusOptions {
    int n_docs = 2000;
    int min_tokens = 20;
    int max_tokens = 400;
    int n_classes = 2;
    int keywords_per_class = 4;
    int filler_vocab = 300;
    double keyword_rate = 0.03;  ///< fraction of tokens replaced by keywords, at least one
    std::uint64_t seed = 0;
};

std::vector<LabeledText> synthetic_keyword_corpus(const SyntheticCorpusOptions& options);

}  // namespace textgraph::corpus
