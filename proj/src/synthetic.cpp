#include "textgraph/corpus.hpp"
#include "textgraph/rng.hpp"

#include <set>

namespace textgraph::corpus {

namespace {

std::string random_word(Rng& rng, int min_len, int max_len) {
    static constexpr std::string_view kLetters = "abcdefghijklmnopqrstuvwxyz";
    const auto len = min_len + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_len - min_len + 1)));
    std::string w;
    for (int i = 0; i < len; ++i) w.push_back(kLetters[rng.below(kLetters.size())]);
    return w;
}

}  // namespace

std::vector<LabeledText> synthetic_keyword_corpus(const SyntheticCorpusOptions& o) {
    if (o.n_docs < 1 || o.n_classes < 2 || o.min_tokens < 1 || o.max_tokens < o.min_tokens ||
        o.keywords_per_class < 1 || o.filler_vocab < 1) {
        throw ArgumentError("invalid synthetic corpus options");
    }
    Rng rng(o.seed, Stream::synthetic);
    std::set<std::string> used;
    auto fresh = [&](int lo, int hi) {
        while (true) {
            auto w = random_word(rng, lo, hi);
            if (used.insert(w).second) return w;
        }
    };
    std::vector<std::string> filler;
    for (int i = 0; i < o.filler_vocab; ++i) filler.push_back(fresh(2, 5));
    std::vector<std::vector<std::string>> keywords(static_cast<std::size_t>(o.n_classes));
    for (auto& kw : keywords) {
        for (int i = 0; i < o.keywords_per_class; ++i) kw.push_back(fresh(4, 6));
    }

    std::vector<LabeledText> docs;
    docs.reserve(static_cast<std::size_t>(o.n_docs));
    for (int d = 0; d < o.n_docs; ++d) {
        const int label = d % o.n_classes;
        const auto n = o.min_tokens +
                       static_cast<int>(rng.below(static_cast<std::uint64_t>(o.max_tokens - o.min_tokens + 1)));
        std::vector<std::string> words;
        words.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) words.push_back(filler[rng.below(filler.size())]);
        const int planted = std::max(1, static_cast<int>(o.keyword_rate * n + 0.5));
        const auto& kw = keywords[static_cast<std::size_t>(label)];
        for (int k = 0; k < planted; ++k) {
            words[rng.below(static_cast<std::uint64_t>(n))] = kw[rng.below(kw.size())];
        }
        std::string text;
        for (int i = 0; i < n; ++i) {
            if (i > 0) text.push_back(' ');
            text += words[static_cast<std::size_t>(i)];
        }
        docs.push_back({label, std::move(text)});
    }
    return docs;
}

}  // namespace textgraph::corpus
