#include "textgraph/corpus.hpp"
#include "textgraph/rng.hpp"

#include <doctest.h>

#include <sstream>

using namespace textgraph;
using namespace textgraph::corpus;

namespace {

std::vector<std::string> texts_of(const std::vector<TokenSpan>& spans) {
    std::vector<std::string> out;
    for (const auto& s : spans) out.push_back(s.text);
    return out;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("tokenize splits on whitespace and isolates punctuation") {
    const auto t = tokenize("Good movie!");
    REQUIRE(t.size() == 3);
    CHECK(t[0] == TokenSpan{"Good", 0, 4});
    CHECK(t[1] == TokenSpan{"movie", 5, 5});
    CHECK(t[2] == TokenSpan{"!", 10, 1});
    CHECK(tokenize("").empty());
    CHECK(tokenize("a") == std::vector<TokenSpan>{{"a", 0, 1}});
}

TEST_CASE("tokenize counts offsets in code points") {
    const auto t = tokenize("caf\xc3\xa9 ok");
    REQUIRE(t.size() == 2);
    CHECK(t[0].char_len == 4);
    CHECK(t[1].char_start == 5);
}

TEST_CASE("tokenize round trip reproduces the text from spans and separators") {
    Rng rng(11);
    const std::string alphabet = "ab Z.,!?\t\n  xy\xc3\xa9";
    for (int trial = 0; trial < 300; ++trial) {
        std::string text;
        const auto n = rng.below(40);
        for (std::uint64_t i = 0; i < n; ++i) {
            const auto c = rng.below(alphabet.size() - 1);
            if (alphabet[c] == '\xc3') {
                text += "\xc3\xa9";
            } else if (alphabet[c] != '\xa9') {
                text += alphabet[c];
            }
        }
        const auto cps = decode_utf8(text);
        const auto spans = tokenize(text);
        std::vector<char> covered(cps.size(), 0);
        std::u32string rebuilt;
        std::size_t pos = 0;
        for (const auto& s : spans) {
            for (; pos < static_cast<std::size_t>(s.char_start); ++pos) {
                REQUIRE(is_separator(cps[pos]));
                rebuilt += cps[pos];
            }
            for (index_t k = 0; k < s.char_len; ++k) rebuilt += cps[pos++];
        }
        for (; pos < cps.size(); ++pos) {
            REQUIRE(is_separator(cps[pos]));
            rebuilt += cps[pos];
        }
        CHECK(rebuilt == std::u32string(cps.begin(), cps.end()));
    }
}

TEST_CASE("precomputed spans are validated") {
    const std::string text = "hello world";
    const std::vector<CharSpan> ok{{0, 5}, {6, 5}};
    CHECK(texts_of(tokenize(text, TokenizeMode::precomputed_spans, ok)) ==
          std::vector<std::string>{"hello", "world"});
    const std::vector<CharSpan> overlap{{0, 5}, {4, 3}};
    CHECK_THROWS_AS(tokenize_precomputed(text, overlap), SpanError);
    const std::vector<CharSpan> outside{{8, 5}};
    CHECK_THROWS_AS(tokenize_precomputed(text, outside), SpanError);
    const std::vector<CharSpan> empty{{2, 0}};
    CHECK_THROWS_AS(tokenize_precomputed(text, empty), SpanError);
}

TEST_CASE("malformed UTF-8 is rejected") {
    CHECK_THROWS_AS(decode_utf8("\xc3"), FormatError);
    CHECK_THROWS_AS(decode_utf8("\xff"), FormatError);
}

TEST_CASE("frequency table overwrites counts and keeps a floor of one") {
    const std::vector<std::string> vocab{"a", "b", "c"};
    const std::vector<std::string> docs{"a b a"};
    const auto f = build_frequency_table(docs, vocab);
    CHECK(f.counts.at("a") == 2);
    CHECK(f.counts.at("b") == 1);
    CHECK(f.counts.at("c") == 1);

    const std::vector<std::string> x{"x"};
    const auto g = build_frequency_table({}, x);
    CHECK(g.counts.at("x") == 1);

    const std::vector<std::string> lower_vocab{"a"};
    const std::vector<std::string> mixed{"A a"};
    CHECK(build_frequency_table(mixed, lower_vocab).counts.at("a") == 2);
}

TEST_CASE("frequency counts are at least one for every vocabulary entry") {
    Rng rng(5);
    std::vector<std::string> vocab, docs;
    for (int i = 0; i < 30; ++i) vocab.push_back("w" + std::to_string(i));
    for (int d = 0; d < 20; ++d) {
        std::string doc;
        for (int t = 0; t < 15; ++t) doc += "w" + std::to_string(rng.below(60)) + " ";
        docs.push_back(doc);
    }
    const auto f = build_frequency_table(docs, vocab);
    for (const auto& v : vocab) CHECK(f.counts.at(v) >= 1);
}

TEST_CASE("linear sub-sampling probability") {
    CHECK(linear_subsample_prob(100, 1'000'000, 1e-4) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(linear_subsample_prob(10'000, 1'000'000, 1e-4) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(linear_subsample_prob(1, 10, 1e-4) == doctest::Approx(0.001).epsilon(1e-12));
    double prev = 2.0;
    for (std::int64_t f = 1; f < 1'000'000; f = f * 3 + 1) {
        const double p = linear_subsample_prob(f, 1'000'000, 1e-4);
        CHECK(p <= prev);
        prev = p;
    }
}

TEST_CASE("sigmoid sub-sampling probability") {
    CHECK(sigmoid_subsample_prob(90.0, 1.0) == doctest::Approx(0.525).epsilon(1e-12));
    CHECK(sigmoid_subsample_prob(1e-12, 1.0) == doctest::Approx(0.9895624045009365).epsilon(1e-9));
    CHECK(sigmoid_subsample_prob(1e6, 1.0) == doctest::Approx(0.05).epsilon(1e-12));
    double prev = 1.0;
    for (double f = 0.5; f < 400; f += 0.5) {
        const double p = sigmoid_subsample_prob(f, 1.0);
        CHECK(p < prev);
        CHECK(p > 0.05);
        CHECK(p < 1.0);
        prev = p;
    }
}

TEST_CASE("embedding table min-max normalization") {
    EmbeddingTable t(2);
    const std::vector<real> a{0, 2}, b{1, 4};
    t.put("a", a);
    t.put("b", b);
    t.normalize();
    const auto ra = t.row(*t.find("a"));
    const auto rb = t.row(*t.find("b"));
    CHECK(ra[0] == 0.0);
    CHECK(ra[1] == 0.0);
    CHECK(rb[0] == 1.0);
    CHECK(rb[1] == 1.0);

    EmbeddingTable single(2);
    const std::vector<real> five{5, 5};
    single.put("a", five);
    single.normalize();
    CHECK(single.row(0)[0] == 0.0);
    CHECK(single.row(0)[1] == 0.0);
}

TEST_CASE("embedding file parsing") {
    std::istringstream in("good\t0.5 1.5\nbad\t-1 2\n");
    const auto t = parse_embedding_table(in, 2);
    CHECK(t.size() == 2);
    CHECK(t.row(*t.find("good"))[0] == 1.0);
    CHECK(t.row(*t.find("bad"))[1] == 1.0);
    std::istringstream wrong_dim("good\t0.5\n");
    CHECK_THROWS_AS(parse_embedding_table(wrong_dim, 2), FormatError);
    std::istringstream no_tab("good 0.5 1\n");
    CHECK_THROWS_AS(parse_embedding_table(no_tab, 2), FormatError);
}

TEST_CASE("hashed fallback embedding is deterministic and seed dependent") {
    const auto a = hashed_fallback_embedding("the", 4, 1);
    CHECK(a == hashed_fallback_embedding("the", 4, 1));
    CHECK(a.size() == 4);
    CHECK(a != hashed_fallback_embedding("the", 4, 2));
    CHECK(a != hashed_fallback_embedding("tha", 4, 1));
}

TEST_CASE("sentiment lexicon parsing and lookup") {
    std::istringstream in("good\t0.7\t0.6\nbad\t-0.7\t0.67\n");
    const auto lex = parse_sentiment_lexicon(in);
    CHECK(lex.lookup("good").polarity == doctest::Approx(0.7));
    CHECK(lex.lookup("good").subjectivity == doctest::Approx(0.6));
    CHECK(lex.lookup("bad").polarity == doctest::Approx(-0.7));
    CHECK(lex.lookup("bad").subjectivity == doctest::Approx(0.67));
    CHECK(lex.lookup("GOOD").polarity == doctest::Approx(0.7));
    CHECK(lex.lookup("absent").polarity == 0.0);
    CHECK(lex.lookup("absent").subjectivity == 0.0);
    std::istringstream bad("x\t2\t0.5\n");
    CHECK_THROWS_AS(parse_sentiment_lexicon(bad), FormatError);
}

TEST_CASE("corpus readers") {
    std::istringstream jl("{\"label\": 1, \"text\": \"fine film\"}\n\n{\"label\": 0, \"text\": \"dull\"}\n");
    const auto a = read_jsonl(jl);
    REQUIRE(a.size() == 2);
    CHECK(a[0].label == 1);
    CHECK(a[1].text == "dull");

    std::istringstream csv("label,text\n1,\"great, really\"\n0,\"said \"\"meh\"\"\"\n");
    const auto b = read_csv(csv);
    REQUIRE(b.size() == 2);
    CHECK(b[0].text == "great, really");
    CHECK(b[1].text == "said \"meh\"");

    std::istringstream broken("{\"label\": 1}\n");
    CHECK_THROWS_AS(read_jsonl(broken), FormatError);
    CHECK_THROWS_AS(read_corpus("/nonexistent/corpus.jsonl"), FormatError);
}

TEST_CASE("character ids fall back to zero outside the character set") {
    CHECK(char_id(U'a') == 97);
    CHECK(char_id(static_cast<char32_t>(kCharsetSize - 1)) == kCharsetSize - 1);
    CHECK(char_id(static_cast<char32_t>(kCharsetSize)) == 0);
    CHECK(char_id(U'\U0001F600') == 0);
}

TEST_CASE("documents carry token metadata from the tables") {
    const std::vector<LabeledText> base{{1, "Good good movie"}, {0, "bad movie"}};
    auto tables = CorpusTables::build(base);
    SentimentLexicon lex;
    lex.put("good", {0.7, 0.6});
    tables.set_lexicon(lex);
    const auto doc = tables.make_document(3, {1, "Good plot"});
    CHECK(doc.id == 3);
    CHECK(doc.label == 1);
    REQUIRE(doc.tokens.size() == 2);
    CHECK(doc.chars.size() == 9);
    CHECK(doc.tokens[0].polarity == doctest::Approx(0.7));
    CHECK(doc.tokens[1].polarity == 0.0);
    CHECK(doc.tokens[1].pos_in_doc == 1);
    CHECK(doc.tokens[1].char_start == 5);
    CHECK(doc.tokens[0].subsample_p > 0.0);
    CHECK(doc.tokens[0].subsample_p <= 1.0);
    CHECK(tables.embedding_for(doc.tokens[0]).size() == 64);
}

TEST_CASE("synthetic corpus is deterministic and balanced") {
    SyntheticCorpusOptions o;
    o.n_docs = 200;
    const auto a = synthetic_keyword_corpus(o);
    const auto b = synthetic_keyword_corpus(o);
    REQUIRE(a.size() == 200);
    int ones = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].text == b[i].text);
        ones += a[i].label;
    }
    CHECK(ones == 100);
}

}  // TEST_SUITE
