#include "textgraph/corpus.hpp"

#include <string>

namespace textgraph::corpus {

namespace {

// Decodes one code point starting at byte i; advances i. Returns false on
// malformed input.
bool next_code_point(std::string_view s, std::size_t& i, char32_t& cp) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int extra = 0;
    if (b0 < 0x80) {
        cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
        cp = b0 & 0x1F;
        extra = 1;
    } else if ((b0 & 0xF0) == 0xE0) {
        cp = b0 & 0x0F;
        extra = 2;
    } else if ((b0 & 0xF8) == 0xF0) {
        cp = b0 & 0x07;
        extra = 3;
    } else {
        return false;
    }
    if (i + static_cast<std::size_t>(extra) >= s.size()) return false;
    for (int k = 1; k <= extra; ++k) {
        const auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
        if ((b & 0xC0) != 0x80) return false;
        cp = (cp << 6) | (b & 0x3F);
    }
    // Overlong encodings and surrogates are rejected.
    static constexpr char32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += static_cast<std::size_t>(extra) + 1;
    return true;
}

// Byte offset of each code point, plus a final entry equal to s.size().
std::vector<std::size_t> byte_offsets(std::string_view s) {
    std::vector<std::size_t> offsets;
    offsets.reserve(s.size() + 1);
    std::size_t i = 0;
    char32_t cp;
    while (i < s.size()) {
        offsets.push_back(i);
        if (!next_code_point(s, i, cp)) {
            throw FormatError("invalid UTF-8 at byte " + std::to_string(i));
        }
    }
    offsets.push_back(s.size());
    return offsets;
}

}  // namespace

std::vector<char32_t> decode_utf8(std::string_view text) {
    std::vector<char32_t> out;
    out.reserve(text.size());
    std::size_t i = 0;
    char32_t cp;
    while (i < text.size()) {
        if (!next_code_point(text, i, cp)) {
            throw FormatError("invalid UTF-8 at byte " + std::to_string(i));
        }
        out.push_back(cp);
    }
    return out;
}

bool is_separator(char32_t cp) {
    switch (cp) {
        case U' ': case U'\t': case U'\n': case U'\r': case U'\v': case U'\f':
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_punctuation(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
               (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
    }
    // General punctuation commonly found in reviews: dashes, quotes, ellipsis.
    return (cp >= 0x2010 && cp <= 0x2027) || cp == 0xA1 || cp == 0xBF || cp == 0xAB || cp == 0xBB;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

std::vector<TokenSpan> tokenize(std::string_view text) {
    const auto offsets = byte_offsets(text);
    const auto cps = decode_utf8(text);
    std::vector<TokenSpan> tokens;
    const auto n = static_cast<index_t>(cps.size());
    auto emit = [&](index_t start, index_t end) {
        const auto b0 = offsets[static_cast<std::size_t>(start)];
        const auto b1 = offsets[static_cast<std::size_t>(end)];
        tokens.push_back({std::string(text.substr(b0, b1 - b0)), start, end - start});
    };
    index_t word_start = -1;
    for (index_t i = 0; i < n; ++i) {
        const char32_t cp = cps[static_cast<std::size_t>(i)];
        if (is_separator(cp) || is_punctuation(cp)) {
            if (word_start >= 0) {
                emit(word_start, i);
                word_start = -1;
            }
            if (is_punctuation(cp)) emit(i, i + 1);
        } else if (word_start < 0) {
            word_start = i;
        }
    }
    if (word_start >= 0) emit(word_start, n);
    return tokens;
}

std::vector<TokenSpan> tokenize_precomputed(std::string_view text, std::span<const CharSpan> spans) {
    const auto offsets = byte_offsets(text);
    const auto n = static_cast<index_t>(offsets.size()) - 1;
    std::vector<TokenSpan> tokens;
    tokens.reserve(spans.size());
    index_t prev_end = 0;
    for (std::size_t k = 0; k < spans.size(); ++k) {
        const auto& sp = spans[k];
        if (sp.len < 1) throw SpanError("span " + std::to_string(k) + " is empty");
        if (sp.start < 0 || sp.start + sp.len > n) {
            throw SpanError("span " + std::to_string(k) + " [" + std::to_string(sp.start) + ", " +
                            std::to_string(sp.start + sp.len) + ") exceeds text length " + std::to_string(n));
        }
        if (sp.start < prev_end) {
            throw SpanError("span " + std::to_string(k) + " overlaps or precedes the previous span");
        }
        prev_end = sp.start + sp.len;
        const auto b0 = offsets[static_cast<std::size_t>(sp.start)];
        const auto b1 = offsets[static_cast<std::size_t>(sp.start + sp.len)];
        tokens.push_back({std::string(text.substr(b0, b1 - b0)), sp.start, sp.len});
    }
    return tokens;
}

std::vector<TokenSpan> tokenize(std::string_view text, TokenizeMode mode, std::span<const CharSpan> spans) {
    if (mode == TokenizeMode::precomputed_spans) return tokenize_precomputed(text, spans);
    return tokenize(text);
}

}  // namespace textgraph::corpus
