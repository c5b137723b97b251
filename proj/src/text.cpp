#include "ctxuse/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>

namespace ctxuse::text {

namespace {

// Decodes one UTF-8 code point starting at `i`, advancing `i`. Malformed
// bytes decode as U+FFFD so they act as separators.
char32_t next_code_point(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) -> int {
        if (i + k >= s.size()) return -1;
        const auto b = static_cast<unsigned char>(s[i + k]);
        return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
    };
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return 0xFFFD;
    }
    for (int k = 1; k < len; ++k) {
        const int c = cont(k);
        if (c < 0) {
            ++i;
            return 0xFFFD;
        }
        cp = (cp << 6) | static_cast<char32_t>(c);
    }
    i += len;
    return cp;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

bool is_word_code_point(char32_t cp) {
    if (cp < 0x80) return std::isalnum(static_cast<int>(cp)) != 0;
    if (cp <= 0xBF || cp == 0xD7 || cp == 0xF7 || cp == 0xFFFD) return false;
    if (cp >= 0x2000 && cp <= 0x206F) return false;  // general punctuation
    if (cp >= 0x20A0 && cp <= 0x20CF) return false;  // currency
    if (cp >= 0x2190 && cp <= 0x2BFF) return false;  // arrows, maths, symbols
    if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
    if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
    if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
    return true;
}

char32_t fold_case(char32_t cp) {
    if (cp < 0x80) return static_cast<char32_t>(std::tolower(static_cast<int>(cp)));
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
    if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
    if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
    if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
    return cp;
}

constexpr std::array<std::string_view, 30> kAbbreviations{
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "inc", "ltd", "co",
    "u.s", "u.k", "no", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
};

bool is_closing(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

bool starts_sentence(std::string_view s, std::size_t pos) {
    const auto c = static_cast<unsigned char>(s[pos]);
    if (c >= 0x80) return true;  // curly quotes and non-ASCII capitals
    return std::isupper(c) || std::isdigit(c) || c == '"' || c == '\'' || c == '(' || c == '[';
}

bool is_abbreviation(std::string_view sentence_so_far) {
    auto start = sentence_so_far.find_last_of(" \t\n(\"");
    auto word = sentence_so_far.substr(start == std::string_view::npos ? 0 : start + 1);
    if (word.size() == 1 && std::isupper(static_cast<unsigned char>(word[0]))) return true;  // initials
    const auto lower = to_lower_ascii(word);
    return std::find(kAbbreviations.begin(), kAbbreviations.end(), lower) != kAbbreviations.end();
}

// Multi-byte closing quotes (U+201D, U+2019) after a terminator.
std::size_t closing_quote_len(std::string_view s, std::size_t pos) {
    if (s.substr(pos, 3) == "\xE2\x80\x9D" || s.substr(pos, 3) == "\xE2\x80\x99") return 3;
    return 0;
}

bool is_block_tag(std::string_view name) {
    static constexpr std::array<std::string_view, 31> kBlock{
        "p",     "div",    "li",         "ul",     "ol",    "h1",     "h2",
        "h3",    "h4",     "h5",      "h6",         "tr",     "table", "section", "article",
        "header", "footer", "blockquote", "pre",    "hr",     "dd",    "dt",     "dl",
        "main",  "aside",  "nav",     "figure",     "figcaption", "form", "body", "title",
    };
    return std::find(kBlock.begin(), kBlock.end(), name) != kBlock.end();
}

void decode_entity(std::string_view html, std::size_t& i, std::string& out) {
    const auto semi = html.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
        out += '&';
        ++i;
        return;
    }
    const auto name = html.substr(i + 1, semi - i - 1);
    char32_t cp = 0;
    if (name == "amp") cp = '&';
    else if (name == "lt") cp = '<';
    else if (name == "gt") cp = '>';
    else if (name == "quot") cp = '"';
    else if (name == "apos") cp = '\'';
    else if (name == "nbsp") cp = ' ';
    else if (!name.empty() && name[0] == '#') {
        try {
            cp = (name.size() > 1 && (name[1] == 'x' || name[1] == 'X'))
                     ? static_cast<char32_t>(std::stoul(std::string(name.substr(2)), nullptr, 16))
                     : static_cast<char32_t>(std::stoul(std::string(name.substr(1))));
        } catch (...) {
            cp = 0;
        }
    }
    if (cp == 0) {
        out += '&';
        ++i;
        return;
    }
    append_utf8(out, cp);
    i = semi + 1;
}

}  // namespace

std::string to_lower_ascii(std::string_view text) {
    std::string out(text);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> word_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    std::size_t i = 0;
    while (i < text.size()) {
        const char32_t cp = next_code_point(text, i);
        if (is_word_code_point(cp)) {
            append_utf8(current, fold_case(cp));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::set<std::string> word_set(std::string_view text) {
    auto tokens = word_tokens(text);
    return {tokens.begin(), tokens.end()};
}

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        const auto start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) words.emplace_back(text.substr(start, i - start));
    }
    return words;
}

std::string normalize_whitespace(std::string_view text) {
    std::string out;
    for (const auto& w : split_whitespace(text)) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
    const std::string norm = normalize_whitespace(text);
    std::vector<std::string> sentences;
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < norm.size()) {
        const char c = norm[i];
        if (c != '.' && c != '!' && c != '?') {
            ++i;
            continue;
        }
        std::size_t end = i + 1;
        while (end < norm.size() && (norm[end] == '.' || norm[end] == '!' || norm[end] == '?')) ++end;
        while (end < norm.size()) {
            if (is_closing(norm[end])) {
                ++end;
            } else if (auto q = closing_quote_len(norm, end)) {
                end += q;
            } else {
                break;
            }
        }
        const bool at_end = end >= norm.size();
        bool split = at_end;
        if (!at_end && norm[end] == ' ' && end + 1 < norm.size() && starts_sentence(norm, end + 1)) {
            split = !(c == '.' && is_abbreviation(std::string_view(norm).substr(start, i - start)));
        }
        if (split) {
            sentences.push_back(norm.substr(start, end - start));
            start = at_end ? end : end + 1;
        }
        i = end;
    }
    if (start < norm.size()) sentences.push_back(norm.substr(start));
    std::erase_if(sentences, [](const std::string& s) { return s.empty(); });
    return sentences;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(std::string_view candidate, std::string_view reference) {
    const auto c = word_tokens(candidate);
    const auto r = word_tokens(reference);
    const auto lcs = static_cast<double>(lcs_length(c, r));
    if (lcs == 0.0) return 0.0;
    const double precision = lcs / static_cast<double>(c.size());
    const double recall = lcs / static_cast<double>(r.size());
    return 2.0 * precision * recall / (precision + recall);
}

bool contains_phrase(const std::vector<std::string>& tokens, const std::vector<std::string>& phrase) {
    if (phrase.empty() || phrase.size() > tokens.size()) return false;
    return std::search(tokens.begin(), tokens.end(), phrase.begin(), phrase.end()) != tokens.end();
}

bool looks_like_html(std::string_view text) {
    const auto lower = to_lower_ascii(text.substr(0, std::min<std::size_t>(text.size(), 4096)));
    for (std::string_view tag : {"<html", "<body", "<p>", "<p ", "<div", "<br", "<!doctype"}) {
        if (lower.find(tag) != std::string::npos) return true;
    }
    return false;
}

std::string html_to_text(std::string_view html) {
    std::string out;
    std::size_t i = 0;
    while (i < html.size()) {
        const char c = html[i];
        if (c == '&') {
            decode_entity(html, i, out);
            continue;
        }
        if (c != '<') {
            out += c;
            ++i;
            continue;
        }
        if (html.substr(i, 4) == "<!--") {
            const auto end = html.find("-->", i + 4);
            i = end == std::string_view::npos ? html.size() : end + 3;
            continue;
        }
        const auto close = html.find('>', i);
        if (close == std::string_view::npos) {
            out += c;
            ++i;
            continue;
        }
        auto inner = html.substr(i + 1, close - i - 1);
        const bool closing = !inner.empty() && inner[0] == '/';
        if (closing) inner.remove_prefix(1);
        std::size_t n = 0;
        while (n < inner.size() && std::isalnum(static_cast<unsigned char>(inner[n]))) ++n;
        const auto name = to_lower_ascii(inner.substr(0, n));
        i = close + 1;
        if (!closing && (name == "script" || name == "style" || name == "noscript" || name == "head")) {
            const auto lower_rest = to_lower_ascii(html.substr(i));
            const auto end = lower_rest.find("</" + name);
            if (end == std::string::npos) {
                i = html.size();
            } else {
                const auto gt = html.find('>', i + end);
                i = gt == std::string_view::npos ? html.size() : gt + 1;
            }
            continue;
        }
        out += is_block_tag(name) ? "\n\n" : name == "br" ? "\n" : " ";
    }
    return out;
}

std::vector<std::string> split_paragraphs(std::string_view text) {
    std::vector<std::string> paragraphs;
    std::string current;
    auto flush = [&] {
        auto p = normalize_whitespace(current);
        if (!p.empty()) paragraphs.push_back(std::move(p));
        current.clear();
    };
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        if (normalize_whitespace(line).empty()) {
            flush();
        } else {
            current += ' ';
            current += line;
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    flush();
    return paragraphs;
}

}  // namespace ctxuse::text
