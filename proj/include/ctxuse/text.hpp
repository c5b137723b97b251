#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace ctxuse::text {

/// Lower-cased word tokens. Anything that is not a letter or digit separates
/// words, including '-' and Unicode punctuation such as dashes and curly quotes.
std::vector<std::string> word_tokens(std::string_view text);

/// Unique lower-cased words (the W(.) operator of the similarity measures).
std::set<std::string> word_set(std::string_view text);

std::vector<std::string> split_whitespace(std::string_view text);

/// Collapses whitespace runs to single spaces and trims both ends.
std::string normalize_whitespace(std::string_view text);

std::string to_lower_ascii(std::string_view text);

/// Rule-based sentence segmenter: breaks after '.', '!' or '?' (optionally
/// followed by closing quotes/brackets) when the next token starts with an
/// upper-case letter, digit or opening quote, skipping common abbreviations.
std::vector<std::string> split_sentences(std::string_view text);

inline constexpr std::string_view kSentenceSegmenterId = "rule-v1";

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// ROUGE-L F-measure (beta = 1) over word tokens.
double rouge_l(std::string_view candidate, std::string_view reference);

/// True iff `phrase` occurs as a contiguous run inside `tokens`.
bool contains_phrase(const std::vector<std::string>& tokens, const std::vector<std::string>& phrase);

/// Strips markup, turning block-level element boundaries into blank lines.
std::string html_to_text(std::string_view html);

bool looks_like_html(std::string_view text);

/// Paragraphs separated by blank lines, whitespace-normalised, empties dropped.
std::vector<std::string> split_paragraphs(std::string_view text);

}  // namespace ctxuse::text
