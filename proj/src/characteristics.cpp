#include "ctxuse/characteristics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ctxuse/lm.hpp"
#include "ctxuse/text.hpp"
#include "ctxuse/url.hpp"

namespace ctxuse::characteristics {

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || static_cast<unsigned char>(c) >= 0x80; }

// Whole-word, case-sensitive occurrence of `needle` in `hay`.
bool contains_word(std::string_view hay, std::string_view needle) {
    if (needle.empty()) return false;
    for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + 1)) {
        const bool left = pos == 0 || !is_word_char(hay[pos - 1]);
        const auto end = pos + needle.size();
        const bool right = end == hay.size() || !is_word_char(hay[end]);
        if (left && right) return true;
    }
    return false;
}

std::size_t utf8_length(std::string_view s) {
    return std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; });
}

// U+2000..U+206F (dashes, curly quotes, ellipsis) as UTF-8.
bool general_punct_at(std::string_view s, std::size_t i) {
    return i + 3 <= s.size() && static_cast<unsigned char>(s[i]) == 0xE2 &&
           (static_cast<unsigned char>(s[i + 1]) == 0x80 || static_cast<unsigned char>(s[i + 1]) == 0x81);
}

bool ascii_punct(char c) {
    return static_cast<unsigned char>(c) < 0x80 && std::ispunct(static_cast<unsigned char>(c));
}

std::string strip_edges(std::string_view token, bool& trailing_punct) {
    std::size_t b = 0, e = token.size();
    while (b < e) {
        if (ascii_punct(token[b])) {
            ++b;
        } else if (general_punct_at(token, b)) {
            b += 3;
        } else {
            break;
        }
    }
    const auto before = e;
    while (e > b) {
        if (ascii_punct(token[e - 1])) {
            --e;
        } else if (e - b >= 3 && general_punct_at(token, e - 3)) {
            e -= 3;
        } else {
            break;
        }
    }
    trailing_punct = e != before;
    return std::string(token.substr(b, e - b));
}

}  // namespace

// ---------------------------------------------------------------------------

Jaccard jaccard(std::string_view claim, std::string_view evidence) {
    const auto c = text::word_set(claim);
    const auto e = text::word_set(evidence);
    std::size_t shared = 0;
    for (const auto& w : c) shared += e.count(w);
    const std::size_t uni = c.size() + e.size() - shared;
    if (uni == 0) return {0.0, true};
    return {static_cast<double>(shared) / uni, false};
}

double claim_evidence_overlap(std::string_view claim, std::string_view evidence) {
    const auto c = text::word_set(claim);
    if (c.empty()) throw DegenerateClaim("claim has no words");
    const auto e = text::word_set(evidence);
    std::size_t shared = 0;
    for (const auto& w : c) shared += e.count(w);
    return static_cast<double>(shared) / c.size();
}

bool repeats_claim(std::string_view claim, std::string_view evidence) {
    const auto c = text::to_lower_ascii(text::normalize_whitespace(claim));
    if (c.empty()) return false;
    return text::to_lower_ascii(text::normalize_whitespace(evidence)).find(c) != std::string::npos;
}

// ---------------------------------------------------------------------------

std::size_t count_syllables(std::string_view word) {
    std::string w;
    for (char ch : word) {
        if (std::isalpha(static_cast<unsigned char>(ch))) w += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    auto vowel = [](char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y'; };
    std::size_t groups = 0;
    bool in_group = false;
    for (char c : w) {
        if (vowel(c)) {
            if (!in_group) ++groups;
            in_group = true;
        } else {
            in_group = false;
        }
    }
    const bool silent_e = w.size() >= 2 && w.back() == 'e' && !(w.size() >= 3 && w.substr(w.size() - 2) == "le");
    if (silent_e && groups > 1) --groups;
    return std::max<std::size_t>(groups, 1);
}

ReadabilityCounts readability_counts(std::string_view content) {
    ReadabilityCounts c;
    const auto words = text::word_tokens(content);
    c.words = words.size();
    for (const auto& w : words) c.syllables += count_syllables(w);
    c.sentences = c.words ? text::split_sentences(content).size() : 0;
    return c;
}

double flesch_reading_ease(std::string_view content) {
    const auto c = readability_counts(content);
    if (c.words == 0 || c.sentences == 0) throw DegenerateText("readability of empty text");
    return 206.835 - 1.015 * (static_cast<double>(c.words) / c.sentences) -
           84.6 * (static_cast<double>(c.syllables) / c.words);
}

// ---------------------------------------------------------------------------

std::vector<std::string> HeuristicEntityProvider::entities(std::string_view content) {
    std::vector<std::string> found;
    auto keep = [&](std::vector<std::string>& span, bool sentence_initial) {
        if (span.empty()) return;
        const bool acronym = span.size() == 1 && span[0].size() >= 2 &&
                             std::all_of(span[0].begin(), span[0].end(), [](unsigned char c) { return std::isupper(c); });
        if (!(span.size() == 1 && sentence_initial) || acronym) {
            std::string joined;
            for (const auto& t : span) joined += (joined.empty() ? "" : " ") + t;
            if (joined != "I" && std::find(found.begin(), found.end(), joined) == found.end()) {
                found.push_back(joined);
            }
        }
        span.clear();
    };
    for (const auto& sentence : text::split_sentences(content)) {
        const auto tokens = text::split_whitespace(sentence);
        std::vector<std::string> span;
        bool span_initial = false;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            bool trailing = false;
            const auto tok = strip_edges(tokens[i], trailing);
            const bool capital = !tok.empty() && std::isupper(static_cast<unsigned char>(tok.front()));
            if (capital) {
                if (span.empty()) span_initial = (i == 0);
                span.push_back(tok);
                if (trailing) keep(span, span_initial);
            } else {
                keep(span, span_initial);
            }
        }
        keep(span, span_initial);
    }
    return found;
}

EntityOverlap entity_overlap(std::string_view claim, std::string_view evidence, EntityProvider& ner) {
    const auto ents = ner.entities(claim);
    if (ents.empty()) return {1.0, true};
    std::size_t hits = 0;
    for (const auto& e : ents) hits += contains_word(evidence, e);
    return {static_cast<double>(hits) / ents.size(), false};
}

// ---------------------------------------------------------------------------

bool parse_yes_no(std::string_view reply) {
    auto r = text::to_lower_ascii(text::normalize_whitespace(reply));
    if (!r.empty() && r.back() == '.') r.pop_back();
    if (r == "yes") return true;
    if (r == "no") return false;
    throw UnparseableJudgement("expected Yes or No, got '" + std::string(reply) + "'");
}

bool refers_external_source(std::string_view evidence, lm::JudgementProvider& judge) {
    return parse_yes_no(judge.complete(lm::external_source_prompt(evidence)));
}

// ---------------------------------------------------------------------------

std::set<std::string> HedgeLexicon::load_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open lexicon " + path.string());
    std::set<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto entry = text::to_lower_ascii(text::normalize_whitespace(line));
        if (!entry.empty()) out.insert(std::move(entry));
    }
    return out;
}

HedgeLexicon HedgeLexicon::load(const std::filesystem::path& hedge_words, const std::filesystem::path& markers) {
    HedgeLexicon lex{load_list(hedge_words), load_list(markers)};
    if (lex.hedge_words.empty() || lex.discourse_markers.empty()) {
        throw ConfigError("hedge lexicon lists must not be empty");
    }
    return lex;
}

HedgeFlags hedging_flags(std::string_view evidence, const HedgeLexicon& lexicon) {
    const auto tokens = text::word_tokens(evidence);
    auto any = [&](const std::set<std::string>& entries) {
        return std::any_of(entries.begin(), entries.end(), [&](const std::string& entry) {
            const auto phrase = text::word_tokens(entry);
            return !phrase.empty() && text::contains_phrase(tokens, phrase);
        });
    };
    return {any(lexicon.hedge_words), any(lexicon.discourse_markers)};
}

// ---------------------------------------------------------------------------

std::string_view to_string(SourceCategory category) {
    switch (category) {
        case SourceCategory::Questionable: return "questionable";
        case SourceCategory::ConspiracyPseudoscience: return "conspiracy-pseudoscience";
        case SourceCategory::Satire: return "satire";
        case SourceCategory::Reliable: return "reliable";
    }
    return "reliable";
}

SourceCategory parse_source_category(std::string_view text) {
    if (text == "questionable") return SourceCategory::Questionable;
    if (text == "conspiracy-pseudoscience" || text == "conspiracy/pseudoscience") {
        return SourceCategory::ConspiracyPseudoscience;
    }
    if (text == "satire") return SourceCategory::Satire;
    if (text == "reliable") return SourceCategory::Reliable;
    throw ConfigError("unknown source category '" + std::string(text) + "'");
}

void ReliabilityList::add(std::string_view domain_or_url, SourceCategory category) {
    auto [it, fresh] = domains_.emplace(registered_domain(domain_or_url), category);
    // A flagged rating wins over a plain coverage entry.
    if (!fresh && it->second == SourceCategory::Reliable) it->second = category;
}

ReliabilityList ReliabilityList::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open reliability list " + path.string());
    ReliabilityList list;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto fields = text::split_whitespace(line);
        if (fields.empty()) continue;
        if (fields.size() != 2) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected '<domain> <category>'");
        }
        list.add(text::to_lower_ascii(fields[0]), parse_source_category(text::to_lower_ascii(fields[1])));
    }
    return list;
}

std::optional<SourceCategory> ReliabilityList::category(std::string_view url) const {
    auto it = domains_.find(registered_domain(url));
    if (it == domains_.end()) return std::nullopt;
    return it->second;
}

Reliability ReliabilityList::classify(std::string_view url) const {
    const auto c = category(url);
    if (!c) return Reliability::Unknown;
    return *c == SourceCategory::Reliable ? Reliability::Reliable : Reliability::Unreliable;
}

Reliability unreliable_source(std::string_view url, const ReliabilityList& lists) { return lists.classify(url); }

// ---------------------------------------------------------------------------

VerdictWords verdict_word_flags(std::string_view evidence) {
    return {contains_word(evidence, "True"), contains_word(evidence, "False")};
}

// ---------------------------------------------------------------------------

DetectorOutcome characterize(const ClaimRecord& claim, const EvidencePiece& evidence, const Detectors& detectors) {
    DetectorOutcome out;
    auto& v = out.vector;
    v.claim_id = claim.id;
    v.evidence_id = evidence.id;

    auto guarded = [&](const char* name, auto&& fn) {
        try {
            fn();
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            out.errors[name] = e.code() + ": " + e.what();
        }
    };

    v.jaccard = jaccard(claim.text, evidence.text).value;
    guarded("claim_evidence_overlap", [&] { v.claim_evidence_overlap = claim_evidence_overlap(claim.text, evidence.text); });
    v.repeats_claim = repeats_claim(claim.text, evidence.text);
    guarded("flesch", [&] { v.flesch = flesch_reading_ease(evidence.text); });
    v.claim_len_chars = utf8_length(claim.text);
    v.evidence_len_chars = utf8_length(evidence.text);
    if (detectors.perplexity) guarded("perplexity", [&] { v.perplexity = lm::perplexity(*detectors.perplexity, evidence.text); });
    if (detectors.entities) {
        guarded("entity_overlap", [&] {
            const auto eo = entity_overlap(claim.text, evidence.text, *detectors.entities);
            v.entity_overlap = eo.value;
            v.no_entity = eo.no_entity;
        });
    }
    if (detectors.judge) guarded("refers_external", [&] { v.refers_external = refers_external_source(evidence.text, *detectors.judge); });
    if (detectors.hedges) {
        const auto h = hedging_flags(evidence.text, *detectors.hedges);
        v.hedging = h.hedging;
        v.hedging_discourse = h.hedging_discourse;
    }
    if (detectors.reliability && !evidence.url.empty()) {
        guarded("unreliable", [&] { v.unreliable = unreliable_source(evidence.url, *detectors.reliability); });
    }
    const auto words = verdict_word_flags(evidence.text);
    v.contains_true_word = words.contains_true;
    v.contains_false_word = words.contains_false;
    v.pub_after_claim = evidence.pub_after_claim ? evidence.pub_after_claim
                                                 : published_after(evidence.pub_date, claim.claim_date);
    v.fact_check_source = evidence.is_fact_check_source;
    v.gold_source = evidence.is_gold_source;
    return out;
}

ProfileReport profile(std::span<const ProfileSample> samples, const Detectors& detectors) {
    ProfileReport report;
    report.samples.reserve(samples.size());
    for (const auto& s : samples) report.samples.push_back(characterize(*s.claim, *s.evidence, detectors));
    report.summary = summarize(report.samples, detectors.perplexity_model);
    return report;
}

std::vector<std::string> summary_rows(const std::string& perplexity_model) {
    return {"Jaccard similarity",
            "Claim-evidence overlap",
            "Repeats claim (%)",
            "Flesch reading ease score",
            "Claim length",
            "Evidence length",
            perplexity_model.empty() ? std::string("Perplexity") : perplexity_model + ": Perplexity",
            "Claim entity overlap",
            "Detection by LLM (%)",
            "Unreliable source (%)",
            "Contains hedging (%)",
            "Contains hedging discourse (%)",
            "Contains 'True'",
            "Contains 'False'",
            "Fact-check source (%)",
            "Gold source (%)",
            "Pub. after claim (%)",
            "Total instances"};
}

namespace {

Json mean_std(const std::vector<double>& xs, std::size_t skipped) {
    if (xs.empty()) return Json{{"mean", nullptr}, {"std", nullptr}, {"n", 0}, {"skipped", skipped}};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= xs.size();
    return Json{{"mean", mean}, {"std", std::sqrt(var)}, {"n", xs.size()}, {"skipped", skipped}};
}

Json percent(std::size_t hits, std::size_t n, std::size_t skipped) {
    return Json{{"percent", n ? Json(100.0 * hits / n) : Json()}, {"n", n}, {"skipped", skipped}};
}

}  // namespace

Json summarize(std::span<const DetectorOutcome> samples, const std::string& perplexity_model) {
    const auto rows = summary_rows(perplexity_model);
    std::vector<double> jac, overlap, flesch, claim_len, ev_len, ppl, ents;
    std::size_t repeats = 0, hedge = 0, discourse = 0, has_true = 0, has_false = 0, fact_check = 0, gold = 0;
    std::size_t llm_yes = 0, llm_n = 0, unreliable = 0, known = 0, unknown = 0, no_entity = 0;
    std::size_t after = 0, after_n = 0;
    std::map<std::string, std::size_t> skipped;

    for (const auto& s : samples) {
        const auto& v = s.vector;
        for (const auto& [name, msg] : s.errors) ++skipped[name];
        jac.push_back(v.jaccard);
        if (!s.errors.count("claim_evidence_overlap")) overlap.push_back(v.claim_evidence_overlap);
        repeats += v.repeats_claim;
        if (v.flesch) flesch.push_back(*v.flesch);
        claim_len.push_back(static_cast<double>(v.claim_len_chars));
        ev_len.push_back(static_cast<double>(v.evidence_len_chars));
        if (v.perplexity) ppl.push_back(*v.perplexity);
        if (!s.errors.count("entity_overlap")) {
            ents.push_back(v.entity_overlap);
            no_entity += v.no_entity;
        }
        if (v.refers_external) {
            ++llm_n;
            llm_yes += *v.refers_external;
        }
        switch (v.unreliable) {
            case Reliability::Unreliable: ++unreliable; ++known; break;
            case Reliability::Reliable: ++known; break;
            case Reliability::Unknown: ++unknown; break;
        }
        hedge += v.hedging;
        discourse += v.hedging_discourse;
        has_true += v.contains_true_word;
        has_false += v.contains_false_word;
        fact_check += v.fact_check_source;
        gold += v.gold_source;
        if (v.pub_after_claim) {
            ++after_n;
            after += *v.pub_after_claim;
        }
    }
    const std::size_t n = samples.size();
    auto sk = [&](const char* name) {
        auto it = skipped.find(name);
        return it == skipped.end() ? std::size_t{0} : it->second;
    };

    Json j = Json::object();
    j[rows[0]] = mean_std(jac, 0);
    j[rows[1]] = mean_std(overlap, sk("claim_evidence_overlap"));
    j[rows[2]] = percent(repeats, n, 0);
    j[rows[3]] = mean_std(flesch, sk("flesch"));
    j[rows[4]] = mean_std(claim_len, 0);
    j[rows[5]] = mean_std(ev_len, 0);
    j[rows[6]] = mean_std(ppl, sk("perplexity"));
    j[rows[7]] = mean_std(ents, sk("entity_overlap"));
    j[rows[7]]["no_entity"] = no_entity;
    j[rows[8]] = percent(llm_yes, llm_n, sk("refers_external"));
    j[rows[9]] = percent(unreliable, known, sk("unreliable"));
    j[rows[9]]["unknown_percent"] = n ? Json(100.0 * unknown / n) : Json();
    j[rows[10]] = percent(hedge, n, 0);
    j[rows[11]] = percent(discourse, n, 0);
    j[rows[12]] = percent(has_true, n, 0);
    j[rows[13]] = percent(has_false, n, 0);
    j[rows[14]] = percent(fact_check, n, 0);
    j[rows[15]] = percent(gold, n, 0);
    j[rows[16]] = percent(after, after_n, 0);
    j[rows[17]] = n;
    Json sk_json = Json::object();
    for (const auto& [name, count] : skipped) sk_json[name] = count;
    j["skipped"] = sk_json;
    return j;
}

}  // namespace ctxuse::characteristics
