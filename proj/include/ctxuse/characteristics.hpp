#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxuse/model.hpp"

namespace ctxuse::lm {
class JudgementProvider;
class LmProvider;
}  // namespace ctxuse::lm

namespace ctxuse::characteristics {

// ---------------------------------------------------------------------------
// Lexical similarity

struct Jaccard {
    double value = 0.0;
    bool degenerate = false;  // both word sets empty
};

Jaccard jaccard(std::string_view claim, std::string_view evidence);

/// Share of the claim's distinct words that reappear in the evidence.
double claim_evidence_overlap(std::string_view claim, std::string_view evidence);

/// Claim occurs verbatim in the evidence, ignoring case and whitespace runs.
bool repeats_claim(std::string_view claim, std::string_view evidence);

// ---------------------------------------------------------------------------
// Readability

/// Vowel groups of [aeiouy], minus one for a silent final "e" (not "-le"),
/// never below one.
std::size_t count_syllables(std::string_view word);

struct ReadabilityCounts {
    std::size_t words = 0;
    std::size_t sentences = 0;
    std::size_t syllables = 0;
};

ReadabilityCounts readability_counts(std::string_view text);

double flesch_reading_ease(std::string_view text);

// ---------------------------------------------------------------------------
// Named entities

class EntityProvider {
public:
    virtual ~EntityProvider() = default;
    virtual std::string id() const = 0;
    /// Distinct entity surface forms.
    virtual std::vector<std::string> entities(std::string_view text) = 0;
};

/// Runs of capitalised tokens; a single capitalised word that opens a
/// sentence is not an entity.
class HeuristicEntityProvider : public EntityProvider {
public:
    std::string id() const override { return "capitalized-span"; }
    std::vector<std::string> entities(std::string_view text) override;
};

struct EntityOverlap {
    double value = 1.0;
    bool no_entity = false;
};

/// Fraction of claim entities whose surface form appears in the evidence as a
/// whole-word, case-sensitive match.
EntityOverlap entity_overlap(std::string_view claim, std::string_view evidence, EntityProvider& ner);

// ---------------------------------------------------------------------------
// External references

/// Trimmed reply, optional trailing '.', case-insensitive "yes" or "no".
bool parse_yes_no(std::string_view reply);

bool refers_external_source(std::string_view evidence, lm::JudgementProvider& judge);

// ---------------------------------------------------------------------------
// Hedging

struct HedgeLexicon {
    std::set<std::string> hedge_words;
    std::set<std::string> discourse_markers;

    /// One entry per line, '#' starts a comment; entries are lower-cased.
    static std::set<std::string> load_list(const std::filesystem::path& path);
    static HedgeLexicon load(const std::filesystem::path& hedge_words, const std::filesystem::path& markers);
};

struct HedgeFlags {
    bool hedging = false;
    bool hedging_discourse = false;
};

/// Case-insensitive whole-word match; multi-word entries match as phrases.
HedgeFlags hedging_flags(std::string_view evidence, const HedgeLexicon& lexicon);

// ---------------------------------------------------------------------------
// Source reliability

enum class SourceCategory { Questionable, ConspiracyPseudoscience, Satire, Reliable };

std::string_view to_string(SourceCategory category);
SourceCategory parse_source_category(std::string_view text);

/// Domain-keyed reliability ratings. Every listed domain belongs to the
/// coverage universe; "reliable" entries only widen coverage.
class ReliabilityList {
public:
    void add(std::string_view domain_or_url, SourceCategory category);
    /// Lines of "<domain> <category>"; '#' comments.
    static ReliabilityList load(const std::filesystem::path& path);

    Reliability classify(std::string_view url) const;
    std::optional<SourceCategory> category(std::string_view url) const;
    std::size_t size() const { return domains_.size(); }

private:
    std::map<std::string, SourceCategory> domains_;
};

Reliability unreliable_source(std::string_view url, const ReliabilityList& lists);

// ---------------------------------------------------------------------------
// Verdict words

struct VerdictWords {
    bool contains_true = false;
    bool contains_false = false;
};

/// Case-sensitive whole-word "True" / "False".
VerdictWords verdict_word_flags(std::string_view evidence);

// ---------------------------------------------------------------------------
// Profiling

/// Optional collaborators; a null entry disables the detector.
struct Detectors {
    const HedgeLexicon* hedges = nullptr;
    const ReliabilityList* reliability = nullptr;
    EntityProvider* entities = nullptr;
    lm::JudgementProvider* judge = nullptr;
    lm::LmProvider* perplexity = nullptr;
    std::string perplexity_model;  // row label, e.g. "Llama"
};

struct DetectorOutcome {
    CharacteristicVector vector;
    std::map<std::string, std::string> errors;  // detector -> message
};

DetectorOutcome characterize(const ClaimRecord& claim, const EvidencePiece& evidence, const Detectors& detectors);

struct ProfileReport {
    std::vector<DetectorOutcome> samples;
    Json summary;  // keyed by the report row names
};

struct ProfileSample {
    const ClaimRecord* claim;
    const EvidencePiece* evidence;
};

ProfileReport profile(std::span<const ProfileSample> samples, const Detectors& detectors);

/// Mean and population standard deviation, or percentages, per row. Samples
/// whose detector errored are left out of that row and counted under
/// "skipped".
Json summarize(std::span<const DetectorOutcome> samples, const std::string& perplexity_model = {});

/// Row names of the summary, in report order.
std::vector<std::string> summary_rows(const std::string& perplexity_model = {});

}  // namespace ctxuse::characteristics
