#pragma once

#include <array>
#include <chrono>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ctxuse/errors.hpp"

namespace ctxuse {

using Json = nlohmann::ordered_json;
using Date = std::chrono::year_month_day;

/// Parses a strict ISO-8601 calendar date ("YYYY-MM-DD").
Date parse_date(std::string_view text);
std::string format_date(const Date& date);

// ---------------------------------------------------------------------------
// Vocabularies

/// Canonical verdict token used on the metric side. The enumerator value is
/// the row index into every probability triple and desirability column, so
/// triples are always laid out as (False, None, True).
enum class Label : int { False = 0, None = 1, True = 2 };
inline constexpr std::array<Label, 3> kLabels{Label::False, Label::None, Label::True};

std::string_view to_string(Label label);
Label parse_label(std::string_view text);

/// Veracity of a claim at rest, after fact-checker label mapping.
enum class ClaimVerdict { True, False, HalfTrue };

std::string_view to_string(ClaimVerdict verdict);
ClaimVerdict parse_claim_verdict(std::string_view text);

enum class Stance : int {
    Supports = 0,
    InsufficientSupports,
    InsufficientNeutral,
    InsufficientContradictory,
    InsufficientRefutes,
    Refutes,
};
inline constexpr std::array<Stance, 6> kStances{
    Stance::Supports,          Stance::InsufficientSupports, Stance::InsufficientNeutral,
    Stance::InsufficientContradictory, Stance::InsufficientRefutes, Stance::Refutes,
};

std::string_view to_string(Stance stance);
/// Closed vocabulary: anything outside the six labels throws InvariantViolation.
Stance parse_stance(std::string_view text);

enum class Relevance { Relevant, NotRelevant };

std::string_view to_string(Relevance relevance);
Relevance parse_relevance(std::string_view text);

enum class Mode { ClaimOnly, ClaimEvidence };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

/// Mean form scales the signed sum by 1/|T|; sum form reports it unscaled.
enum class AcuForm { Mean, Sum };

std::string_view to_string(AcuForm form);
AcuForm parse_acu_form(std::string_view text);

// ---------------------------------------------------------------------------
// Records

/// Fact-checking sources a claim may come from.
class SourceRegistry {
public:
    SourceRegistry() = default;
    explicit SourceRegistry(std::set<std::string> ids) : ids_(std::move(ids)) {}

    /// The seven fact-checking sources plus the two recast synthetic corpora.
    static SourceRegistry defaults();

    bool contains(std::string_view id) const { return ids_.count(std::string(id)) > 0; }
    const std::set<std::string>& ids() const { return ids_; }

private:
    std::set<std::string> ids_;
};

struct ClaimRecord {
    std::string id;
    std::string text;
    std::optional<std::string> claimant;
    std::string source;
    std::optional<Date> claim_date;
    std::optional<ClaimVerdict> verdict;
    std::string raw_verdict;

    bool operator==(const ClaimRecord&) const = default;
};

struct AnnotatorLabel {
    std::optional<Relevance> relevance;
    std::optional<Stance> stance;

    bool operator==(const AnnotatorLabel&) const = default;
};

struct EvidencePiece {
    std::string id;
    std::string claim_id;
    std::string text;
    std::string url;
    std::optional<Date> pub_date;
    bool is_fact_check_source = false;
    bool is_gold_source = false;
    std::optional<bool> pub_after_claim;
    std::optional<Relevance> relevance;
    std::optional<Stance> stance;
    std::vector<AnnotatorLabel> annotator_labels;

    bool operator==(const EvidencePiece&) const = default;
};

/// Normalised probabilities over {False, None, True} in one prompting mode.
class VerdictProbabilities {
public:
    static constexpr double kSumTolerance = 1e-9;

    /// Validates an already-normalised triple laid out as (False, None, True).
    static VerdictProbabilities from_normalized(const Eigen::Vector3d& probs, Mode mode);
    /// Rescales non-negative label masses to unit sum; throws ZeroMass on all zeros.
    static VerdictProbabilities renormalize(const Eigen::Vector3d& masses, Mode mode);

    double operator[](Label label) const { return probs_(static_cast<int>(label)); }
    const Eigen::Vector3d& vector() const { return probs_; }
    Mode mode() const { return mode_; }
    /// Highest-probability label; ties resolve towards None, then False.
    Label argmax() const;

    bool operator==(const VerdictProbabilities& other) const {
        return mode_ == other.mode_ && probs_ == other.probs_;
    }

private:
    VerdictProbabilities(const Eigen::Vector3d& probs, Mode mode) : probs_(probs), mode_(mode) {}

    Eigen::Vector3d probs_;
    Mode mode_;
};

struct ScoredSample {
    std::string claim_id;
    std::string evidence_id;
    std::optional<Stance> stance;
    VerdictProbabilities probs_without;
    VerdictProbabilities probs_with;
    Eigen::Vector3d delta_p;
    double acu = 0.0;
    AcuForm acu_form = AcuForm::Sum;
    bool degenerate = false;
    std::string model_id;
    std::string prompt_id;

    bool operator==(const ScoredSample&) const = default;
};

enum class Reliability { Unreliable, Reliable, Unknown };

std::string_view to_string(Reliability reliability);
Reliability parse_reliability(std::string_view text);

/// Per-pair context characteristics. Provider-backed entries stay empty when
/// their detector is disabled or errored.
struct CharacteristicVector {
    std::string claim_id;
    std::string evidence_id;
    double jaccard = 0.0;
    double claim_evidence_overlap = 0.0;
    bool repeats_claim = false;
    std::optional<double> flesch;
    std::size_t claim_len_chars = 0;
    std::size_t evidence_len_chars = 0;
    std::optional<double> perplexity;
    double entity_overlap = 1.0;
    bool no_entity = false;
    std::optional<bool> refers_external;
    bool hedging = false;
    bool hedging_discourse = false;
    Reliability unreliable = Reliability::Unknown;
    bool contains_true_word = false;
    bool contains_false_word = false;
    std::optional<bool> pub_after_claim;
    bool fact_check_source = false;
    bool gold_source = false;

    bool operator==(const CharacteristicVector&) const = default;
};

// ---------------------------------------------------------------------------
// Validation

/// Whitespace-delimited word count, the unit of every word cap.
std::size_t count_words(std::string_view text);

/// Deterministic identifier derived from content, used when callers supply none.
std::string fallback_id(std::string_view text, std::string_view url);

void validate(const ClaimRecord& claim, const SourceRegistry& sources);
void validate(const EvidencePiece& evidence, std::size_t max_words = 0);

/// Returns the pair iff every record invariant holds and the evidence points at
/// this claim; DanglingReference otherwise.
std::pair<ClaimRecord, EvidencePiece> validate_sample(
    const ClaimRecord& claim, const EvidencePiece& evidence,
    const SourceRegistry& sources = SourceRegistry::defaults());

/// pub_date > claim_date when both are known.
std::optional<bool> published_after(const std::optional<Date>& pub_date,
                                    const std::optional<Date>& claim_date);

// ---------------------------------------------------------------------------
// JSON Lines encoding. Field names match the record members exactly; absent
// optionals are written as null.

Json to_json(const ClaimRecord& claim);
Json to_json(const EvidencePiece& evidence);
Json to_json(const VerdictProbabilities& probs);
Json to_json(const ScoredSample& sample);
Json to_json(const CharacteristicVector& cv);

ClaimRecord claim_from_json(const Json& j);
EvidencePiece evidence_from_json(const Json& j);
VerdictProbabilities probabilities_from_json(const Json& j);
ScoredSample scored_from_json(const Json& j);
CharacteristicVector characteristics_from_json(const Json& j);

/// Single-line compact encoding used for every JSON Lines file.
std::string encode_line(const Json& j);

}  // namespace ctxuse
