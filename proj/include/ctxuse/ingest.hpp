#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ctxuse/model.hpp"

namespace ctxuse::ingest {

// ---------------------------------------------------------------------------
// Fact-checker verdict mapping

struct VerdictMappingTable {
    std::map<std::string, ClaimVerdict, std::less<>> mapping;

    /// The mapping used for the released claim corpus; every other label drops.
    static VerdictMappingTable defaults();
    /// JSON object: raw label -> "True" | "False" | "Half-true".
    static VerdictMappingTable load(const std::filesystem::path& path);
};

/// Mapped verdict, or nullopt when the raw label must be dropped.
std::optional<ClaimVerdict> map_verdict(std::string_view raw_label, const VerdictMappingTable& table);

// ---------------------------------------------------------------------------
// Native field-name mapping

/// Maps canonical field names to dotted paths in the upstream JSON objects,
/// e.g. {"object_true": "requested_rewrite.target_true.str"}. Unmapped fields
/// are read under their canonical name.
struct FieldMapping {
    std::map<std::string, std::string> paths;

    static FieldMapping load(const std::filesystem::path& path);
    /// Rewrites `record` so every canonical field sits at top level.
    Json apply(const Json& record) const;
};

/// Configuration file grouping the per-file field mappings, e.g.
/// {"claims": {...}, "evidence": {...}, "counterfact": {...}, "conflictqa": {...}}.
struct MappingConfig {
    FieldMapping claims;
    FieldMapping evidence;
    FieldMapping counterfact;
    FieldMapping conflictqa;

    static MappingConfig load(const std::filesystem::path& path);
};

// ---------------------------------------------------------------------------
// Corpus

struct Corpus {
    std::vector<ClaimRecord> claims;
    std::vector<EvidencePiece> evidence;
    std::size_t dropped_claims = 0;    // unmapped verdicts
    std::size_t dropped_evidence = 0;  // evidence of dropped claims

    const ClaimRecord* find_claim(std::string_view id) const;
    /// Evidence grouped per claim, claims in corpus order.
    std::vector<std::pair<const ClaimRecord*, std::vector<const EvidencePiece*>>> grouped() const;

private:
    mutable std::map<std::string, std::size_t, std::less<>> index_;
};

struct LoadOptions {
    SourceRegistry sources = SourceRegistry::defaults();
    VerdictMappingTable verdicts = VerdictMappingTable::defaults();
    MappingConfig fields;
};

/// Reads a claims file and an evidence file (JSON Lines; header lines are
/// skipped). Throws ParseError with the 1-based line number, and the
/// record-level errors of the core model.
Corpus load_druid(const std::filesystem::path& claims_path, const std::filesystem::path& evidence_path,
                  const LoadOptions& options = {});
Corpus load_druid(std::istream& claims, std::istream& evidence, const LoadOptions& options = {});

struct SourceCount {
    std::size_t claims = 0;
    std::size_t samples = 0;
};

struct CorpusStats {
    std::size_t claims = 0;
    std::size_t samples = 0;
    std::map<std::string, SourceCount> per_source;
    std::map<Stance, std::size_t> stances;
    std::size_t relevant = 0;
    std::size_t not_relevant = 0;
    std::size_t inter_context_conflicts = 0;

    std::size_t insufficient() const;
};

CorpusStats corpus_stats(const Corpus& corpus);
Json to_json(const CorpusStats& stats);

// ---------------------------------------------------------------------------
// Recasting of triplet-style knowledge-conflict datasets

struct CounterFactRecord {
    std::string id;
    std::string subject;
    std::string relation;  // surface template, "{}" marks the subject slot
    std::string object_true;
    std::string object_edited;
};

struct ConflictQARecord {
    std::string id;
    std::string memory_answer;
    std::string parametric_evidence;
    std::string counter_evidence;
};

using RawTripletRecord = std::variant<CounterFactRecord, ConflictQARecord>;

/// Exactly one of the two shapes must be populated.
RawTripletRecord raw_triplet_from_json(const Json& record);

struct RecastSample {
    ClaimRecord claim;
    EvidencePiece supporting;
    EvidencePiece refuting;
};

/// Subject + relation + object surface statement, e.g. "Geoffrey Hinton is employed by BBC.".
std::string counterfact_statement(const CounterFactRecord& record, const std::string& object);

RecastSample recast_counterfact(const CounterFactRecord& record);
RecastSample recast_conflictqa(const ConflictQARecord& record);
RecastSample recast(const RawTripletRecord& record);

/// Optional user filter; records it rejects are skipped and counted.
using RecastFilter = std::function<bool(const RawTripletRecord&)>;

struct RecastResult {
    std::vector<RecastSample> samples;
    std::size_t skipped = 0;
};

/// Reads JSON Lines (or a JSON array) of upstream records through `mapping`.
RecastResult recast_file(const std::filesystem::path& path, const FieldMapping& mapping,
                         const RecastFilter& filter = {});

// ---------------------------------------------------------------------------
// Stratified claim sampling

/// Whole-word, case-insensitive mention of a photo or video.
bool mentions_media(std::string_view text);

struct Shortage {
    std::string level;  // "source", "verdict" or "period"
    std::string key;
    std::size_t wanted = 0;
    std::size_t available = 0;
};

struct SampleReport {
    std::size_t requested = 0;
    std::size_t selected = 0;
    std::size_t excluded_media = 0;
    bool insufficient_claims = false;
    std::vector<Shortage> shortages;
};

struct SampleResult {
    std::vector<ClaimRecord> claims;
    SampleReport report;
};

/// Distributes `n` units over groups as evenly as their capacities allow;
/// leftover units go to the earliest groups.
std::vector<std::size_t> even_allocation(std::size_t n, const std::vector<std::size_t>& capacity);

/// Balances the subset by source first, then verdict, then before/after
/// `date_pivot`; a shortfall at a finer level is filled from its siblings.
SampleResult stratified_sample(const std::vector<ClaimRecord>& claims, std::size_t target_n,
                               Date date_pivot = Date{std::chrono::year{2023}, std::chrono::January,
                                                      std::chrono::day{1}},
                               std::uint64_t seed = 0);

Json to_json(const SampleReport& report);

}  // namespace ctxuse::ingest
