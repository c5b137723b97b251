#include "ctxuse/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "ctxuse/metrics.hpp"
#include "ctxuse/text.hpp"

namespace ctxuse::ingest {

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    return in;
}

Json read_json_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ParseError(1, path.string() + ": " + e.what());
    }
}

// Header lines carry run metadata and are not records.
bool is_header(const Json& j) { return j.is_object() && j.size() == 1 && j.contains("header"); }

template <typename F>
void for_each_jsonl(std::istream& in, F&& on_record) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::normalize_whitespace(line).empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw ParseError(line_no, e.what());
        }
        if (is_header(j)) continue;
        if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");
        try {
            on_record(j);
        } catch (const InvariantViolation& e) {
            throw InvariantViolation(e.field(), "line " + std::to_string(line_no) + ": " + e.what());
        } catch (const DanglingReference& e) {
            throw DanglingReference("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

const Json* resolve_path(const Json& root, std::string_view path) {
    const Json* node = &root;
    std::size_t pos = 0;
    while (pos <= path.size()) {
        const auto dot = path.find('.', pos);
        const auto key = std::string(path.substr(pos, dot == std::string_view::npos ? std::string_view::npos
                                                                                     : dot - pos));
        if (node->is_object()) {
            auto it = node->find(key);
            if (it == node->end()) return nullptr;
            node = &*it;
        } else if (node->is_array() && !key.empty() &&
                   std::all_of(key.begin(), key.end(), [](char c) { return std::isdigit(c); })) {
            const auto idx = std::stoul(key);
            if (idx >= node->size()) return nullptr;
            node = &(*node)[idx];
        } else {
            return nullptr;
        }
        if (dot == std::string_view::npos) break;
        pos = dot + 1;
    }
    return node;
}

std::string trimmed(const Json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) return {};
    if (it->is_string()) return text::normalize_whitespace(it->get<std::string>());
    if (it->is_number_integer()) return std::to_string(it->get<long long>());
    throw MalformedTriplet(std::string(name) + ": expected a string");
}

EvidencePiece recast_evidence(const std::string& claim_id, const std::string& text, Stance stance) {
    EvidencePiece e;
    e.claim_id = claim_id;
    e.text = text;
    e.id = fallback_id(text, claim_id + "#" + std::string(to_string(stance)));
    e.relevance = Relevance::Relevant;
    e.stance = stance;
    return e;
}

}  // namespace

// ---------------------------------------------------------------------------

VerdictMappingTable VerdictMappingTable::defaults() {
    VerdictMappingTable t;
    for (const char* raw : {"True", "TRUE", "ACCURATE", "ACCURATE WITH CONSIDERATION", "Correct",
                            "Mostly accurate", "Accurate"}) {
        t.mapping.emplace(raw, ClaimVerdict::True);
    }
    for (const char* raw : {"Half True", "PARTLY TRUE", "Correct But...", "Mostly_Accurate",
                            "Partially correct"}) {
        t.mapping.emplace(raw, ClaimVerdict::HalfTrue);
    }
    for (const char* raw : {"False", "FALSE", "MISLEADING", "Misleading", "Inaccurate",
                            "Incorrect", "Flawed_Reasoning", "Incorrect, Flawed_Reasoning", "INACCURATE", "INACCURATE WITH CONSIDERATION"}) {
        t.mapping.emplace(raw, ClaimVerdict::False);
    }
    return t;
}

VerdictMappingTable VerdictMappingTable::load(const std::filesystem::path& path) {
    const Json j = read_json_file(path);
    if (!j.is_object()) throw ConfigError(path.string() + ": verdict mapping must be a JSON object");
    VerdictMappingTable t;
    for (const auto& [raw, mapped] : j.items()) {
        if (!mapped.is_string()) throw ConfigError("verdict mapping for '" + raw + "' must be a string");
        t.mapping.emplace(raw, parse_claim_verdict(mapped.get<std::string>()));
    }
    return t;
}

std::optional<ClaimVerdict> map_verdict(std::string_view raw_label, const VerdictMappingTable& table) {
    auto it = table.mapping.find(raw_label);
    if (it == table.mapping.end()) return std::nullopt;
    return it->second;
}

FieldMapping FieldMapping::load(const std::filesystem::path& path) {
    const Json j = read_json_file(path);
    FieldMapping m;
    for (const auto& [k, v] : j.items()) m.paths.emplace(k, v.get<std::string>());
    return m;
}

Json FieldMapping::apply(const Json& record) const {
    if (paths.empty()) return record;
    Json out = record;
    for (const auto& [canonical, path] : paths) {
        if (const Json* v = resolve_path(record, path)) {
            out[canonical] = *v;
        } else {
            out.erase(canonical);
        }
    }
    return out;
}

MappingConfig MappingConfig::load(const std::filesystem::path& path) {
    const Json j = read_json_file(path);
    MappingConfig cfg;
    auto section = [&](const char* name, FieldMapping& into) {
        if (auto it = j.find(name); it != j.end()) {
            for (const auto& [k, v] : it->items()) into.paths.emplace(k, v.get<std::string>());
        }
    };
    section("claims", cfg.claims);
    section("evidence", cfg.evidence);
    section("counterfact", cfg.counterfact);
    section("conflictqa", cfg.conflictqa);
    return cfg;
}

// ---------------------------------------------------------------------------

const ClaimRecord* Corpus::find_claim(std::string_view id) const {
    if (index_.size() != claims.size()) {
        index_.clear();
        for (std::size_t i = 0; i < claims.size(); ++i) index_.emplace(claims[i].id, i);
    }
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &claims[it->second];
}

std::vector<std::pair<const ClaimRecord*, std::vector<const EvidencePiece*>>> Corpus::grouped() const {
    std::vector<std::pair<const ClaimRecord*, std::vector<const EvidencePiece*>>> out;
    std::map<std::string, std::size_t, std::less<>> slot;
    for (const auto& c : claims) {
        slot.emplace(c.id, out.size());
        out.push_back({&c, {}});
    }
    for (const auto& e : evidence) {
        if (auto it = slot.find(e.claim_id); it != slot.end()) out[it->second].second.push_back(&e);
    }
    return out;
}

Corpus load_druid(const std::filesystem::path& claims_path, const std::filesystem::path& evidence_path,
                  const LoadOptions& options) {
    auto claims = open_input(claims_path);
    auto evidence = open_input(evidence_path);
    return load_druid(claims, evidence, options);
}

Corpus load_druid(std::istream& claims_in, std::istream& evidence_in, const LoadOptions& options) {
    Corpus corpus;
    std::set<std::string, std::less<>> dropped;
    std::map<std::string, std::size_t, std::less<>> index;

    for_each_jsonl(claims_in, [&](const Json& raw) {
        Json j = options.fields.claims.apply(raw);
        const bool has_verdict = j.contains("verdict") && !j["verdict"].is_null();
        if (!has_verdict && j.contains("raw_verdict") && j["raw_verdict"].is_string()) {
            const auto mapped = map_verdict(j["raw_verdict"].get<std::string>(), options.verdicts);
            if (!mapped) {
                if (j.contains("id") && j["id"].is_string()) dropped.insert(j["id"].get<std::string>());
                ++corpus.dropped_claims;
                return;
            }
            j["verdict"] = std::string(to_string(*mapped));
        }
        ClaimRecord claim = claim_from_json(j);
        validate(claim, options.sources);
        if (!index.emplace(claim.id, corpus.claims.size()).second) {
            throw InvariantViolation("id", "duplicate claim id '" + claim.id + "'");
        }
        corpus.claims.push_back(std::move(claim));
    });

    std::set<std::string, std::less<>> evidence_ids;
    for_each_jsonl(evidence_in, [&](const Json& raw) {
        EvidencePiece ev = evidence_from_json(options.fields.evidence.apply(raw));
        if (dropped.count(ev.claim_id)) {
            ++corpus.dropped_evidence;
            return;
        }
        auto it = index.find(ev.claim_id);
        if (it == index.end()) {
            throw DanglingReference("evidence " + ev.id + " references unknown claim '" + ev.claim_id + "'");
        }
        validate_sample(corpus.claims[it->second], ev, options.sources);
        if (!evidence_ids.insert(ev.id).second) {
            throw InvariantViolation("id", "duplicate evidence id '" + ev.id + "'");
        }
        corpus.evidence.push_back(std::move(ev));
    });
    return corpus;
}

std::size_t CorpusStats::insufficient() const {
    std::size_t n = 0;
    for (const auto& [stance, count] : stances) {
        if (stance != Stance::Supports && stance != Stance::Refutes) n += count;
    }
    return n;
}

CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats s;
    s.claims = corpus.claims.size();
    s.samples = corpus.evidence.size();
    for (const auto& [claim, evidences] : corpus.grouped()) {
        auto& row = s.per_source[claim->source];
        ++row.claims;
        row.samples += evidences.size();
        if (metrics::inter_context_conflict(std::span<const EvidencePiece* const>(evidences))) {
            ++s.inter_context_conflicts;
        }
    }
    for (const auto& e : corpus.evidence) {
        if (e.stance) ++s.stances[*e.stance];
        if (e.relevance == Relevance::Relevant) ++s.relevant;
        if (e.relevance == Relevance::NotRelevant) ++s.not_relevant;
    }
    return s;
}

Json to_json(const CorpusStats& s) {
    Json j;
    j["claims"] = s.claims;
    j["samples"] = s.samples;
    Json per = Json::object();
    for (const auto& [source, row] : s.per_source) {
        per[source] = Json{{"claims", row.claims}, {"samples", row.samples}};
    }
    j["per_source"] = per;
    Json stances = Json::object();
    for (Stance st : kStances) {
        auto it = s.stances.find(st);
        stances[std::string(to_string(st))] = it == s.stances.end() ? 0 : it->second;
    }
    j["stances"] = stances;
    j["insufficient"] = s.insufficient();
    j["relevant"] = s.relevant;
    j["not_relevant"] = s.not_relevant;
    j["inter_context_conflicts"] = s.inter_context_conflicts;
    return j;
}

// ---------------------------------------------------------------------------

RawTripletRecord raw_triplet_from_json(const Json& record) {
    if (!record.is_object()) throw MalformedTriplet("expected a JSON object");
    auto has = [&](const char* k) { return record.contains(k) && !record[k].is_null(); };
    const bool cf = has("subject") || has("relation") || has("object_true") || has("object_edited");
    const bool cq = has("memory_answer") || has("parametric_evidence") || has("counter_evidence");
    if (cf == cq) throw MalformedTriplet("record must populate exactly one of the two triplet shapes");
    if (cf) {
        return CounterFactRecord{trimmed(record, "id"), trimmed(record, "subject"), trimmed(record, "relation"),
                                 trimmed(record, "object_true"), trimmed(record, "object_edited")};
    }
    return ConflictQARecord{trimmed(record, "id"), trimmed(record, "memory_answer"),
                            trimmed(record, "parametric_evidence"), trimmed(record, "counter_evidence")};
}

std::string counterfact_statement(const CounterFactRecord& r, const std::string& object) {
    std::string statement;
    if (auto slot = r.relation.find("{}"); slot != std::string::npos) {
        statement = r.relation.substr(0, slot) + r.subject + r.relation.substr(slot + 2);
    } else {
        statement = r.subject + " " + r.relation;
    }
    statement = text::normalize_whitespace(statement + " " + object);
    if (statement.back() != '.' && statement.back() != '!' && statement.back() != '?') statement += '.';
    return statement;
}

RecastSample recast_counterfact(const CounterFactRecord& r) {
    for (const auto* f : {&r.subject, &r.relation, &r.object_true, &r.object_edited}) {
        if (text::normalize_whitespace(*f).empty()) throw MalformedTriplet("CounterFact record has empty fields");
    }
    if (text::normalize_whitespace(r.object_true) == text::normalize_whitespace(r.object_edited)) {
        throw MalformedTriplet("edited object equals the true object; no conflict to construct");
    }
    const auto claim_text = counterfact_statement(r, text::normalize_whitespace(r.object_edited));
    const auto true_text = counterfact_statement(r, text::normalize_whitespace(r.object_true));

    RecastSample s;
    s.claim.text = claim_text;
    s.claim.id = r.id.empty() ? fallback_id(claim_text, "counterfact") : r.id;
    s.claim.source = "counterfact";
    s.claim.verdict = ClaimVerdict::False;
    s.claim.raw_verdict = "False";
    s.supporting = recast_evidence(s.claim.id, claim_text, Stance::Supports);
    s.refuting = recast_evidence(s.claim.id, true_text, Stance::Refutes);
    return s;
}

RecastSample recast_conflictqa(const ConflictQARecord& r) {
    for (const auto* f : {&r.memory_answer, &r.parametric_evidence, &r.counter_evidence}) {
        if (f->empty()) throw MalformedTriplet("ConflictQA record has empty fields");
    }
    RecastSample s;
    s.claim.text = r.memory_answer;
    s.claim.id = r.id.empty() ? fallback_id(r.memory_answer, "conflictqa") : r.id;
    s.claim.source = "conflictqa";
    s.supporting = recast_evidence(s.claim.id, r.parametric_evidence, Stance::Supports);
    s.refuting = recast_evidence(s.claim.id, r.counter_evidence, Stance::Refutes);
    return s;
}

RecastSample recast(const RawTripletRecord& record) {
    return std::visit(
        [](const auto& r) -> RecastSample {
            if constexpr (std::is_same_v<std::decay_t<decltype(r)>, CounterFactRecord>) {
                return recast_counterfact(r);
            } else {
                return recast_conflictqa(r);
            }
        },
        record);
}

RecastResult recast_file(const std::filesystem::path& path, const FieldMapping& mapping,
                         const RecastFilter& filter) {
    RecastResult result;
    auto handle = [&](const Json& raw) {
        const auto record = raw_triplet_from_json(mapping.apply(raw));
        if (filter && !filter(record)) {
            ++result.skipped;
            return;
        }
        result.samples.push_back(recast(record));
    };
    auto in = open_input(path);
    const int first = in.peek();
    if (first == '[') {
        Json all;
        try {
            all = Json::parse(in);
        } catch (const Json::parse_error& e) {
            throw ParseError(1, e.what());
        }
        for (const auto& r : all) handle(r);
    } else {
        for_each_jsonl(in, handle);
    }
    return result;
}

// ---------------------------------------------------------------------------

bool mentions_media(std::string_view claim_text) {
    static const std::set<std::string> kMedia{"photo", "photos", "video", "videos"};
    for (const auto& w : text::word_tokens(claim_text)) {
        if (kMedia.count(w)) return true;
    }
    return false;
}

std::vector<std::size_t> even_allocation(std::size_t n, const std::vector<std::size_t>& capacity) {
    std::vector<std::size_t> alloc(capacity.size(), 0);
    std::size_t total = 0;
    for (auto c : capacity) total += c;
    std::size_t remaining = std::min(n, total);
    while (remaining > 0) {
        std::vector<std::size_t> open;
        for (std::size_t i = 0; i < capacity.size(); ++i) {
            if (alloc[i] < capacity[i]) open.push_back(i);
        }
        const std::size_t share = remaining / open.size();
        if (share == 0) {
            for (std::size_t k = 0; k < remaining; ++k) ++alloc[open[k]];
            break;
        }
        for (auto i : open) {
            const auto give = std::min(share, capacity[i] - alloc[i]);
            alloc[i] += give;
            remaining -= give;
        }
    }
    return alloc;
}

namespace {

std::string period_key(const ClaimRecord& c, const Date& pivot) {
    if (!c.claim_date) return "unknown";
    return std::chrono::sys_days(*c.claim_date) < std::chrono::sys_days(pivot) ? "before" : "after";
}

std::string verdict_key(const ClaimRecord& c) {
    return c.verdict ? std::string(to_string(*c.verdict)) : "unknown";
}

// Splits `wanted` units across the keyed groups and records any group whose
// even share exceeded what it could offer.
std::map<std::string, std::size_t> split_level(const std::map<std::string, std::vector<std::size_t>>& groups,
                                               std::size_t wanted, const std::string& level,
                                               const std::string& prefix, SampleReport& report) {
    std::vector<std::size_t> caps, unlimited;
    for (const auto& [key, members] : groups) {
        caps.push_back(members.size());
        unlimited.push_back(wanted);
    }
    const auto alloc = even_allocation(wanted, caps);
    const auto ideal = even_allocation(wanted, unlimited);
    std::map<std::string, std::size_t> out;
    std::size_t i = 0;
    for (const auto& [key, members] : groups) {
        out[key] = alloc[i];
        if (members.size() < ideal[i]) {
            report.shortages.push_back({level, prefix + key, ideal[i], members.size()});
        }
        ++i;
    }
    return out;
}

}  // namespace

SampleResult stratified_sample(const std::vector<ClaimRecord>& claims, std::size_t target_n, Date date_pivot,
                               std::uint64_t seed) {
    SampleResult result;
    result.report.requested = target_n;

    // source -> verdict -> period -> claim indices
    std::map<std::string, std::map<std::string, std::map<std::string, std::vector<std::size_t>>>> tree;
    std::size_t eligible = 0;
    for (std::size_t i = 0; i < claims.size(); ++i) {
        if (mentions_media(claims[i].text)) {
            ++result.report.excluded_media;
            continue;
        }
        tree[claims[i].source][verdict_key(claims[i])][period_key(claims[i], date_pivot)].push_back(i);
        ++eligible;
    }
    result.report.insufficient_claims = target_n > eligible;

    auto flatten = [](const auto& subtree) {
        std::vector<std::size_t> all;
        for (const auto& [k, v] : subtree) {
            if constexpr (std::is_same_v<std::decay_t<decltype(v)>, std::vector<std::size_t>>) {
                all.insert(all.end(), v.begin(), v.end());
            } else {
                for (const auto& [k2, v2] : v) all.insert(all.end(), v2.begin(), v2.end());
            }
        }
        return all;
    };

    std::map<std::string, std::vector<std::size_t>> by_source;
    for (const auto& [source, verdicts] : tree) by_source[source] = flatten(verdicts);
    const auto source_quota = split_level(by_source, target_n, "source", "", result.report);

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen;
    for (const auto& [source, verdicts] : tree) {
        std::map<std::string, std::vector<std::size_t>> by_verdict;
        for (const auto& [verdict, periods] : verdicts) by_verdict[verdict] = flatten(periods);
        const auto verdict_quota =
            split_level(by_verdict, source_quota.at(source), "verdict", source + "/", result.report);
        for (const auto& [verdict, periods] : verdicts) {
            const auto period_quota = split_level(periods, verdict_quota.at(verdict), "period",
                                                  source + "/" + verdict + "/", result.report);
            for (const auto& [period, members] : periods) {
                auto pool = members;
                // Fisher-Yates on raw engine output keeps draws identical across
                // standard library implementations.
                for (std::size_t k = pool.size(); k > 1; --k) {
                    std::swap(pool[k - 1], pool[rng() % k]);
                }
                pool.resize(period_quota.at(period));
                chosen.insert(chosen.end(), pool.begin(), pool.end());
            }
        }
    }
    std::sort(chosen.begin(), chosen.end());
    for (auto i : chosen) result.claims.push_back(claims[i]);
    result.report.selected = result.claims.size();
    return result;
}

Json to_json(const SampleReport& r) {
    Json j;
    j["requested"] = r.requested;
    j["selected"] = r.selected;
    j["excluded_media"] = r.excluded_media;
    j["insufficient_claims"] = r.insufficient_claims;
    j["shortages"] = Json::array();
    for (const auto& s : r.shortages) {
        j["shortages"].push_back(
            Json{{"level", s.level}, {"key", s.key}, {"wanted", s.wanted}, {"available", s.available}});
    }
    return j;
}

}  // namespace ctxuse::ingest
