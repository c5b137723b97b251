#include "ctxuse/model.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include "ctxuse/hash.hpp"

namespace ctxuse {

namespace {

int parse_digits(std::string_view text, std::size_t pos, std::size_t len) {
    int value = 0;
    auto first = text.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, value);
    if (ec != std::errc{} || ptr != first + len) {
        throw InvariantViolation("date", "not an ISO-8601 calendar date: '" + std::string(text) + "'");
    }
    return value;
}

template <typename Enum, std::size_t N>
Enum lookup(std::string_view text, const std::array<std::pair<std::string_view, Enum>, N>& table,
            const char* field) {
    for (const auto& [name, value] : table) {
        if (name == text) return value;
    }
    throw InvariantViolation(field, "unknown value '" + std::string(text) + "'");
}

template <typename Enum, std::size_t N>
std::string_view name_of(Enum value, const std::array<std::pair<std::string_view, Enum>, N>& table) {
    for (const auto& [name, v] : table) {
        if (v == value) return name;
    }
    return "?";
}

constexpr std::array<std::pair<std::string_view, Label>, 3> kLabelNames{{
    {"False", Label::False}, {"None", Label::None}, {"True", Label::True}}};

constexpr std::array<std::pair<std::string_view, ClaimVerdict>, 3> kVerdictNames{{
    {"True", ClaimVerdict::True}, {"False", ClaimVerdict::False}, {"Half-true", ClaimVerdict::HalfTrue}}};

constexpr std::array<std::pair<std::string_view, Stance>, 6> kStanceNames{{
    {"supports", Stance::Supports},
    {"insufficient-supports", Stance::InsufficientSupports},
    {"insufficient-neutral", Stance::InsufficientNeutral},
    {"insufficient-contradictory", Stance::InsufficientContradictory},
    {"insufficient-refutes", Stance::InsufficientRefutes},
    {"refutes", Stance::Refutes},
}};

constexpr std::array<std::pair<std::string_view, Relevance>, 2> kRelevanceNames{{
    {"relevant", Relevance::Relevant}, {"not-relevant", Relevance::NotRelevant}}};

constexpr std::array<std::pair<std::string_view, Mode>, 2> kModeNames{{
    {"claim-only", Mode::ClaimOnly}, {"claim+evidence", Mode::ClaimEvidence}}};

constexpr std::array<std::pair<std::string_view, AcuForm>, 2> kAcuFormNames{{
    {"mean", AcuForm::Mean}, {"sum", AcuForm::Sum}}};

constexpr std::array<std::pair<std::string_view, Reliability>, 3> kReliabilityNames{{
    {"unreliable", Reliability::Unreliable}, {"reliable", Reliability::Reliable},
    {"unknown", Reliability::Unknown}}};

bool blank(std::string_view s) {
    for (char c : s) {
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

// Optional helpers for JSON. Absent values are always encoded as null.
template <typename T, typename F>
Json opt(const std::optional<T>& v, F&& f) {
    return v ? Json(f(*v)) : Json(nullptr);
}

const Json& field(const Json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end()) throw InvariantViolation(name, "missing field");
    return *it;
}

std::string str_field(const Json& j, const char* name) {
    const auto& v = field(j, name);
    if (!v.is_string()) throw InvariantViolation(name, "expected a string");
    return v.get<std::string>();
}

std::optional<std::string> opt_str(const Json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw InvariantViolation(name, "expected a string or null");
    return it->get<std::string>();
}

std::optional<bool> opt_bool(const Json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_boolean()) throw InvariantViolation(name, "expected a boolean or null");
    return it->get<bool>();
}

double num_field(const Json& j, const char* name) {
    const auto& v = field(j, name);
    if (!v.is_number()) throw InvariantViolation(name, "expected a number");
    return v.get<double>();
}

std::optional<double> opt_num(const Json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw InvariantViolation(name, "expected a number or null");
    return it->get<double>();
}

std::optional<Date> opt_date(const Json& j, const char* name) {
    auto s = opt_str(j, name);
    if (!s) return std::nullopt;
    return parse_date(*s);
}

Json triple_json(const Eigen::Vector3d& v) {
    Json j;
    j["True"] = v(static_cast<int>(Label::True));
    j["None"] = v(static_cast<int>(Label::None));
    j["False"] = v(static_cast<int>(Label::False));
    return j;
}

Eigen::Vector3d triple_from_json(const Json& j) {
    Eigen::Vector3d v;
    for (Label l : kLabels) v(static_cast<int>(l)) = num_field(j, std::string(to_string(l)).c_str());
    return v;
}

}  // namespace

Date parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw InvariantViolation("date", "not an ISO-8601 calendar date: '" + std::string(text) + "'");
    }
    Date d{std::chrono::year{parse_digits(text, 0, 4)},
           std::chrono::month{static_cast<unsigned>(parse_digits(text, 5, 2))},
           std::chrono::day{static_cast<unsigned>(parse_digits(text, 8, 2))}};
    if (!d.ok()) throw InvariantViolation("date", "no such calendar day: '" + std::string(text) + "'");
    return d;
}

std::string format_date(const Date& date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

std::string_view to_string(Label label) { return name_of(label, kLabelNames); }
Label parse_label(std::string_view text) { return lookup(text, kLabelNames, "label"); }

std::string_view to_string(ClaimVerdict verdict) { return name_of(verdict, kVerdictNames); }
ClaimVerdict parse_claim_verdict(std::string_view text) { return lookup(text, kVerdictNames, "verdict"); }

std::string_view to_string(Stance stance) { return name_of(stance, kStanceNames); }
Stance parse_stance(std::string_view text) { return lookup(text, kStanceNames, "stance"); }

std::string_view to_string(Relevance relevance) { return name_of(relevance, kRelevanceNames); }
Relevance parse_relevance(std::string_view text) { return lookup(text, kRelevanceNames, "relevance"); }

std::string_view to_string(Mode mode) { return name_of(mode, kModeNames); }
Mode parse_mode(std::string_view text) { return lookup(text, kModeNames, "mode"); }

std::string_view to_string(AcuForm form) { return name_of(form, kAcuFormNames); }
AcuForm parse_acu_form(std::string_view text) { return lookup(text, kAcuFormNames, "acu_form"); }

std::string_view to_string(Reliability r) { return name_of(r, kReliabilityNames); }
Reliability parse_reliability(std::string_view text) { return lookup(text, kReliabilityNames, "unreliable"); }

SourceRegistry SourceRegistry::defaults() {
    return SourceRegistry({"checkyourfact", "science.feedback", "factcheckni", "factly", "politifact",
                           "srilanka.factcrescendo", "borderlines", "counterfact", "conflictqa"});
}

// ---------------------------------------------------------------------------

VerdictProbabilities VerdictProbabilities::from_normalized(const Eigen::Vector3d& probs, Mode mode) {
    for (int i = 0; i < 3; ++i) {
        if (!(probs(i) >= 0.0 && probs(i) <= 1.0)) {
            throw InvariantViolation("probs", "entry outside [0,1]");
        }
    }
    if (std::abs(probs.sum() - 1.0) > kSumTolerance) {
        throw InvariantViolation("probs", "entries do not sum to 1");
    }
    return VerdictProbabilities(probs, mode);
}

VerdictProbabilities VerdictProbabilities::renormalize(const Eigen::Vector3d& masses, Mode mode) {
    if ((masses.array() < 0.0).any() || !masses.allFinite()) {
        throw InvariantViolation("probs", "label mass must be finite and non-negative");
    }
    const double total = masses.sum();
    if (total <= 0.0) throw ZeroMass("all verdict labels have zero probability");
    return VerdictProbabilities(masses / total, mode);
}

Label VerdictProbabilities::argmax() const {
    Label best = Label::None;
    for (Label l : {Label::False, Label::True}) {
        if ((*this)[l] > (*this)[best]) best = l;
    }
    return best;
}

// ---------------------------------------------------------------------------

std::size_t count_words(std::string_view text) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : text) {
        const bool space = std::isspace(static_cast<unsigned char>(c));
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

std::string fallback_id(std::string_view text, std::string_view url) {
    std::string key(text);
    key += '\x1f';
    key += url;
    return sha256_hex(key).substr(0, 16);
}

void validate(const ClaimRecord& claim, const SourceRegistry& sources) {
    if (claim.id.empty()) throw InvariantViolation("id", "claim id is empty");
    if (blank(claim.text)) throw InvariantViolation("text", "claim text is empty");
    if (!sources.contains(claim.source)) {
        throw InvariantViolation("source", "unknown source '" + claim.source + "'");
    }
    if (!claim.verdict && !claim.raw_verdict.empty()) {
        throw InvariantViolation("verdict", "unmapped raw verdict '" + claim.raw_verdict + "'");
    }
}

void validate(const EvidencePiece& ev, std::size_t max_words) {
    if (ev.id.empty()) throw InvariantViolation("id", "evidence id is empty");
    if (ev.claim_id.empty()) throw InvariantViolation("claim_id", "evidence has no claim reference");
    if (blank(ev.text)) throw InvariantViolation("text", "evidence text is empty");
    if (max_words > 0 && count_words(ev.text) > max_words) {
        throw InvariantViolation("text", "evidence exceeds " + std::to_string(max_words) + " words");
    }
    if (ev.stance && ev.relevance != Relevance::Relevant) {
        throw InvariantViolation("stance", "stance given for evidence that is not relevant");
    }
    for (const auto& a : ev.annotator_labels) {
        if (a.stance && a.relevance != Relevance::Relevant) {
            throw InvariantViolation("annotator_labels", "stance given for a not-relevant annotation");
        }
    }
}

std::optional<bool> published_after(const std::optional<Date>& pub_date,
                                    const std::optional<Date>& claim_date) {
    if (!pub_date || !claim_date) return std::nullopt;
    return std::chrono::sys_days(*pub_date) > std::chrono::sys_days(*claim_date);
}

std::pair<ClaimRecord, EvidencePiece> validate_sample(const ClaimRecord& claim,
                                                      const EvidencePiece& evidence,
                                                      const SourceRegistry& sources) {
    validate(claim, sources);
    validate(evidence);
    if (evidence.claim_id != claim.id) {
        throw DanglingReference("evidence " + evidence.id + " references unknown claim '" +
                                evidence.claim_id + "'");
    }
    if (evidence.pub_after_claim) {
        auto expected = published_after(evidence.pub_date, claim.claim_date);
        if (expected && *expected != *evidence.pub_after_claim) {
            throw InvariantViolation("pub_after_claim", "disagrees with pub_date and claim_date");
        }
    }
    return {claim, evidence};
}

// ---------------------------------------------------------------------------

Json to_json(const ClaimRecord& c) {
    Json j;
    j["id"] = c.id;
    j["text"] = c.text;
    j["claimant"] = opt(c.claimant, [](const std::string& s) { return s; });
    j["source"] = c.source;
    j["claim_date"] = opt(c.claim_date, format_date);
    j["verdict"] = opt(c.verdict, [](ClaimVerdict v) { return std::string(to_string(v)); });
    j["raw_verdict"] = c.raw_verdict;
    return j;
}

Json to_json(const EvidencePiece& e) {
    auto rel = [](Relevance r) { return std::string(to_string(r)); };
    auto st = [](Stance s) { return std::string(to_string(s)); };
    Json j;
    j["id"] = e.id;
    j["claim_id"] = e.claim_id;
    j["text"] = e.text;
    j["url"] = e.url;
    j["pub_date"] = opt(e.pub_date, format_date);
    j["is_fact_check_source"] = e.is_fact_check_source;
    j["is_gold_source"] = e.is_gold_source;
    j["pub_after_claim"] = opt(e.pub_after_claim, [](bool b) { return b; });
    j["relevance"] = opt(e.relevance, rel);
    j["stance"] = opt(e.stance, st);
    j["annotator_labels"] = Json::array();
    for (const auto& a : e.annotator_labels) {
        Json l;
        l["relevance"] = opt(a.relevance, rel);
        l["stance"] = opt(a.stance, st);
        j["annotator_labels"].push_back(std::move(l));
    }
    return j;
}

Json to_json(const VerdictProbabilities& p) {
    Json j;
    j["p_true"] = p[Label::True];
    j["p_none"] = p[Label::None];
    j["p_false"] = p[Label::False];
    j["mode"] = std::string(to_string(p.mode()));
    return j;
}

Json to_json(const ScoredSample& s) {
    Json j;
    j["claim_id"] = s.claim_id;
    j["evidence_id"] = s.evidence_id;
    j["stance"] = opt(s.stance, [](Stance st) { return std::string(to_string(st)); });
    j["probs_without"] = to_json(s.probs_without);
    j["probs_with"] = to_json(s.probs_with);
    j["delta_p"] = triple_json(s.delta_p);
    j["acu"] = s.acu;
    j["acu_form"] = std::string(to_string(s.acu_form));
    j["degenerate"] = s.degenerate;
    j["model_id"] = s.model_id;
    j["prompt_id"] = s.prompt_id;
    return j;
}

Json to_json(const CharacteristicVector& cv) {
    Json j;
    j["claim_id"] = cv.claim_id;
    j["evidence_id"] = cv.evidence_id;
    j["jaccard"] = cv.jaccard;
    j["claim_evidence_overlap"] = cv.claim_evidence_overlap;
    j["repeats_claim"] = cv.repeats_claim;
    j["flesch"] = opt(cv.flesch, [](double d) { return d; });
    j["claim_len_chars"] = cv.claim_len_chars;
    j["evidence_len_chars"] = cv.evidence_len_chars;
    j["perplexity"] = opt(cv.perplexity, [](double d) { return d; });
    j["entity_overlap"] = cv.entity_overlap;
    j["no_entity"] = cv.no_entity;
    j["refers_external"] = opt(cv.refers_external, [](bool b) { return b; });
    j["hedging"] = cv.hedging;
    j["hedging_discourse"] = cv.hedging_discourse;
    j["unreliable"] = std::string(to_string(cv.unreliable));
    j["contains_true_word"] = cv.contains_true_word;
    j["contains_false_word"] = cv.contains_false_word;
    j["pub_after_claim"] = opt(cv.pub_after_claim, [](bool b) { return b; });
    j["fact_check_source"] = cv.fact_check_source;
    j["gold_source"] = cv.gold_source;
    return j;
}

ClaimRecord claim_from_json(const Json& j) {
    if (!j.is_object()) throw InvariantViolation("claim", "expected a JSON object");
    ClaimRecord c;
    c.id = str_field(j, "id");
    c.text = str_field(j, "text");
    c.claimant = opt_str(j, "claimant");
    c.source = str_field(j, "source");
    c.claim_date = opt_date(j, "claim_date");
    if (auto v = opt_str(j, "verdict")) c.verdict = parse_claim_verdict(*v);
    c.raw_verdict = opt_str(j, "raw_verdict").value_or("");
    return c;
}

EvidencePiece evidence_from_json(const Json& j) {
    if (!j.is_object()) throw InvariantViolation("evidence", "expected a JSON object");
    EvidencePiece e;
    e.id = str_field(j, "id");
    e.claim_id = str_field(j, "claim_id");
    e.text = str_field(j, "text");
    e.url = opt_str(j, "url").value_or("");
    e.pub_date = opt_date(j, "pub_date");
    e.is_fact_check_source = opt_bool(j, "is_fact_check_source").value_or(false);
    e.is_gold_source = opt_bool(j, "is_gold_source").value_or(false);
    e.pub_after_claim = opt_bool(j, "pub_after_claim");
    if (auto r = opt_str(j, "relevance")) e.relevance = parse_relevance(*r);
    if (auto s = opt_str(j, "stance")) e.stance = parse_stance(*s);
    if (auto it = j.find("annotator_labels"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) throw InvariantViolation("annotator_labels", "expected an array");
        for (const auto& l : *it) {
            AnnotatorLabel a;
            if (auto r = opt_str(l, "relevance")) a.relevance = parse_relevance(*r);
            if (auto s = opt_str(l, "stance")) a.stance = parse_stance(*s);
            e.annotator_labels.push_back(a);
        }
    }
    return e;
}

VerdictProbabilities probabilities_from_json(const Json& j) {
    Eigen::Vector3d v;
    v(static_cast<int>(Label::True)) = num_field(j, "p_true");
    v(static_cast<int>(Label::None)) = num_field(j, "p_none");
    v(static_cast<int>(Label::False)) = num_field(j, "p_false");
    return VerdictProbabilities::from_normalized(v, parse_mode(str_field(j, "mode")));
}

ScoredSample scored_from_json(const Json& j) {
    ScoredSample s{
        .claim_id = str_field(j, "claim_id"),
        .evidence_id = str_field(j, "evidence_id"),
        .stance = std::nullopt,
        .probs_without = probabilities_from_json(field(j, "probs_without")),
        .probs_with = probabilities_from_json(field(j, "probs_with")),
        .delta_p = triple_from_json(field(j, "delta_p")),
        .acu = num_field(j, "acu"),
        .acu_form = parse_acu_form(str_field(j, "acu_form")),
        .degenerate = opt_bool(j, "degenerate").value_or(false),
        .model_id = str_field(j, "model_id"),
        .prompt_id = str_field(j, "prompt_id"),
    };
    if (auto st = opt_str(j, "stance")) s.stance = parse_stance(*st);
    if ((s.delta_p.array().abs() > 1.0).any()) throw InvariantViolation("delta_p", "entry outside [-1,1]");
    const double bound = s.acu_form == AcuForm::Mean ? 1.0 : 3.0;
    if (std::abs(s.acu) > bound) throw InvariantViolation("acu", "outside the range of its form");
    return s;
}

CharacteristicVector characteristics_from_json(const Json& j) {
    CharacteristicVector cv;
    cv.claim_id = str_field(j, "claim_id");
    cv.evidence_id = str_field(j, "evidence_id");
    cv.jaccard = num_field(j, "jaccard");
    cv.claim_evidence_overlap = num_field(j, "claim_evidence_overlap");
    cv.repeats_claim = opt_bool(j, "repeats_claim").value_or(false);
    cv.flesch = opt_num(j, "flesch");
    cv.claim_len_chars = static_cast<std::size_t>(num_field(j, "claim_len_chars"));
    cv.evidence_len_chars = static_cast<std::size_t>(num_field(j, "evidence_len_chars"));
    cv.perplexity = opt_num(j, "perplexity");
    cv.entity_overlap = num_field(j, "entity_overlap");
    cv.no_entity = opt_bool(j, "no_entity").value_or(false);
    cv.refers_external = opt_bool(j, "refers_external");
    cv.hedging = opt_bool(j, "hedging").value_or(false);
    cv.hedging_discourse = opt_bool(j, "hedging_discourse").value_or(false);
    cv.unreliable = parse_reliability(opt_str(j, "unreliable").value_or("unknown"));
    cv.contains_true_word = opt_bool(j, "contains_true_word").value_or(false);
    cv.contains_false_word = opt_bool(j, "contains_false_word").value_or(false);
    cv.pub_after_claim = opt_bool(j, "pub_after_claim");
    cv.fact_check_source = opt_bool(j, "fact_check_source").value_or(false);
    cv.gold_source = opt_bool(j, "gold_source").value_or(false);
    return cv;
}

std::string encode_line(const Json& j) {
    return j.dump(-1, ' ', false, nlohmann::detail::error_handler_t::strict);
}

}  // namespace ctxuse
