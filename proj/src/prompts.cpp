#include <fstream>
#include <sstream>

#include "ctxuse/lm.hpp"

namespace ctxuse::lm {

namespace {

constexpr const char* kDebtClaim =
    "Claim: \"“One quarter” of today’s $31.4 trillion federal debt “was accumulated in the "
    "four years of my predecessor,” Donald Trump.\"";
constexpr const char* kCovidClaim =
    "Claim: \"the new coronavirus has HIV proteins that indicate it was genetically modified in a laboratory.\"";
constexpr const char* kBlackpinkClaim = "Claim: \"Blackpink released the single 'You me too' in 2026.\"";

constexpr const char* kDebtEvidence =
    "Evidence: \"Biden’s number is accurate; about one-fourth of the total debt incurred to date came on "
    "Trump’s watch. However, assigning debt to a particular president is tricky, because so much of the "
    "spending was approved by decades-old, bipartisan legislation that set the parameters for Social Security "
    "and Medicare. A different calculation shows more debt stemming from former President Barack Obama, with "
    "whom Biden served as vice president.\"";
constexpr const char* kCovidEvidence =
    "Evidence: \"Microbiologists say the spike proteins found in the new coronavirus are different from the "
    "ones found in HIV. [...] There is no evidence to suggest the coronavirus was genetically modified.\"";
constexpr const char* kBlackpinkEvidence = "Evidence: \"Blackpink released their album 'Born Pink' in 2022.\"";

std::string block(std::initializer_list<std::string> lines) {
    std::string out;
    for (const auto& l : lines) {
        if (!out.empty()) out += '\n';
        out += l;
    }
    return out;
}

std::string join_blocks(std::initializer_list<std::string> blocks) {
    std::string out;
    for (const auto& b : blocks) {
        if (!out.empty()) out += "\n\n";
        out += b;
    }
    return out;
}

const std::string kClaimQuery = block({"Claimant: <claimant>", "Claim: \"<claim>\"", "Answer:"});
const std::string kEvidenceQuery =
    block({"Claimant: <claimant>", "Claim: \"<claim>\"", "Evidence: \"<evidence>\"", "Answer:"});

std::map<std::string, Label> verbalizer(const char* t, const char* f) {
    return {{t, Label::True}, {f, Label::False}, {"None", Label::None}};
}

PromptTemplate make(std::string id, Mode mode, int shots, std::string body, std::map<std::string, Label> verb) {
    PromptTemplate t;
    t.id = std::move(id);
    t.mode = mode;
    t.shots = shots;
    t.body = std::move(body);
    t.verbalizer_map = std::move(verb);
    return t;
}

std::map<std::string, PromptTemplate> build_builtins() {
    std::map<std::string, PromptTemplate> out;
    auto add = [&](PromptTemplate t) {
        t.validate();
        out.emplace(t.id, std::move(t));
    };

    const std::string claim_header =
        "Are the following claims True or False? Answer None if you are not sure or cannot answer.";
    add(make("llama-claim-3shot", Mode::ClaimOnly, 3,
             join_blocks({claim_header,
                          block({"Claimant: Joe Biden", kDebtClaim, "Answer: True"}),
                          block({"Claimant: Viral post", kCovidClaim, "Answer: False"}),
                          block({"Claimant: Sara Daniels", kBlackpinkClaim, "Answer: None"}),
                          kClaimQuery}),
             verbalizer("True", "False")));
    add(make("pythia-claim-3shot", Mode::ClaimOnly, 3,
             join_blocks({claim_header,
                          block({"Claimant: Joe Biden", kDebtClaim, "Answer: True"}),
                          block({"Claimant: Viral post", "Claim: \"5G causes cancer.\"", "Answer: False"}),
                          block({"Claimant: Sara Daniels", kBlackpinkClaim, "Answer: None"}),
                          kClaimQuery}),
             verbalizer("True", "False")));
    add(make("claim-0shot", Mode::ClaimOnly, 0,
             join_blocks({"Is the following claim True or False? Answer None if you are not sure or cannot answer.",
                          kClaimQuery}),
             verbalizer("True", "False")));

    add(make("llama-evidence-3shot", Mode::ClaimEvidence, 3,
             join_blocks({"Here are some claims and corresponding evidence. Does the evidence Support or Refute "
                          "the claim? Answer None if there is not enough information in the evidence to decide.",
                          block({"Claimant: Joe Biden", kDebtClaim, kDebtEvidence, "Answer: Support"}),
                          block({"Claimant: Viral post", kCovidClaim, kCovidEvidence, "Answer: Refute"}),
                          block({"Claimant: Sara Daniels", kBlackpinkClaim, kBlackpinkEvidence, "Answer: None"}),
                          kEvidenceQuery}),
             verbalizer("Support", "Refute")));
    add(make("pythia-evidence-3shot", Mode::ClaimEvidence, 3,
             join_blocks({"Are the claims True or False based on the accompanying evidence? If you are not sure "
                          "or cannot answer, say None.",
                          block({"Claimant: Joe Biden", kDebtClaim, kDebtEvidence, "Answer: True"}),
                          block({"Claimant: Viral post", kCovidClaim, kCovidEvidence, "Answer: False"}),
                          block({"Claimant: Sara Daniels", kBlackpinkClaim, kBlackpinkEvidence, "Answer: None"}),
                          kEvidenceQuery}),
             verbalizer("True", "False")));
    add(make("evidence-0shot", Mode::ClaimEvidence, 0,
             join_blocks({"Based on the provided evidence, is the claim True or False? If you are not sure or "
                          "cannot answer, say None.",
                          kEvidenceQuery}),
             verbalizer("True", "False")));
    return out;
}

bool has_slot(const std::string& body, std::string_view slot) { return body.find(slot) != std::string::npos; }

}  // namespace

void PromptTemplate::validate() const {
    if (id.empty()) throw InvariantViolation("id", "prompt template needs an id");
    if (!has_slot(body, "<claim>")) throw InvariantViolation("body", id + ": missing <claim> slot");
    const bool evidence_slot = has_slot(body, "<evidence>");
    if ((mode == Mode::ClaimEvidence) != evidence_slot) {
        throw InvariantViolation("body", id + ": <evidence> slot must appear iff mode is claim+evidence");
    }
    if (shots < 0) throw InvariantViolation("shots", id + ": negative shot count");
    std::set<Label> covered;
    for (const auto& [surface, label] : verbalizer_map) {
        if (surface.empty()) throw InvariantViolation("verbalizer_map", id + ": empty surface label");
        covered.insert(label);
    }
    if (covered.size() != 3) {
        throw InvariantViolation("verbalizer_map", id + ": must cover True, None and False");
    }
}

std::vector<std::string> PromptTemplate::surface_labels() const {
    std::vector<std::string> out;
    for (const auto& [surface, label] : verbalizer_map) out.push_back(surface);
    return out;
}

const std::map<std::string, PromptTemplate>& builtin_templates() {
    static const auto templates = build_builtins();
    return templates;
}

PromptTemplate builtin_template(const std::string& id, bool include_claimant) {
    const auto& all = builtin_templates();
    auto it = all.find(id);
    if (it == all.end()) throw ConfigError("unknown prompt template '" + id + "'");
    PromptTemplate t = it->second;
    t.include_claimant = include_claimant;
    return t;
}

PromptTemplate load_template(const std::filesystem::path& txt_path) {
    std::ifstream body_in(txt_path, std::ios::binary);
    if (!body_in) throw ConfigError("cannot open prompt template " + txt_path.string());
    std::ostringstream body;
    body << body_in.rdbuf();

    auto sidecar_path = txt_path;
    sidecar_path.replace_extension(".json");
    std::ifstream meta_in(sidecar_path);
    if (!meta_in) throw ConfigError("prompt template " + txt_path.string() + " lacks a JSON sidecar");
    Json meta;
    try {
        meta = Json::parse(meta_in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(sidecar_path.string() + ": " + e.what());
    }

    PromptTemplate t;
    t.body = body.str();
    while (!t.body.empty() && (t.body.back() == '\n' || t.body.back() == '\r')) t.body.pop_back();
    t.id = meta.value("id", txt_path.stem().string());
    t.mode = parse_mode(meta.at("mode").get<std::string>());
    t.shots = meta.value("shots", 0);
    t.include_claimant = meta.value("include_claimant", true);
    for (const auto& [surface, label] : meta.at("verbalizer_map").items()) {
        t.verbalizer_map.emplace(surface, parse_label(label.get<std::string>()));
    }
    t.validate();
    return t;
}

std::string render_prompt(const PromptTemplate& tmpl, const ClaimRecord& claim,
                          const std::optional<std::string>& evidence) {
    if (claim.text.empty()) throw MissingSlotValue("claim text is empty");
    if (tmpl.mode == Mode::ClaimEvidence && !evidence) {
        throw MissingSlotValue(tmpl.id + ": claim+evidence template needs evidence");
    }
    if (tmpl.mode == Mode::ClaimOnly && evidence) {
        throw InvariantViolation("evidence", tmpl.id + ": claim-only template takes no evidence");
    }
    if (tmpl.include_claimant && (!claim.claimant || claim.claimant->empty())) {
        throw MissingSlotValue(tmpl.id + ": claimant required but claim " + claim.id + " has none");
    }

    // Drop claimant lines first, then substitute in one left-to-right pass so
    // slot-like text inside the values is never expanded.
    std::string body;
    std::istringstream lines(tmpl.body);
    std::string line;
    bool first = true;
    while (std::getline(lines, line)) {
        if (!tmpl.include_claimant && line.rfind("Claimant:", 0) == 0) continue;
        if (!first) body += '\n';
        body += line;
        first = false;
    }

    const std::pair<std::string_view, std::string> slots[] = {
        {"<claimant>", claim.claimant.value_or("")},
        {"<claim>", claim.text},
        {"<evidence>", evidence.value_or("")},
    };
    std::string out;
    out.reserve(body.size() + claim.text.size() + (evidence ? evidence->size() : 0));
    std::size_t pos = 0;
    while (pos < body.size()) {
        bool matched = false;
        if (body[pos] == '<') {
            for (const auto& [slot, value] : slots) {
                if (body.compare(pos, slot.size(), slot) == 0) {
                    out += value;
                    pos += slot.size();
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) out += body[pos++];
    }
    return out;
}

std::string external_source_prompt(std::string_view text) {
    return "Does the following text refer to an external source or not? Admissible external sources are for "
           "example 'a study', '[1]', 'the BBC', a news channel etc. Answer with a 'Yes' or 'No'.\n\nText: " +
           std::string(text);
}

}  // namespace ctxuse::lm
