#include "ctxuse/cli.hpp"

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "ctxuse/analysis.hpp"
#include "ctxuse/characteristics.hpp"
#include "ctxuse/clients.hpp"
#include "ctxuse/hash.hpp"
#include "ctxuse/ingest.hpp"
#include "ctxuse/lm.hpp"
#include "ctxuse/metrics.hpp"
#include "ctxuse/pool.hpp"
#include "ctxuse/replay.hpp"
#include "ctxuse/retrieval.hpp"

#ifndef CTXUSE_DATA_DIR
#define CTXUSE_DATA_DIR "data"
#endif

namespace ctxuse::cli {

namespace fs = std::filesystem;

namespace {

/// Module error tagged with the sample it happened on.
class SampleFailure : public Error {
public:
    SampleFailure(const Error& inner, std::string sample_id)
        : Error(inner.code(), inner.what()), sample_id_(std::move(sample_id)) {}
    const std::string& sample_id() const noexcept { return sample_id_; }

private:
    std::string sample_id_;
};

template <typename F>
auto for_sample(const std::string& sample_id, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const SampleFailure&) {
        throw;
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw SampleFailure(e, sample_id);
    }
}

// ---------------------------------------------------------------------------
// Config helpers

struct Context {
    Json config = Json::object();
    fs::path base_dir;
    fs::path run_dir;
    std::string command;
    AcuForm acu_form = AcuForm::Sum;
    std::size_t workers = 1;
    std::uint64_t seed = 0;
    std::vector<std::string> outputs;

    Json header() const { return output_header(config, command); }

    const Json& section(const char* name) const {
        static const Json empty = Json::object();
        auto it = config.find(name);
        return it == config.end() || it->is_null() ? empty : *it;
    }

    fs::path resolve(const std::string& p) const {
        fs::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    }

    std::optional<fs::path> path_at(const Json& sec, const char* key) const {
        auto it = sec.find(key);
        if (it == sec.end() || it->is_null()) return std::nullopt;
        if (!it->is_string()) throw ConfigError(std::string(key) + " must be a path string");
        return resolve(it->get<std::string>());
    }

    fs::path required_path(const Json& sec, const char* key, const char* what) const {
        auto p = path_at(sec, key);
        if (!p) throw ConfigError(std::string(what) + " requires '" + key + "'");
        return *p;
    }

    fs::path output(const std::string& name) {
        outputs.push_back(name);
        return run_dir / name;
    }
};

std::string get_string(const Json& sec, const char* key, const std::string& fallback = {}) {
    auto it = sec.find(key);
    if (it == sec.end() || it->is_null()) return fallback;
    if (!it->is_string()) throw ConfigError(std::string(key) + " must be a string");
    return it->get<std::string>();
}

template <typename T>
T get_number(const Json& sec, const char* key, T fallback) {
    auto it = sec.find(key);
    if (it == sec.end() || it->is_null()) return fallback;
    if (!it->is_number()) throw ConfigError(std::string(key) + " must be a number");
    return it->get<T>();
}

bool get_bool(const Json& sec, const char* key, bool fallback) {
    auto it = sec.find(key);
    if (it == sec.end() || it->is_null()) return fallback;
    if (!it->is_boolean()) throw ConfigError(std::string(key) + " must be a boolean");
    return it->get<bool>();
}

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << body;
}

void write_jsonl(const fs::path& path, const Json& header, const std::vector<Json>& records) {
    std::string body = encode_line(Json{{"header", header}}) + "\n";
    for (const auto& r : records) body += encode_line(r) + "\n";
    write_text(path, body);
}

void write_json(const fs::path& path, const Json& header, const Json& payload) {
    Json doc = Json::object();
    doc["header"] = header;
    for (const auto& [k, v] : payload.items()) doc[k] = v;
    write_text(path, doc.dump(2) + "\n");
}

void write_csv(const fs::path& path, const Json& header, const std::string& csv) {
    std::string line = "#";
    for (const auto& [k, v] : header.items()) line += " " + k + "=" + (v.is_string() ? v.get<std::string>() : v.dump());
    write_text(path, line + "\n" + csv);
}

std::string compact_utc() {
    std::string ts = utc_timestamp();  // YYYY-MM-DDTHH:MM:SSZ
    std::string out;
    for (char c : ts) {
        if (c != '-' && c != ':') out += c;
    }
    return out;
}

fs::path make_run_dir(const fs::path& out_root, const std::string& hash) {
    const std::string stem = compact_utc() + "-" + hash.substr(0, 8);
    fs::path dir = out_root / stem;
    for (int i = 1; fs::exists(dir); ++i) dir = out_root / (stem + "-" + std::to_string(i));
    fs::create_directories(dir);
    return dir;
}

// ---------------------------------------------------------------------------
// Data loading

ingest::LoadOptions load_options(const Context& ctx) {
    const auto& data = ctx.section("data");
    ingest::LoadOptions opts;
    if (auto p = ctx.path_at(data, "verdict_mapping")) opts.verdicts = ingest::VerdictMappingTable::load(*p);
    if (auto p = ctx.path_at(data, "field_mapping")) opts.fields = ingest::MappingConfig::load(*p);
    if (auto it = data.find("sources"); it != data.end() && it->is_array()) {
        std::set<std::string> ids = SourceRegistry::defaults().ids();
        for (const auto& s : *it) ids.insert(s.get<std::string>());
        opts.sources = SourceRegistry(ids);
    }
    return opts;
}

ingest::Corpus load_corpus(const Context& ctx, const char* what) {
    const auto& data = ctx.section("data");
    return ingest::load_druid(ctx.required_path(data, "claims", what), ctx.required_path(data, "evidence", what),
                              load_options(ctx));
}

std::vector<ClaimRecord> load_claims(const Context& ctx, const char* what) {
    const auto& data = ctx.section("data");
    const auto path = ctx.required_path(data, "claims", what);
    const auto sources = load_options(ctx).sources;
    std::vector<ClaimRecord> claims;
    for (const auto& j : read_jsonl(path)) {
        claims.push_back(claim_from_json(j));
        validate(claims.back(), sources);
    }
    return claims;
}

std::shared_ptr<ReplayStore> open_store(const Context& ctx, ReplayMode& mode) {
    const auto& rp = ctx.section("replay");
    mode = parse_replay_mode(get_string(rp, "mode", "passthrough"));
    if (mode == ReplayMode::Passthrough) return nullptr;
    const auto path = ctx.path_at(rp, "path");
    if (!path) throw ConfigError("replay mode '" + std::string(to_string(mode)) + "' requires a store path");
    return std::make_shared<ReplayStore>(*path, mode == ReplayMode::Record);
}

lm::ProviderConfig provider_config(const Context& ctx, const Json& sec) {
    lm::ProviderConfig cfg;
    cfg.endpoint.url = get_string(sec, "endpoint");
    cfg.endpoint.api_key_env = get_string(sec, "api_key_env");
    cfg.endpoint.timeout = std::chrono::milliseconds(get_number<long long>(sec, "timeout_ms", 30000));
    cfg.model = get_string(sec, "model");
    cfg.max_concurrency = get_number<int>(sec, "max_concurrency", static_cast<int>(ctx.workers));
    cfg.top_logprobs = get_number<int>(sec, "top_logprobs", 20);
    return cfg;
}

std::string provider_id(const Json& sec, const std::string& fallback) {
    auto id = get_string(sec, "id");
    if (id.empty()) id = get_string(sec, "model");
    return id.empty() ? fallback : id;
}

/// Owns whatever provider stack the config asks for.
struct Providers {
    std::unique_ptr<lm::HttpLmProvider> http_lm;
    std::unique_ptr<lm::HttpJudgementProvider> http_judge;
    std::unique_ptr<lm::ReplayProvider> lm_replay;
    std::unique_ptr<lm::ReplayProvider> judge_replay;
    lm::LmProvider* lm = nullptr;
    lm::JudgementProvider* judge = nullptr;
};

Providers make_providers(const Context& ctx, bool need_lm, bool need_judge) {
    Providers p;
    ReplayMode mode;
    auto store = open_store(ctx, mode);
    const auto& lm_sec = ctx.section("provider");
    const auto& judge_sec = ctx.section("judge");

    if (need_lm) {
        const bool has_endpoint = !get_string(lm_sec, "endpoint").empty();
        if (mode != ReplayMode::Replay && !has_endpoint) {
            throw ConfigError("no language-model provider endpoint and no replay store configured");
        }
        if (mode != ReplayMode::Replay) p.http_lm = std::make_unique<lm::HttpLmProvider>(provider_config(ctx, lm_sec));
        if (mode == ReplayMode::Passthrough) {
            p.lm = p.http_lm.get();
        } else {
            // Replay never builds an HTTP client, so it cannot touch the network.
            p.lm_replay = std::make_unique<lm::ReplayProvider>(store, mode, provider_id(lm_sec, "default"),
                                                               p.http_lm.get(), nullptr);
            p.lm = p.lm_replay.get();
        }
    }
    if (need_judge) {
        const bool has_endpoint = !get_string(judge_sec, "endpoint").empty();
        if (mode != ReplayMode::Replay && !has_endpoint) {
            throw ConfigError("external-source detection needs a judge endpoint or a replay store");
        }
        if (mode != ReplayMode::Replay) {
            p.http_judge = std::make_unique<lm::HttpJudgementProvider>(provider_config(ctx, judge_sec));
        }
        if (mode == ReplayMode::Passthrough) {
            p.judge = p.http_judge.get();
        } else {
            p.judge_replay = std::make_unique<lm::ReplayProvider>(store, mode, provider_id(judge_sec, "judge"),
                                                                  nullptr, p.http_judge.get());
            p.judge = p.judge_replay.get();
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Commands

struct CommandArgs {
    std::string claims, evidence, verdict_mapping, field_mapping, claim_prompt, evidence_prompt, annotations;
    std::vector<std::string> inputs, scored, characteristics, runs;
    std::size_t sample = 0;
    std::string pivot;
};

Json cmd_ingest(Context& ctx, const CommandArgs& args) {
    auto corpus = load_corpus(ctx, "ingest");
    Json summary = Json::object();
    summary["claims"] = corpus.claims.size();
    summary["evidence"] = corpus.evidence.size();
    summary["dropped_claims"] = corpus.dropped_claims;
    summary["dropped_evidence"] = corpus.dropped_evidence;

    if (args.sample > 0) {
        const Date pivot = args.pivot.empty() ? Date{std::chrono::year{2023}, std::chrono::January, std::chrono::day{1}}
                                              : parse_date(args.pivot);
        auto sampled = ingest::stratified_sample(corpus.claims, args.sample, pivot, ctx.seed);
        write_json(ctx.output("sample_report.json"), ctx.header(), ingest::to_json(sampled.report));
        std::set<std::string> keep;
        for (const auto& c : sampled.claims) keep.insert(c.id);
        std::erase_if(corpus.evidence, [&](const EvidencePiece& e) { return !keep.count(e.claim_id); });
        corpus.claims = std::move(sampled.claims);
        summary["sampled_claims"] = corpus.claims.size();
    }

    std::vector<Json> claims, evidence;
    for (const auto& c : corpus.claims) claims.push_back(to_json(c));
    for (const auto& e : corpus.evidence) evidence.push_back(to_json(e));
    write_jsonl(ctx.output("claims.jsonl"), ctx.header(), claims);
    write_jsonl(ctx.output("evidence.jsonl"), ctx.header(), evidence);
    write_json(ctx.output("stats.json"), ctx.header(), ingest::to_json(ingest::corpus_stats(corpus)));
    return summary;
}

Json cmd_recast(Context& ctx, const CommandArgs&) {
    const auto& rc = ctx.section("recast");
    ingest::MappingConfig mapping;
    if (auto p = ctx.path_at(rc, "field_mapping")) mapping = ingest::MappingConfig::load(*p);
    auto it = rc.find("inputs");
    if (it == rc.end() || !it->is_array() || it->empty()) throw ConfigError("recast requires at least one input");

    std::vector<Json> claims, evidence;
    Json per_input = Json::array();
    for (const auto& input : *it) {
        const auto kind = get_string(input, "kind");
        const auto path = ctx.required_path(input, "path", "recast input");
        const ingest::FieldMapping& fields = kind == "counterfact" ? mapping.counterfact
                                             : kind == "conflictqa" ? mapping.conflictqa
                                                                    : ingest::FieldMapping{};
        const auto result = ingest::recast_file(path, fields);
        for (const auto& s : result.samples) {
            claims.push_back(to_json(s.claim));
            evidence.push_back(to_json(s.supporting));
            evidence.push_back(to_json(s.refuting));
        }
        per_input.push_back(Json{{"path", path.string()}, {"samples", result.samples.size()}, {"skipped", result.skipped}});
    }
    write_jsonl(ctx.output("claims.jsonl"), ctx.header(), claims);
    write_jsonl(ctx.output("evidence.jsonl"), ctx.header(), evidence);
    write_json(ctx.output("recast_report.json"), ctx.header(), Json{{"inputs", per_input}});
    return Json{{"claims", claims.size()}, {"evidence", evidence.size()}};
}

Json cmd_retrieve(Context& ctx, const CommandArgs&) {
    const auto claims = load_claims(ctx, "retrieve");
    const auto& rc = ctx.section("retrieval");
    const auto retry = RetryPolicy{};

    std::vector<std::unique_ptr<retrieval::SearchClient>> engines;
    if (auto dir = ctx.path_at(rc, "fixture_dir")) engines.push_back(std::make_unique<retrieval::FixtureSearchClient>(*dir));
    if (auto it = rc.find("engines"); it != rc.end()) {
        for (const auto& e : *it) {
            HttpEndpoint ep{get_string(e, "endpoint"), get_string(e, "api_key_env"),
                            std::chrono::milliseconds(get_number<long long>(e, "timeout_ms", 30000))};
            engines.push_back(std::make_unique<retrieval::HttpSearchClient>(ep, get_string(e, "name", "web"), retry));
        }
    }
    if (engines.empty()) throw ConfigError("retrieve needs a fixture_dir or at least one search engine");
    std::vector<retrieval::SearchClient*> engine_ptrs;
    for (auto& e : engines) engine_ptrs.push_back(e.get());

    retrieval::HttpPageFetcher fetcher(std::chrono::milliseconds(get_number<long long>(rc, "fetch_timeout_ms", 30000)));

    const auto& rr = rc.contains("reranker") ? rc["reranker"] : Json::object();
    std::unique_ptr<retrieval::RerankClient> base;
    if (get_string(rr, "kind", "lexical") == "http") {
        HttpEndpoint ep{get_string(rr, "endpoint"), get_string(rr, "api_key_env"),
                        std::chrono::milliseconds(get_number<long long>(rr, "timeout_ms", 30000))};
        base = std::make_unique<retrieval::HttpRerankClient>(ep, get_string(rr, "model"), retry);
    } else {
        base = std::make_unique<retrieval::LexicalRerankClient>();
    }
    ReplayMode mode;
    auto store = open_store(ctx, mode);
    std::unique_ptr<retrieval::RerankClient> replay;
    retrieval::RerankClient* reranker = base.get();
    if (mode != ReplayMode::Passthrough) {
        replay = std::make_unique<retrieval::ReplayRerankClient>(mode == ReplayMode::Replay ? nullptr : base.get(),
                                                                 store, mode, base->id());
        reranker = replay.get();
    }

    retrieval::PipelineConfig pc;
    pc.top_n = get_number<std::size_t>(rc, "top_n", pc.top_n);
    pc.pages = get_number<std::size_t>(rc, "pages", pc.pages);
    pc.min_preclaim = get_number<std::size_t>(rc, "min_preclaim", pc.min_preclaim);
    pc.repeat_threshold = get_number<double>(rc, "repeat_threshold", pc.repeat_threshold);
    pc.assemble.top_chunks = get_number<std::size_t>(rc, "top_chunks", pc.assemble.top_chunks);
    pc.assemble.max_words = get_number<std::size_t>(rc, "max_evidence_words", pc.assemble.max_words);
    pc.assemble.separator = get_string(rc, "separator", pc.assemble.separator);
    if (auto it = rc.find("fact_check_domains"); it != rc.end()) {
        pc.assemble.fact_check_domains = it->get<std::vector<std::string>>();
    }

    // Engines and fetcher are stateless per call; the pool only bounds how many
    // claims are in flight.
    const auto results = parallel_map(claims.size(), ctx.workers, [&](std::size_t i) {
        return for_sample(claims[i].id, [&] {
            return retrieval::run_pipeline(claims[i], engine_ptrs, &fetcher, *reranker, pc);
        });
    });

    std::vector<Json> evidence, traces;
    std::size_t shortfalls = 0;
    for (const auto& r : results) {
        for (const auto& e : r.evidence) evidence.push_back(to_json(e));
        traces.push_back(r.trace);
        shortfalls += r.selection.shortfall > 0;
    }
    write_jsonl(ctx.output("evidence.jsonl"), ctx.header(), evidence);
    write_jsonl(ctx.output("traces.jsonl"), ctx.header(), traces);
    return Json{{"claims", claims.size()}, {"evidence", evidence.size()}, {"claims_with_preclaim_shortfall", shortfalls}};
}

Json cmd_profile(Context& ctx, const CommandArgs&) {
    const auto corpus = load_corpus(ctx, "profile");
    const auto& dc = ctx.section("detectors");

    std::optional<characteristics::HedgeLexicon> hedges;
    const fs::path data_dir = CTXUSE_DATA_DIR;
    auto hedge_path = ctx.path_at(dc, "hedge_words").value_or(data_dir / "hedge_words.txt");
    auto marker_path = ctx.path_at(dc, "discourse_markers").value_or(data_dir / "hedging_discourse_markers.txt");
    if (get_bool(dc, "hedging", true)) hedges = characteristics::HedgeLexicon::load(hedge_path, marker_path);

    std::optional<characteristics::ReliabilityList> reliability;
    if (auto p = ctx.path_at(dc, "reliability")) reliability = characteristics::ReliabilityList::load(*p);

    characteristics::HeuristicEntityProvider entities;
    const bool want_judge = get_bool(dc, "external_source", false);
    const bool want_ppl = get_bool(dc, "perplexity", false);
    auto providers = make_providers(ctx, want_ppl, want_judge);

    characteristics::Detectors det;
    det.hedges = hedges ? &*hedges : nullptr;
    det.reliability = reliability ? &*reliability : nullptr;
    det.entities = get_bool(dc, "entities", true) ? &entities : nullptr;
    det.judge = providers.judge;
    det.perplexity = providers.lm;
    det.perplexity_model = get_string(dc, "perplexity_model");

    const auto outcomes = parallel_map(corpus.evidence.size(), ctx.workers, [&](std::size_t i) {
        const auto& e = corpus.evidence[i];
        return for_sample(e.id, [&] { return characteristics::characterize(*corpus.find_claim(e.claim_id), e, det); });
    });

    std::vector<Json> rows;
    for (const auto& o : outcomes) {
        Json j = to_json(o.vector);
        if (!o.errors.empty()) {
            Json errs = Json::object();
            for (const auto& [k, v] : o.errors) errs[k] = v;
            j["errors"] = errs;
        }
        rows.push_back(std::move(j));
    }
    write_jsonl(ctx.output("characteristics.jsonl"), ctx.header(), rows);
    write_json(ctx.output("profile.json"), ctx.header(),
               Json{{"summary", characteristics::summarize(outcomes, det.perplexity_model)}});
    return Json{{"samples", outcomes.size()}};
}

lm::PromptTemplate resolve_template(const Context& ctx, const std::string& id_or_path) {
    if (lm::builtin_templates().count(id_or_path)) return lm::builtin_template(id_or_path);
    const auto path = ctx.resolve(id_or_path);
    if (fs::exists(path)) return lm::load_template(path);
    throw ConfigError("unknown prompt template '" + id_or_path + "'");
}

Json cmd_score(Context& ctx, const CommandArgs&) {
    const auto& pc = ctx.section("prompts");
    const auto claim_tmpl = resolve_template(ctx, get_string(pc, "claim_only", "llama-claim-3shot"));
    const auto evidence_tmpl = resolve_template(ctx, get_string(pc, "with_evidence", "llama-evidence-3shot"));
    if (claim_tmpl.mode != Mode::ClaimOnly || evidence_tmpl.mode != Mode::ClaimEvidence) {
        throw ConfigError("prompt templates do not match their modes");
    }
    // "auto" keeps claimant lines only for claims that have a claimant.
    std::optional<bool> include_claimant;
    if (auto it = pc.find("include_claimant"); it != pc.end() && it->is_boolean()) include_claimant = it->get<bool>();

    auto providers = make_providers(ctx, true, false);
    const auto corpus = load_corpus(ctx, "score");
    const auto groups = corpus.grouped();
    const std::string model_id = provider_id(ctx.section("provider"), "default");

    auto per_claim = parallel_map(groups.size(), ctx.workers, [&](std::size_t g) {
        const auto& [claim, evidences] = groups[g];
        auto t_claim = claim_tmpl;
        auto t_evidence = evidence_tmpl;
        const bool with_claimant = include_claimant.value_or(claim->claimant.has_value() && !claim->claimant->empty());
        t_claim.include_claimant = t_evidence.include_claimant = with_claimant;

        const auto without = for_sample(claim->id, [&] {
            return lm::verdict_probabilities(*providers.lm, lm::render_prompt(t_claim, *claim), t_claim);
        });
        std::vector<ScoredSample> out;
        for (const auto* e : evidences) {
            out.push_back(for_sample(e->id, [&] {
                const auto with = lm::verdict_probabilities(*providers.lm, lm::render_prompt(t_evidence, *claim, e->text),
                                                            t_evidence);
                return metrics::score_sample(claim->id, e->id, e->stance, without, with, ctx.acu_form, model_id,
                                             t_claim.id + "+" + t_evidence.id);
            }));
        }
        return out;
    });

    std::vector<Json> rows;
    std::size_t degenerate = 0;
    for (const auto& group : per_claim) {
        for (const auto& s : group) {
            degenerate += s.degenerate;
            rows.push_back(to_json(s));
        }
    }
    write_jsonl(ctx.output("scored.jsonl"), ctx.header(), rows);
    return Json{{"scored", rows.size()}, {"degenerate", degenerate}};
}

std::pair<std::string, fs::path> named_path(const Context& ctx, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) return {"dataset", ctx.resolve(spec)};
    return {spec.substr(0, eq), ctx.resolve(spec.substr(eq + 1))};
}

Json cmd_analyze(Context& ctx, const CommandArgs&) {
    const auto& ac = ctx.section("analysis");
    auto it = ac.find("datasets");
    if (it == ac.end() || !it->is_array() || it->empty()) throw ConfigError("analyze requires at least one dataset");

    std::vector<analysis::GridDataset> datasets;
    bool any_characteristics = false;
    for (const auto& d : *it) {
        analysis::GridDataset ds;
        ds.name = get_string(d, "name", "dataset");
        for (const auto& j : read_jsonl(ctx.required_path(d, "scored", "analyze dataset"))) {
            ds.scored.push_back(scored_from_json(j));
        }
        if (auto p = ctx.path_at(d, "characteristics")) {
            any_characteristics = true;
            for (const auto& j : read_jsonl(*p)) ds.characteristics.push_back(characteristics_from_json(j));
        }
        for (const auto& s : ds.scored) {
            if (s.acu_form != ctx.acu_form) {
                throw ConfigError("dataset " + ds.name + " was scored in " + std::string(to_string(s.acu_form)) +
                                  " form but the run uses " + std::string(to_string(ctx.acu_form)));
            }
        }
        datasets.push_back(std::move(ds));
    }

    Json stratified = Json::object(), shifts = Json::object();
    for (const auto& ds : datasets) {
        stratified[ds.name] = analysis::to_json(analysis::stratified_acu(ds.scored));
        std::vector<Label> before, after;
        std::vector<Stance> stances;
        for (const auto& s : ds.scored) {
            if (!s.stance) continue;
            before.push_back(s.probs_without.argmax());
            after.push_back(s.probs_with.argmax());
            stances.push_back(*s.stance);
        }
        shifts[ds.name] = analysis::to_json(analysis::prediction_shift(before, after, stances));
    }
    write_json(ctx.output("stratified_acu.json"), ctx.header(), Json{{"datasets", stratified}});
    write_json(ctx.output("prediction_shift.json"), ctx.header(), Json{{"datasets", shifts}});

    if (any_characteristics) {
        const auto grid = analysis::correlation_grid(datasets, get_string(ac, "perplexity_model"));
        write_csv(ctx.output("correlations.csv"), ctx.header(), analysis::grid_csv(grid));
        write_json(ctx.output("correlations.json"), ctx.header(), analysis::to_json(grid));
    }

    if (auto p = ctx.path_at(ac, "annotations")) {
        std::vector<EvidencePiece> ev;
        for (const auto& j : read_jsonl(*p)) ev.push_back(evidence_from_json(j));
        Json agreement = Json::object();
        auto alpha = [&](const Eigen::MatrixXd& m, analysis::AlphaMetric metric) -> Json {
            try {
                return analysis::krippendorff_alpha(m, metric);
            } catch (const NoPairableValues&) {
                return nullptr;
            }
        };
        const auto stance = analysis::stance_annotations(ev);
        const auto relevance = analysis::relevance_annotations(ev);
        agreement["stance"] = Json{{"nominal", alpha(stance, analysis::AlphaMetric::Nominal)},
                                   {"ordinal", alpha(stance, analysis::AlphaMetric::Ordinal)}};
        agreement["relevance"] = Json{{"nominal", alpha(relevance, analysis::AlphaMetric::Nominal)}};
        write_json(ctx.output("agreement.json"), ctx.header(), agreement);
    }
    return Json{{"datasets", datasets.size()}};
}

Json cmd_report(Context& ctx, const CommandArgs& args) {
    if (args.runs.empty()) throw ConfigError("report needs at least one --run directory");
    Json runs = Json::object();
    std::string summary_csv = "run,dataset,stance,n,mean,std\n";
    for (const auto& r : args.runs) {
        const fs::path dir = ctx.resolve(r);
        if (!fs::is_directory(dir)) throw ConfigError("not a run directory: " + dir.string());
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        Json contents = Json::object();
        for (const auto& f : files) {
            const auto ext = f.extension().string();
            if (ext == ".jsonl") {
                contents[f.filename().string()] = read_jsonl(f);
            } else if (ext == ".json") {
                std::ifstream in(f);
                contents[f.filename().string()] = Json::parse(in);
            } else if (ext == ".csv") {
                std::ifstream in(f, std::ios::binary);
                contents[f.filename().string()] =
                    std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            }
        }
        const auto run_name = dir.filename().string();
        if (contents.contains("stratified_acu.json")) {
            for (const auto& [ds, body] : contents["stratified_acu.json"]["datasets"].items()) {
                for (const auto& [stance, row] : body["strata"].items()) {
                    summary_csv += run_name + "," + ds + "," + stance + "," + row["n"].dump() + "," +
                                   (row["mean"].is_null() ? "" : row["mean"].dump()) + "," +
                                   (row["std"].is_null() ? "" : row["std"].dump()) + "\n";
                }
            }
        }
        runs[run_name] = contents;
    }
    write_json(ctx.output("bundle.json"), ctx.header(), Json{{"runs", runs}});
    write_csv(ctx.output("summary.csv"), ctx.header(), summary_csv);
    return Json{{"runs", args.runs.size()}};
}

void print_error(std::ostream& err, const std::string& code, const std::string& message,
                 const std::optional<std::string>& sample_id) {
    err << encode_line(Json{{"error", code}, {"message", message},
                            {"sample_id", sample_id ? Json(*sample_id) : Json()}})
        << "\n";
}

}  // namespace

std::string config_hash(const Json& config) {
    Json copy = config;
    if (copy.is_object()) copy.erase("out");
    return sha256_hex(encode_line(copy)).substr(0, 16);
}

Json output_header(const Json& config, std::string_view command) {
    Json h = Json::object();
    h["tool"] = std::string(kToolName);
    h["version"] = std::string(kVersion);
    h["command"] = std::string(command);
    h["config_hash"] = config_hash(config);
    h["acu_form"] = config.value("acu_form", std::string("sum"));
    return h;
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::vector<Json> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw ParseError(line_no, path.string() + ": " + e.what());
        }
        if (j.is_object() && j.size() == 1 && j.contains("header")) continue;
        out.push_back(std::move(j));
    }
    return out;
}

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Measures how retrieved evidence shifts language-model verdicts on fact-checked claims.",
                 std::string(kToolName)};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, replay_path, record_path, acu_form, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> max_concurrency;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--replay", replay_path, "serve provider calls from this store only");
    app.add_option("--record", record_path, "record provider calls into this store");
    app.add_option("--acu-form", acu_form, "ACU normalisation")->check(CLI::IsMember({"mean", "sum"}));
    app.add_option("--out", out_dir, "root directory for run outputs");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--max-concurrency", max_concurrency, "worker pool size")->check(CLI::PositiveNumber);
    auto* replay_opt = app.get_option("--replay");
    app.get_option("--record")->excludes(replay_opt);

    CommandArgs args;
    auto* ingest_cmd = app.add_subcommand("ingest", "load and validate a claim/evidence corpus");
    ingest_cmd->add_option("--claims", args.claims);
    ingest_cmd->add_option("--evidence", args.evidence);
    ingest_cmd->add_option("--verdict-mapping", args.verdict_mapping);
    ingest_cmd->add_option("--field-mapping", args.field_mapping);
    ingest_cmd->add_option("--sample", args.sample, "draw a stratified subset of this many claims");
    ingest_cmd->add_option("--pivot", args.pivot, "date splitting the sampling periods (YYYY-MM-DD)");

    auto* recast_cmd = app.add_subcommand("recast", "convert triplet datasets into claims and evidence");
    recast_cmd->add_option("--input", args.inputs, "[counterfact=|conflictqa=]PATH");
    recast_cmd->add_option("--field-mapping", args.field_mapping);

    auto* retrieve_cmd = app.add_subcommand("retrieve", "collect evidence for claims");
    retrieve_cmd->add_option("--claims", args.claims);

    auto* profile_cmd = app.add_subcommand("profile", "compute context characteristics");
    profile_cmd->add_option("--claims", args.claims);
    profile_cmd->add_option("--evidence", args.evidence);

    auto* score_cmd = app.add_subcommand("score", "prompt in both modes and compute ACU");
    score_cmd->add_option("--claims", args.claims);
    score_cmd->add_option("--evidence", args.evidence);
    score_cmd->add_option("--claim-prompt", args.claim_prompt);
    score_cmd->add_option("--evidence-prompt", args.evidence_prompt);

    auto* analyze_cmd = app.add_subcommand("analyze", "stratified ACU, shift tables, correlations, agreement");
    analyze_cmd->add_option("--scored", args.scored, "[NAME=]PATH of scored.jsonl");
    analyze_cmd->add_option("--characteristics", args.characteristics, "[NAME=]PATH of characteristics.jsonl");
    analyze_cmd->add_option("--annotations", args.annotations, "evidence file with annotator labels");

    auto* report_cmd = app.add_subcommand("report", "merge run directories into one bundle");
    report_cmd->add_option("--run", args.runs, "run directory")->required();

    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        print_error(err, "ConfigError", e.what(), std::nullopt);
        return kExitConfig;
    }

    Context ctx;
    ctx.command = app.get_subcommands().front()->get_name();
    try {
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw ConfigError("cannot open config " + config_path);
            try {
                ctx.config = Json::parse(in);
            } catch (const Json::parse_error& e) {
                throw ConfigError("config: " + std::string(e.what()));
            }
            if (!ctx.config.is_object()) throw ConfigError("config must be a JSON object");
            ctx.base_dir = fs::absolute(fs::path(config_path)).parent_path();
        } else {
            ctx.base_dir = fs::current_path();
        }
        auto& cfg = ctx.config;
        const fs::path cwd = fs::current_path();
        auto abs = [&](const std::string& p) { return fs::absolute(cwd / p).lexically_normal().string(); };
        auto set_path = [&](const char* section, const char* key, const std::string& value) {
            if (!value.empty()) cfg[section][key] = abs(value);
        };

        if (!acu_form.empty()) cfg["acu_form"] = acu_form;
        cfg["acu_form"] = std::string(to_string(parse_acu_form(cfg.value("acu_form", std::string("sum")))));
        if (!out_dir.empty()) cfg["out"] = abs(out_dir);
        if (seed) cfg["seed"] = *seed;
        if (max_concurrency) cfg["max_concurrency"] = *max_concurrency;
        if (!replay_path.empty()) cfg["replay"] = Json{{"path", abs(replay_path)}, {"mode", "replay"}};
        if (!record_path.empty()) cfg["replay"] = Json{{"path", abs(record_path)}, {"mode", "record"}};

        set_path("data", "claims", args.claims);
        set_path("data", "evidence", args.evidence);
        set_path("data", "verdict_mapping", args.verdict_mapping);
        if (ctx.command == "recast") {
            set_path("recast", "field_mapping", args.field_mapping);
            if (!args.inputs.empty()) {
                Json inputs = Json::array();
                for (const auto& spec : args.inputs) {
                    const auto eq = spec.find('=');
                    Json in = Json::object();
                    if (eq != std::string::npos) {
                        in["kind"] = spec.substr(0, eq);
                        in["path"] = abs(spec.substr(eq + 1));
                    } else {
                        in["path"] = abs(spec);
                    }
                    inputs.push_back(in);
                }
                cfg["recast"]["inputs"] = inputs;
            }
        } else {
            set_path("data", "field_mapping", args.field_mapping);
        }
        if (!args.claim_prompt.empty()) cfg["prompts"]["claim_only"] = args.claim_prompt;
        if (!args.evidence_prompt.empty()) cfg["prompts"]["with_evidence"] = args.evidence_prompt;
        if (ctx.command == "analyze" && !args.scored.empty()) {
            std::map<std::string, Json> by_name;
            std::vector<std::string> order;
            for (const auto& spec : args.scored) {
                auto [name, path] = named_path(ctx, spec);
                if (!by_name.count(name)) order.push_back(name);
                by_name[name] = Json{{"name", name}, {"scored", abs(path.string())}};
            }
            for (const auto& spec : args.characteristics) {
                auto [name, path] = named_path(ctx, spec);
                if (!by_name.count(name)) throw ConfigError("characteristics for unknown dataset '" + name + "'");
                by_name[name]["characteristics"] = abs(path.string());
            }
            Json datasets = Json::array();
            for (const auto& n : order) datasets.push_back(by_name[n]);
            cfg["analysis"]["datasets"] = datasets;
        }
        if (!args.annotations.empty()) cfg["analysis"]["annotations"] = abs(args.annotations);

        ctx.acu_form = parse_acu_form(cfg["acu_form"].get<std::string>());
        ctx.seed = cfg.value("seed", std::uint64_t{0});
        const auto hw = std::max(1u, std::thread::hardware_concurrency());
        ctx.workers = cfg.value("max_concurrency", static_cast<std::size_t>(hw));
        if (ctx.workers == 0) throw ConfigError("max_concurrency must be positive");

        const fs::path out_root = cfg.contains("out") ? ctx.resolve(cfg["out"].get<std::string>()) : fs::path("runs");
        ctx.run_dir = make_run_dir(out_root, config_hash(cfg));
        write_text(ctx.run_dir / "config.json", cfg.dump(2) + "\n");

        Json summary;
        if (ctx.command == "ingest") summary = cmd_ingest(ctx, args);
        else if (ctx.command == "recast") summary = cmd_recast(ctx, args);
        else if (ctx.command == "retrieve") summary = cmd_retrieve(ctx, args);
        else if (ctx.command == "profile") summary = cmd_profile(ctx, args);
        else if (ctx.command == "score") summary = cmd_score(ctx, args);
        else if (ctx.command == "analyze") summary = cmd_analyze(ctx, args);
        else summary = cmd_report(ctx, args);

        out << encode_line(Json{{"command", ctx.command},
                                {"run_dir", ctx.run_dir.string()},
                                {"outputs", ctx.outputs},
                                {"summary", summary}})
            << "\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        print_error(err, e.code(), e.what(), std::nullopt);
        return kExitConfig;
    } catch (const SampleFailure& e) {
        print_error(err, e.code(), e.what(), e.sample_id());
        return kExitFailure;
    } catch (const Error& e) {
        print_error(err, e.code(), e.what(), std::nullopt);
        return kExitFailure;
    } catch (const std::exception& e) {
        print_error(err, "InternalError", e.what(), std::nullopt);
        return kExitFailure;
    }
}

}  // namespace ctxuse::cli
